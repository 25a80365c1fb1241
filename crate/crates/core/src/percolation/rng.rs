//! Counter-based randomness.
//!
//! The uniform attached to an edge in a trial is a pure function of
//! `(master_seed, trial, edge_key)`, where the key identifies the lattice edge
//! by its endpoints. Two windows that share a lattice edge therefore see the
//! same uniform for it, and an edge with probability `p` is open iff its
//! uniform is `< p`.

/// Identifier recorded with every estimate.
pub const SEED_RULE: &str = "splitmix64-v1: u = mix(mix(mix(seed) ^ trial) ^ mix(edge-key)) >> 11";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial stream state.
#[inline]
pub fn trial_stream(master_seed: u64, trial: u64) -> u64 {
    mix64(mix64(master_seed) ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Uniform in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn edge_uniform(stream: u64, key: u64) -> f64 {
    let z = mix64(stream ^ mix64(key));
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Key of the lattice edge `{a, b}`, independent of endpoint order.
pub fn edge_key(a: &[i64], b: &[i64]) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut h = mix64(lo.len() as u64);
    for &c in lo.iter().chain(hi) {
        h = mix64(h ^ c as u64);
    }
    h
}

/// Derive an independent seed for a named stage from the master seed.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    mix64(master_seed ^ mix64(tag.wrapping_add(0x5EED)))
}
