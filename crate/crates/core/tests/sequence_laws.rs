use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use trunclab_core::sequence::{Probability, ProbabilitySequence, Support, TruncationLevel};

fn prob(v: f64) -> Probability {
    Probability::new(v).unwrap()
}

/// Random law of any kind, with values on a coarse grid so that ties with
/// `eps` actually happen.
fn random_sequence(rng: &mut StdRng) -> ProbabilitySequence {
    let grid = |rng: &mut StdRng| prob(f64::from(rng.gen_range(0..=10u32)) / 10.0);
    let base = match rng.gen_range(0..4) {
        0 => ProbabilitySequence::constant(grid(rng)),
        1 => {
            let exponent = [-1.5, -0.5, 0.0, 0.5, 1.0, 2.0][rng.gen_range(0..6)];
            ProbabilitySequence::power_law(rng.gen_range(0.0..2.0), exponent).unwrap()
        }
        2 => {
            let support = if rng.gen_bool(0.5) {
                Support::powers(rng.gen_range(2..6)).unwrap()
            } else {
                let n = rng.gen_range(0..12);
                Support::explicit((0..n).map(|_| rng.gen_range(1..400)).collect()).unwrap()
            };
            ProbabilitySequence::lacunary(support, grid(rng), grid(rng))
        }
        _ => {
            let len = rng.gen_range(0..60);
            ProbabilitySequence::table((0..len).map(|_| grid(rng)).collect(), grid(rng))
        }
    };
    if rng.gen_bool(0.3) {
        base.truncate(TruncationLevel::new(rng.gen_range(1..300)).unwrap())
    } else {
        base
    }
}

fn linear_scan(seq: &ProbabilitySequence, eps: f64, lo: u64, hi: u64) -> Option<u64> {
    (lo + 1..=hi).find(|&n| seq.eval(n).unwrap() >= eps)
}

#[test]
fn truncation_law_on_random_triples() {
    let mut rng = StdRng::seed_from_u64(1);
    for _ in 0..1000 {
        let seq = random_sequence(&mut rng);
        let level = rng.gen_range(1..500);
        let n = rng.gen_range(1..1000);
        let cut = seq.truncate(TruncationLevel::new(level).unwrap());
        let expected = if n <= level { seq.eval(n).unwrap() } else { 0.0 };
        assert_eq!(cut.eval(n).unwrap(), expected, "{seq:?} N = {level} n = {n}");
    }
}

#[test]
fn scan_support_matches_linear_scan() {
    let mut rng = StdRng::seed_from_u64(2);
    for _ in 0..1000 {
        let seq = random_sequence(&mut rng);
        let eps = f64::from(rng.gen_range(0..=10u32)) / 10.0;
        let lo = rng.gen_range(0..300);
        let hi = lo + rng.gen_range(1..700);
        assert_eq!(
            seq.scan_support(prob(eps), lo, hi).unwrap(),
            linear_scan(&seq, eps, lo, hi),
            "{seq:?} eps = {eps} range ({lo}, {hi}]"
        );
    }
}

fn any_sequence() -> impl Strategy<Value = ProbabilitySequence> {
    any::<u64>().prop_map(|seed| random_sequence(&mut StdRng::seed_from_u64(seed)))
}

proptest! {
    #[test]
    fn eval_is_a_deterministic_probability(seq in any_sequence(), n in 1u64..100_000) {
        let v = seq.eval(n).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, seq.eval(n).unwrap());
    }

    #[test]
    fn truncation_is_idempotent(seq in any_sequence(), level in 1u64..400, n in 1u64..800) {
        let level = TruncationLevel::new(level).unwrap();
        let once = seq.truncate(level);
        let twice = once.truncate(level);
        prop_assert_eq!(once.eval(n).unwrap(), twice.eval(n).unwrap());
    }

    #[test]
    fn truncation_is_monotone_in_level(seq in any_sequence(), a in 1u64..400, b in 1u64..400, n in 1u64..800) {
        let (lo, hi) = (a.min(b), a.max(b));
        let small = seq.truncate(TruncationLevel::new(lo).unwrap());
        let large = seq.truncate(TruncationLevel::new(hi).unwrap());
        prop_assert!(small.eval(n).unwrap() <= large.eval(n).unwrap());
    }
}
