//! Finite-window bond percolation: sampling, clustering and estimators.

mod rng;
mod union_find;
mod window;

use core::fmt;

use serde::Serialize;

pub use rng::{derive_seed, edge_key, edge_uniform, mix64, trial_stream, SEED_RULE};
pub use union_find::UnionFind;
pub use window::{
    ClusterState, Event, Extent, GraphWindow, Interior, LatticeFamily, WindowEdge, WindowFamily, WindowSpec,
};

use crate::exec::TrialExecutor;
use crate::sequence::Probability;

/// Largest edge count accepted by [`exact_event_probability`].
pub const MAX_EXACT_EDGES: usize = 22;

#[derive(Clone, Debug, PartialEq)]
pub enum PercolationError {
    Config(&'static str),
    OriginOutside,
    TooLarge { edges: usize, max: usize },
    NoTrials,
}

impl fmt::Display for PercolationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "invalid window: {msg}"),
            Self::OriginOutside => write!(f, "origin is not a vertex of the window"),
            Self::TooLarge { edges, max } => {
                write!(f, "{edges} edges exceed the enumeration bound of {max}")
            }
            Self::NoTrials => write!(f, "at least one trial is required"),
        }
    }
}

impl core::error::Error for PercolationError {}

/// Monte Carlo point estimate with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub successes: u64,
    pub trials: u64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub master_seed: u64,
    pub seed_rule: &'static str,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64, master_seed: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let value = successes as f64 / trials as f64;
        Self {
            value,
            successes,
            trials,
            half_width: 1.96 * libm::sqrt(value * (1.0 - value) / trials as f64),
            master_seed,
            seed_rule: SEED_RULE,
        }
    }

    /// Binomial standard error `sqrt(v (1 - v) / n)`.
    pub fn std_error(&self) -> f64 {
        self.half_width / 1.96
    }
}

/// Fraction of trials in which `event` holds.
pub fn event_estimate<E: TrialExecutor>(
    window: &GraphWindow,
    event: Event,
    trials: u64,
    master_seed: u64,
    exec: &E,
) -> Result<Estimate, PercolationError> {
    if trials == 0 {
        return Err(PercolationError::NoTrials);
    }
    window.check_event(event)?;
    let hits = exec.count_successes(trials, |t| {
        let mut uf = window.sample_forest(master_seed, t);
        window.event_holds(&mut uf, event)
    });
    Ok(Estimate::from_counts(hits, trials, master_seed))
}

/// Probability of a left-right crossing of the `(L + 2) x (L + 1)` box of
/// `family` (confined slab axes at full thickness).
pub fn crossing_estimate<E: TrialExecutor>(
    family: LatticeFamily,
    p: Probability,
    l: u32,
    trials: u64,
    master_seed: u64,
    exec: &E,
) -> Result<Estimate, PercolationError> {
    if l == 0 {
        return Err(PercolationError::Config("crossing box needs L >= 1"));
    }
    family.validate()?;
    let window = GraphWindow::build(&family.crossing_spec(p, l))?;
    event_estimate(&window, Event::Crossing, trials, master_seed, exec)
}

/// `theta_L`: probability that the origin's cluster reaches the window boundary.
pub fn origin_boundary_estimate<E: TrialExecutor>(
    window: &GraphWindow,
    trials: u64,
    master_seed: u64,
    exec: &E,
) -> Result<Estimate, PercolationError> {
    event_estimate(window, Event::OriginToBoundary, trials, master_seed, exec)
}

/// Exact probability of `event` by summing product-Bernoulli weights over all
/// `2^|E|` configurations.
pub fn exact_event_probability(window: &GraphWindow, event: Event) -> Result<f64, PercolationError> {
    let edges = window.edges();
    if edges.len() > MAX_EXACT_EDGES {
        return Err(PercolationError::TooLarge {
            edges: edges.len(),
            max: MAX_EXACT_EDGES,
        });
    }
    window.check_event(event)?;
    let mut total = 0.0;
    for mask in 0u32..(1u32 << edges.len()) {
        let mut weight = 1.0;
        for (i, e) in edges.iter().enumerate() {
            weight *= if mask >> i & 1 == 1 { e.p } else { 1.0 - e.p };
        }
        if weight == 0.0 {
            continue;
        }
        let mut uf = UnionFind::new(window.vertex_count());
        for (i, e) in edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                uf.union(e.a, e.b);
            }
        }
        if window.event_holds(&mut uf, event) {
            total += weight;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}
