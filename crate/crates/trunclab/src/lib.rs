//! Files, configuration and parallel execution around [`trunclab_core`].
//!
//! - [`config`]: the TOML experiment file and sequence tables.
//! - [`calibration`]: the persisted threshold table.
//! - [`family`]: lattice family names on the command line.
//! - [`output`]: report, estimate and manifest writers.
//! - [`Parallel`]: a rayon-backed [`TrialExecutor`].

pub mod calibration;
pub mod config;
pub mod family;
pub mod output;

use rayon::prelude::*;
use trunclab_core::harness::PipelineStatus;
use trunclab_core::TrialExecutor;

pub use trunclab_core as core;

/// Runs trials on the rayon pool. Output is identical to
/// [`Sequential`](trunclab_core::Sequential) for any thread count.
#[derive(Clone, Copy, Debug, Default)]
pub struct Parallel;

impl TrialExecutor for Parallel {
    fn map_trials<T, F>(&self, trials: u64, trial: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..trials).into_par_iter().map(trial).collect()
    }

    fn count_successes<F>(&self, trials: u64, trial: F) -> u64
    where
        F: Fn(u64) -> bool + Sync + Send,
    {
        (0..trials).into_par_iter().filter(|&i| trial(i)).count() as u64
    }
}

pub const EXIT_PASS: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VERIFICATION: u8 = 2;
pub const EXIT_HYPOTHESIS: u8 = 3;

/// Process exit code for a pipeline outcome: verification failures map to 2,
/// hypothesis, budget and positivity failures to 3, bad configs to 1.
pub fn exit_code(status: &PipelineStatus) -> u8 {
    match status {
        PipelineStatus::Passed => EXIT_PASS,
        PipelineStatus::Failed { kind, .. } => match kind.as_str() {
            "invalid-config" => EXIT_USAGE,
            "verification-failed" | "edge-probability" | "containment-violated" | "containment" => EXIT_VERIFICATION,
            _ => EXIT_HYPOTHESIS,
        },
    }
}
