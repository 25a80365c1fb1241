//! Trial execution.
//!
//! Every Monte Carlo trial is a pure function of its index, so an executor is
//! free to run trials in any order or concurrently. Results are returned in
//! index order, which makes every reduction independent of the schedule.

use alloc::vec::Vec;

pub trait TrialExecutor: Sync {
    /// Evaluate `trial(i)` for `i in 0..trials`, in index order.
    fn map_trials<T, F>(&self, trials: u64, trial: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;

    fn count_successes<F>(&self, trials: u64, trial: F) -> u64
    where
        F: Fn(u64) -> bool + Sync + Send,
    {
        self.map_trials(trials, trial).into_iter().filter(|&hit| hit).count() as u64
    }
}

/// Runs trials one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl TrialExecutor for Sequential {
    fn map_trials<T, F>(&self, trials: u64, trial: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..trials).map(trial).collect()
    }

    fn count_successes<F>(&self, trials: u64, trial: F) -> u64
    where
        F: Fn(u64) -> bool + Sync + Send,
    {
        (0..trials).filter(|&i| trial(i)).count() as u64
    }
}
