//! Truncated long-range percolation on `Z^2`.
//!
//! Edges of `Z^2` join points on a common horizontal or vertical line; an
//! edge of length `n` is open with probability `p_n`. If `limsup p_n = 2 eps > 0`,
//! choosing `(d, K)` whose slab `{0..K-1}^(d-2) x Z^2` has threshold below
//! `eps`, and lengths `n_1 < ... < n_(d-1)` with `p_(n_j) >= eps`, embeds that
//! slab into the long-range graph using only edges of length at most
//! `N = n_(d-1)`. The truncated model then percolates.
//!
//! This crate implements the construction exactly and the percolation side
//! numerically:
//!
//! - [`sequence`]: edge-probability laws and their truncations.
//! - [`embedding`]: scale selection, block sets, the coordinate map and an
//!   exhaustive isomorphism check.
//! - [`percolation`]: finite windows, counter-based sampling, union-find
//!   clustering, Monte Carlo and exact estimators.
//! - [`thresholds`]: crossing-median threshold estimates and the `(d, K)` search.
//! - [`harness`]: the end-to-end pipeline.
//!
//! The crate is `no_std` and needs only `alloc`; trials run through a
//! [`TrialExecutor`](exec::TrialExecutor) so callers can parallelise them.

#![no_std]

extern crate alloc;

pub mod embedding;
pub mod exec;
pub mod harness;
pub mod percolation;
pub mod sequence;
pub mod thresholds;

pub use exec::{Sequential, TrialExecutor};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
