//! Edge-probability laws indexed by edge length, and their truncations.
//!
//! A [`ProbabilitySequence`] assigns to every length `n >= 1` the probability
//! that an axis-parallel edge of that length is open. Truncating at level `N`
//! keeps `p_n` for `n <= N` and forces every longer edge closed.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq)]
pub enum SequenceError {
    /// Lengths start at 1.
    ZeroLength,
    InvalidProbability(f64),
    InvalidParameter(&'static str),
    /// `scan_support` requires `lo < hi`.
    EmptyRange {
        lo: u64,
        hi: u64,
    },
    InvalidEpsilon(f64),
    ZeroTruncation,
}

impl fmt::Display for SequenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ZeroLength => write!(f, "edge lengths start at 1"),
            Self::InvalidProbability(p) => write!(f, "{p} is not a probability in [0, 1]"),
            Self::InvalidParameter(what) => write!(f, "invalid sequence parameter: {what}"),
            Self::EmptyRange { lo, hi } => write!(f, "empty search range ({lo}, {hi}]"),
            Self::InvalidEpsilon(e) => {
                write!(f, "epsilon {e} must satisfy 0 < epsilon <= 1/2")
            }
            Self::ZeroTruncation => write!(f, "truncation level must be at least 1"),
        }
    }
}

impl core::error::Error for SequenceError {}

/// A real number in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Self = Self(0.0);
    pub const ONE: Self = Self(1.0);

    pub fn new(value: f64) -> Result<Self, SequenceError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(SequenceError::InvalidProbability(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Range cutoff `N >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TruncationLevel(u64);

impl TruncationLevel {
    pub fn new(level: u64) -> Result<Self, SequenceError> {
        if level == 0 {
            Err(SequenceError::ZeroTruncation)
        } else {
            Ok(Self(level))
        }
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }
}

/// Declared lower half of the limsup: infinitely many lengths `l` are asserted
/// to satisfy `p_l >= epsilon`, where `2 * epsilon = limsup p_n`.
///
/// The claim is taken on trust; nothing here tries to infer a limsup. Searches
/// that rely on it carry their own finite bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonCertificate {
    epsilon: f64,
    evidence: String,
}

impl EpsilonCertificate {
    pub fn new(epsilon: f64, evidence: impl Into<String>) -> Result<Self, SequenceError> {
        // p_n <= 1 caps the limsup at 1, so epsilon <= 1/2.
        if epsilon > 0.0 && 2.0 * epsilon <= 1.0 {
            Ok(Self {
                epsilon,
                evidence: evidence.into(),
            })
        } else {
            Err(SequenceError::InvalidEpsilon(epsilon))
        }
    }

    pub fn epsilon(&self) -> Probability {
        Probability(self.epsilon)
    }

    pub fn evidence(&self) -> &str {
        &self.evidence
    }
}

/// The set of lengths on which a lacunary law takes its on-support value.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// `{1, b, b^2, ...}`.
    Powers { base: u64 },
    /// Arbitrary finite set, kept sorted and deduplicated.
    Explicit(Vec<u64>),
}

impl Support {
    pub fn powers(base: u64) -> Result<Self, SequenceError> {
        if base < 2 {
            return Err(SequenceError::InvalidParameter("power support needs base >= 2"));
        }
        Ok(Self::Powers { base })
    }

    pub fn explicit(mut lengths: Vec<u64>) -> Result<Self, SequenceError> {
        if lengths.contains(&0) {
            return Err(SequenceError::ZeroLength);
        }
        lengths.sort_unstable();
        lengths.dedup();
        Ok(Self::Explicit(lengths))
    }

    pub fn contains(&self, n: u64) -> bool {
        match self {
            Self::Powers { base } => {
                let mut x = 1u64;
                loop {
                    if x == n {
                        return true;
                    }
                    match x.checked_mul(*base) {
                        Some(next) if next <= n => x = next,
                        _ => return false,
                    }
                }
            }
            Self::Explicit(lengths) => lengths.binary_search(&n).is_ok(),
        }
    }

    /// Smallest support element strictly greater than `lo`.
    pub fn next_after(&self, lo: u64) -> Option<u64> {
        match self {
            Self::Powers { base } => {
                let mut x = 1u64;
                while x <= lo {
                    x = x.checked_mul(*base)?;
                }
                Some(x)
            }
            Self::Explicit(lengths) => {
                let i = lengths.partition_point(|&n| n <= lo);
                lengths.get(i).copied()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceKind {
    Constant {
        value: Probability,
    },
    /// `min(1, amplitude * n^(-exponent))`.
    PowerLaw {
        amplitude: f64,
        exponent: f64,
    },
    /// `value` on the support, `background` elsewhere.
    Lacunary {
        support: Support,
        value: Probability,
        background: Probability,
    },
    /// `values[n - 1]` for `n <= values.len()`, `tail` beyond.
    Table {
        values: Vec<Probability>,
        tail: Probability,
    },
    Truncated {
        inner: Box<ProbabilitySequence>,
        level: TruncationLevel,
    },
}

/// The law `(p_n)_{n >= 1}` of edge openness by length. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilitySequence {
    kind: SequenceKind,
}

impl ProbabilitySequence {
    pub fn constant(value: Probability) -> Self {
        Self {
            kind: SequenceKind::Constant { value },
        }
    }

    pub fn power_law(amplitude: f64, exponent: f64) -> Result<Self, SequenceError> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(SequenceError::InvalidParameter("amplitude must be finite and >= 0"));
        }
        if !exponent.is_finite() {
            return Err(SequenceError::InvalidParameter("exponent must be finite"));
        }
        Ok(Self {
            kind: SequenceKind::PowerLaw { amplitude, exponent },
        })
    }

    pub fn lacunary(support: Support, value: Probability, background: Probability) -> Self {
        Self {
            kind: SequenceKind::Lacunary {
                support,
                value,
                background,
            },
        }
    }

    pub fn table(values: Vec<Probability>, tail: Probability) -> Self {
        Self {
            kind: SequenceKind::Table { values, tail },
        }
    }

    pub fn kind(&self) -> &SequenceKind {
        &self.kind
    }

    /// `p_n`. Fails only for `n = 0`.
    pub fn eval(&self, n: u64) -> Result<f64, SequenceError> {
        if n == 0 {
            return Err(SequenceError::ZeroLength);
        }
        Ok(self.at(n))
    }

    /// `p_n` for `n >= 1`.
    pub(crate) fn at(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        match &self.kind {
            SequenceKind::Constant { value } => value.get(),
            SequenceKind::PowerLaw { amplitude, exponent } => power_law_at(*amplitude, *exponent, n),
            SequenceKind::Lacunary {
                support,
                value,
                background,
            } => {
                if support.contains(n) {
                    value.get()
                } else {
                    background.get()
                }
            }
            SequenceKind::Table { values, tail } => {
                let i = (n - 1) as usize;
                values.get(i).copied().unwrap_or(*tail).get()
            }
            SequenceKind::Truncated { inner, level } => {
                if n <= level.get() {
                    inner.at(n)
                } else {
                    0.0
                }
            }
        }
    }

    /// The law `p_{N,n}`: `p_n` for `n <= N`, `0` otherwise.
    ///
    /// Truncating an already truncated law keeps the smaller level, so the
    /// operation is idempotent at the representation level.
    pub fn truncate(&self, level: TruncationLevel) -> Self {
        match &self.kind {
            SequenceKind::Truncated { inner, level: old } => Self {
                kind: SequenceKind::Truncated {
                    inner: inner.clone(),
                    level: (*old).min(level),
                },
            },
            _ => Self {
                kind: SequenceKind::Truncated {
                    inner: Box::new(self.clone()),
                    level,
                },
            },
        }
    }

    /// Longest length that can carry a positive probability, if bounded.
    pub fn range_limit(&self) -> Option<u64> {
        match &self.kind {
            SequenceKind::Truncated { level, .. } => Some(level.get()),
            _ => None,
        }
    }

    /// Smallest `l` with `lo < l <= hi` and `p_l >= eps`.
    ///
    /// Comparisons are exact floating-point comparisons. Power laws are
    /// treated as monotone in `n`.
    pub fn scan_support(&self, eps: Probability, lo: u64, hi: u64) -> Result<Option<u64>, SequenceError> {
        if lo >= hi {
            return Err(SequenceError::EmptyRange { lo, hi });
        }
        Ok(self.first_at_least(eps.get(), lo, hi))
    }

    fn first_at_least(&self, eps: f64, lo: u64, hi: u64) -> Option<u64> {
        debug_assert!(lo < hi);
        let first = lo + 1;
        if eps <= 0.0 {
            return Some(first);
        }
        match &self.kind {
            SequenceKind::Constant { value } => (value.get() >= eps).then_some(first),
            SequenceKind::PowerLaw { amplitude, exponent } => power_law_first(*amplitude, *exponent, eps, first, hi),
            SequenceKind::Lacunary {
                support,
                value,
                background,
            } => {
                let on = value.get() >= eps;
                let off = background.get() >= eps;
                let hit = match (on, off) {
                    (true, true) => Some(first),
                    (true, false) => support.next_after(lo),
                    (false, true) => {
                        let mut n = first;
                        while support.contains(n) {
                            n = n.checked_add(1)?;
                        }
                        Some(n)
                    }
                    (false, false) => None,
                };
                hit.filter(|&n| n <= hi)
            }
            SequenceKind::Table { values, tail } => {
                let len = values.len() as u64;
                if first <= len {
                    let end = hi.min(len);
                    let found = (first..=end).find(|&n| values[(n - 1) as usize].get() >= eps);
                    if found.is_some() {
                        return found;
                    }
                }
                let tail_start = first.max(len + 1);
                (tail.get() >= eps && tail_start <= hi).then_some(tail_start)
            }
            SequenceKind::Truncated { inner, level } => {
                let top = hi.min(level.get());
                if lo >= top {
                    None
                } else {
                    inner.first_at_least(eps, lo, top)
                }
            }
        }
    }
}

fn power_law_at(amplitude: f64, exponent: f64, n: u64) -> f64 {
    let v = amplitude * libm::pow(n as f64, -exponent);
    if v > 1.0 {
        1.0
    } else {
        v
    }
}

fn power_law_first(amplitude: f64, exponent: f64, eps: f64, first: u64, hi: u64) -> Option<u64> {
    let at = |n: u64| power_law_at(amplitude, exponent, n);
    if exponent >= 0.0 {
        // Non-increasing: only the first candidate can qualify.
        return (at(first) >= eps).then_some(first);
    }
    if at(first) >= eps {
        return Some(first);
    }
    if at(hi) < eps {
        return None;
    }
    // Increasing: solve amplitude * n^|e| = eps, then settle on the exact
    // boundary by local stepping.
    let guess = libm::ceil(libm::pow(eps / amplitude, 1.0 / -exponent));
    let mut n = if guess.is_finite() && guess >= first as f64 {
        if guess >= hi as f64 {
            hi
        } else {
            guess as u64
        }
    } else {
        first
    };
    while n < hi && at(n) < eps {
        n += 1;
    }
    while n > first && at(n - 1) >= eps {
        n -= 1;
    }
    Some(n)
}
