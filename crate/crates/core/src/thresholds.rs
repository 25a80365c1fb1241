//! Critical-threshold estimation by bisection on crossing probabilities, and
//! the search for slab parameters whose threshold sits below `eps`.
//!
//! The threshold proxy at finite `L` is the `p` at which the crossing
//! probability of the `(L + 2) x (L + 1)` box equals 1/2. All probes of one
//! estimate share the master seed, so per trial the crossing indicator is
//! nondecreasing in `p` and the estimated curve is monotone.

use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::embedding::SlabParameters;
use crate::exec::TrialExecutor;
use crate::percolation::{crossing_estimate, derive_seed, LatticeFamily, PercolationError};
use crate::sequence::Probability;

pub const METHOD: &str = "bisection-on-crossing";

/// Slab and hypercubic windows above this many vertices are not simulated.
pub const MAX_WINDOW_VERTICES: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcSettings {
    /// Increasing window sizes; bisection runs at the last one.
    pub l_schedule: Vec<u32>,
    pub bracket_tol: f64,
    pub trials_per_probe: u64,
    /// Grid spacing of the initial scan.
    pub scan_step: f64,
}

impl PcSettings {
    pub fn new(l_schedule: Vec<u32>, bracket_tol: f64, trials_per_probe: u64) -> Self {
        Self {
            l_schedule,
            bracket_tol,
            trials_per_probe,
            scan_step: 0.05,
        }
    }

    fn validate(&self) -> Result<(), ThresholdError> {
        if self.l_schedule.is_empty() || self.l_schedule[0] == 0 {
            return Err(ThresholdError::InvalidSettings(
                "L schedule must be nonempty and positive",
            ));
        }
        if self.l_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ThresholdError::InvalidSettings("L schedule must be increasing"));
        }
        if !(self.bracket_tol > 0.0 && self.bracket_tol < 1.0) {
            return Err(ThresholdError::InvalidSettings("bracket tolerance must be in (0, 1)"));
        }
        if !(self.scan_step > 0.0 && self.scan_step <= 0.5) {
            return Err(ThresholdError::InvalidSettings("scan step must be in (0, 1/2]"));
        }
        if self.trials_per_probe == 0 {
            return Err(ThresholdError::InvalidSettings("trials per probe must be positive"));
        }
        Ok(())
    }

    pub fn largest_l(&self) -> u32 {
        *self.l_schedule.last().expect("validated schedule")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub l: u32,
    pub p: f64,
    pub crossing: f64,
    pub trials: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    pub family: LatticeFamily,
    pub p_hat: f64,
    pub method: &'static str,
    pub l_schedule: Vec<u32>,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Crossing probabilities at the bracket ends, at the largest `L`.
    pub crossing_lo: f64,
    pub crossing_hi: f64,
    pub bracket_half_width: f64,
    /// 95% error of the crossing median, propagated through the local slope.
    pub statistical: f64,
    pub uncertainty: f64,
    pub master_seed: u64,
    pub trials_per_probe: u64,
    pub retried: bool,
    pub probes: Vec<Probe>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub family: LatticeFamily,
    pub p_hat: f64,
    pub uncertainty: f64,
    /// `p_hat + uncertainty + margin - eps`; negative means the pair qualifies.
    pub shortfall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdError {
    InvalidSettings(&'static str),
    InvalidMargin {
        margin: f64,
        eps: f64,
    },
    /// Crossing estimates were not monotone in `p`, even after one retry.
    BracketBroken {
        family: LatticeFamily,
        probes: Vec<Probe>,
    },
    /// The crossing curve never reached 1/2 inside `(0, 1)`.
    NoBracket {
        family: LatticeFamily,
    },
    WindowTooLarge {
        family: LatticeFamily,
        vertices: usize,
    },
    ParametersNotFound {
        best: Option<Candidate>,
        evaluated: Vec<Candidate>,
    },
    Percolation(PercolationError),
}

impl fmt::Display for ThresholdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidSettings(msg) => write!(f, "invalid threshold settings: {msg}"),
            Self::InvalidMargin { margin, eps } => {
                write!(f, "margin {margin} must satisfy 0 < margin < eps = {eps}")
            }
            Self::BracketBroken { family, probes } => write!(
                f,
                "non-monotone crossing estimates for {family} after retry ({} probes)",
                probes.len()
            ),
            Self::NoBracket { family } => write!(f, "no crossing-probability bracket found for {family}"),
            Self::WindowTooLarge { family, vertices } => {
                write!(
                    f,
                    "{family} window with {vertices} vertices exceeds the simulation bound"
                )
            }
            Self::ParametersNotFound { best, evaluated } => {
                write!(f, "parameters not found among {} candidates", evaluated.len())?;
                if let Some(b) = best {
                    write!(
                        f,
                        "; best {} has p_hat {:.4} +/- {:.4}, short by {:.4}",
                        b.family, b.p_hat, b.uncertainty, b.shortfall
                    )?;
                }
                Ok(())
            }
            Self::Percolation(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for ThresholdError {}

impl From<PercolationError> for ThresholdError {
    fn from(e: PercolationError) -> Self {
        Self::Percolation(e)
    }
}

/// Vertices in the crossing box of `family` at size `l`.
pub fn crossing_box_vertices(family: LatticeFamily, l: u32) -> usize {
    let l = l as usize;
    match family {
        LatticeFamily::Hypercubic { d } => (l + 2).saturating_mul((l + 1).saturating_pow(d.saturating_sub(1) as u32)),
        LatticeFamily::Slab { d, k } => (l + 2) * (l + 1) * (k as usize).saturating_pow(d.saturating_sub(2) as u32),
    }
}

struct Prober<'a, E> {
    family: LatticeFamily,
    trials: u64,
    seed: u64,
    exec: &'a E,
    probes: Vec<Probe>,
}

impl<E: TrialExecutor> Prober<'_, E> {
    fn crossing(&mut self, p: f64, l: u32) -> Result<f64, ThresholdError> {
        // Exact at the ends: nothing open / everything open.
        if p <= 0.0 {
            return Ok(0.0);
        }
        if p >= 1.0 {
            return Ok(1.0);
        }
        let prob = Probability::new(p).expect("probe inside (0, 1)");
        let est = crossing_estimate(self.family, prob, l, self.trials, self.seed, self.exec)?;
        self.probes.push(Probe {
            l,
            p,
            crossing: est.value,
            trials: self.trials,
        });
        Ok(est.value)
    }
}

/// Outcome of one bracketing pass.
enum Pass {
    Done {
        lo: f64,
        hi: f64,
        cross_lo: f64,
        cross_hi: f64,
        slope: f64,
    },
    Broken,
}

/// Estimate the crossing-median threshold of `family`.
///
/// Scans a grid at the smallest `L`, re-brackets at every later `L`, then
/// bisects at the largest `L` to `bracket_tol`. Noise that breaks
/// monotonicity triggers one retry with doubled trials.
pub fn estimate_pc<E: TrialExecutor>(
    family: LatticeFamily,
    settings: &PcSettings,
    master_seed: u64,
    exec: &E,
) -> Result<ThresholdEstimate, ThresholdError> {
    settings.validate()?;
    family.validate()?;
    let vertices = crossing_box_vertices(family, settings.largest_l());
    if vertices > MAX_WINDOW_VERTICES {
        return Err(ThresholdError::WindowTooLarge { family, vertices });
    }

    let mut prober = Prober {
        family,
        trials: settings.trials_per_probe,
        seed: master_seed,
        exec,
        probes: Vec::new(),
    };
    let mut retried = false;
    let (lo, hi, cross_lo, cross_hi, slope) = loop {
        match bracket_pass(&mut prober, settings)? {
            Pass::Done {
                lo,
                hi,
                cross_lo,
                cross_hi,
                slope,
            } => break (lo, hi, cross_lo, cross_hi, slope),
            Pass::Broken if !retried => {
                retried = true;
                prober.trials = settings.trials_per_probe * 2;
            }
            Pass::Broken => {
                return Err(ThresholdError::BracketBroken {
                    family,
                    probes: prober.probes,
                })
            }
        }
    };

    let trials = prober.trials as f64;
    let statistical = 1.96 * 0.5 / (slope * libm::sqrt(trials));
    let bracket_half_width = (hi - lo) / 2.0;
    Ok(ThresholdEstimate {
        family,
        p_hat: (lo + hi) / 2.0,
        method: METHOD,
        l_schedule: settings.l_schedule.clone(),
        bracket_lo: lo,
        bracket_hi: hi,
        crossing_lo: cross_lo,
        crossing_hi: cross_hi,
        bracket_half_width,
        statistical,
        uncertainty: bracket_half_width + statistical,
        master_seed,
        trials_per_probe: prober.trials,
        retried,
        probes: prober.probes,
    })
}

fn bracket_pass<E: TrialExecutor>(prober: &mut Prober<'_, E>, settings: &PcSettings) -> Result<Pass, ThresholdError> {
    let step = settings.scan_step;
    let first_l = settings.l_schedule[0];

    // Grid scan at the smallest size.
    let cells = libm::round(1.0 / step) as usize;
    let mut grid = Vec::with_capacity(cells + 1);
    for i in 0..=cells {
        let p = if i == cells { 1.0 } else { i as f64 * step };
        grid.push((p, prober.crossing(p, first_l)?));
    }
    if grid.windows(2).any(|w| w[1].1 < w[0].1) {
        return Ok(Pass::Broken);
    }
    let Some(up) = grid.iter().position(|&(_, c)| c >= 0.5) else {
        return Err(ThresholdError::NoBracket { family: prober.family });
    };
    if up == 0 {
        return Err(ThresholdError::NoBracket { family: prober.family });
    }
    let (mut lo, mut cross_lo) = grid[up - 1];
    let (mut hi, mut cross_hi) = grid[up];

    // Follow the bracket through the remaining sizes.
    for &l in &settings.l_schedule[1..] {
        cross_lo = prober.crossing(lo, l)?;
        cross_hi = prober.crossing(hi, l)?;
        if cross_hi < cross_lo {
            return Ok(Pass::Broken);
        }
        while cross_lo >= 0.5 {
            hi = lo;
            cross_hi = cross_lo;
            lo = (lo - step).max(0.0);
            cross_lo = prober.crossing(lo, l)?;
            if cross_lo > cross_hi {
                return Ok(Pass::Broken);
            }
        }
        while cross_hi < 0.5 {
            lo = hi;
            cross_lo = cross_hi;
            hi = (hi + step).min(1.0);
            cross_hi = prober.crossing(hi, l)?;
            if cross_hi < cross_lo {
                return Ok(Pass::Broken);
            }
        }
    }
    let slope = (cross_hi - cross_lo) / (hi - lo);

    let l = settings.largest_l();
    while hi - lo > settings.bracket_tol {
        let mid = (lo + hi) / 2.0;
        let c = prober.crossing(mid, l)?;
        if c < cross_lo || c > cross_hi {
            return Ok(Pass::Broken);
        }
        if c >= 0.5 {
            hi = mid;
            cross_hi = c;
        } else {
            lo = mid;
            cross_lo = c;
        }
    }
    Ok(Pass::Done {
        lo,
        hi,
        cross_lo,
        cross_hi,
        slope,
    })
}

/// Literature thresholds kept beside the estimates for orientation only.
pub fn reference_threshold(family: LatticeFamily) -> Option<f64> {
    match family {
        LatticeFamily::Hypercubic { d: 2 } | LatticeFamily::Slab { d: 2, .. } | LatticeFamily::Slab { d: _, k: 1 } => {
            Some(0.5)
        }
        LatticeFamily::Hypercubic { d: 3 } => Some(0.2488),
        LatticeFamily::Hypercubic { d: 4 } => Some(0.1601),
        LatticeFamily::Hypercubic { d: 5 } => Some(0.1182),
        LatticeFamily::Hypercubic { d: 6 } => Some(0.0942),
        _ => None,
    }
}

/// One persisted threshold estimate; reproducible from its recorded fields.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub family: LatticeFamily,
    pub p_hat: f64,
    pub uncertainty: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub l_schedule: Vec<u32>,
    pub bracket_tol: f64,
    pub scan_step: f64,
    pub trials_per_probe: u64,
    pub master_seed: u64,
    pub reference: Option<f64>,
}

impl CalibrationRow {
    pub fn from_estimate(est: &ThresholdEstimate, settings: &PcSettings) -> Self {
        Self {
            family: est.family,
            p_hat: est.p_hat,
            uncertainty: est.uncertainty,
            bracket_lo: est.bracket_lo,
            bracket_hi: est.bracket_hi,
            l_schedule: est.l_schedule.clone(),
            bracket_tol: settings.bracket_tol,
            scan_step: settings.scan_step,
            // The requested count, so reruns take the same path through a retry.
            trials_per_probe: settings.trials_per_probe,
            master_seed: est.master_seed,
            reference: reference_threshold(est.family),
        }
    }

    pub fn settings(&self) -> PcSettings {
        PcSettings {
            l_schedule: self.l_schedule.clone(),
            bracket_tol: self.bracket_tol,
            trials_per_probe: self.trials_per_probe,
            scan_step: self.scan_step,
        }
    }

    fn matches(&self, family: LatticeFamily, settings: &PcSettings, seed: u64) -> bool {
        self.family == family && self.settings() == *settings && self.master_seed == seed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, family: LatticeFamily, settings: &PcSettings, seed: u64) -> Option<&CalibrationRow> {
        self.rows.iter().find(|r| r.matches(family, settings, seed))
    }

    /// Insert, replacing any row with the same family, settings and seed.
    pub fn upsert(&mut self, row: CalibrationRow) {
        match self
            .rows
            .iter_mut()
            .find(|r| r.matches(row.family, &row.settings(), row.master_seed))
        {
            Some(existing) => *existing = row,
            None => self.rows.push(row),
        }
    }

    /// Row for `family`, computed and stored when absent.
    pub fn get_or_estimate<E: TrialExecutor>(
        &mut self,
        family: LatticeFamily,
        settings: &PcSettings,
        seed: u64,
        exec: &E,
    ) -> Result<CalibrationRow, ThresholdError> {
        if let Some(row) = self.lookup(family, settings, seed) {
            return Ok(row.clone());
        }
        let est = estimate_pc(family, settings, seed, exec)?;
        let row = CalibrationRow::from_estimate(&est, settings);
        self.rows.push(row.clone());
        Ok(row)
    }
}

/// Per-family seed, so that every family draws from its own streams.
pub fn family_seed(master_seed: u64, family: LatticeFamily) -> u64 {
    let tag = match family {
        LatticeFamily::Hypercubic { d } => 1_000_000 + d as u64,
        LatticeFamily::Slab { d, k } => 2_000_000 + 1000 * d as u64 + u64::from(k),
    };
    derive_seed(master_seed, tag)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SlabBudget {
    pub d_max: usize,
    pub k_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlabChoice {
    pub params: SlabParameters,
    pub slab: CalibrationRow,
    /// Threshold of `Z^d` at the chosen `d`, when its box fits the simulation bound.
    pub hypercubic: Option<CalibrationRow>,
    pub evaluated: Vec<Candidate>,
}

/// Least `(d, K)` (by `d`, then `K`, starting at `d = 3`) with
/// `p_hat + uncertainty + margin < eps` for the slab `{0..K-1}^(d-2) x Z^2`.
pub fn choose_slab_parameters<E: TrialExecutor>(
    eps: Probability,
    margin: f64,
    budget: SlabBudget,
    calib: &mut CalibrationTable,
    settings: &PcSettings,
    master_seed: u64,
    exec: &E,
) -> Result<SlabChoice, ThresholdError> {
    let eps = eps.get();
    if !(margin > 0.0 && margin < eps) {
        return Err(ThresholdError::InvalidMargin { margin, eps });
    }
    settings.validate()?;
    let mut evaluated = Vec::new();
    for d in 3..=budget.d_max {
        for k in 1..=budget.k_max {
            let family = LatticeFamily::Slab { d, k };
            if crossing_box_vertices(family, settings.largest_l()) > MAX_WINDOW_VERTICES {
                continue;
            }
            let row = calib.get_or_estimate(family, settings, family_seed(master_seed, family), exec)?;
            let shortfall = row.p_hat + row.uncertainty + margin - eps;
            evaluated.push(Candidate {
                family,
                p_hat: row.p_hat,
                uncertainty: row.uncertainty,
                shortfall,
            });
            if row.p_hat + row.uncertainty + margin < eps {
                let cube = LatticeFamily::Hypercubic { d };
                let hypercubic = if crossing_box_vertices(cube, settings.largest_l()) <= MAX_WINDOW_VERTICES {
                    Some(calib.get_or_estimate(cube, settings, family_seed(master_seed, cube), exec)?)
                } else {
                    None
                };
                return Ok(SlabChoice {
                    params: SlabParameters::new(d, k).expect("d >= 3, K >= 1"),
                    slab: row,
                    hypercubic,
                    evaluated,
                });
            }
        }
    }
    let best = evaluated
        .iter()
        .min_by(|a, b| a.shortfall.total_cmp(&b.shortfall))
        .cloned();
    Err(ThresholdError::ParametersNotFound { best, evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use alloc::vec;

    #[test]
    fn settings_validation() {
        let ok = PcSettings::new(vec![4, 8], 0.01, 100);
        assert!(ok.validate().is_ok());
        assert!(PcSettings::new(vec![], 0.01, 100).validate().is_err());
        assert!(PcSettings::new(vec![8, 4], 0.01, 100).validate().is_err());
        assert!(PcSettings::new(vec![8], 0.0, 100).validate().is_err());
        assert!(PcSettings::new(vec![8], 0.01, 0).validate().is_err());
    }

    #[test]
    fn small_square_estimate_brackets_one_half() {
        let settings = PcSettings::new(vec![4, 8], 0.01, 400);
        let est = estimate_pc(LatticeFamily::Hypercubic { d: 2 }, &settings, 5, &Sequential).unwrap();
        assert!(est.bracket_hi - est.bracket_lo <= 0.01);
        assert!(est.crossing_lo < 0.5 && est.crossing_hi >= 0.5);
        assert!((est.p_hat - 0.5).abs() < 0.08, "{}", est.p_hat);
        assert!(est.statistical > 0.0);
        assert_eq!(est.method, METHOD);
    }

    #[test]
    fn estimate_is_reproducible() {
        let settings = PcSettings::new(vec![6], 0.02, 200);
        let a = estimate_pc(LatticeFamily::Slab { d: 3, k: 2 }, &settings, 9, &Sequential).unwrap();
        let b = estimate_pc(LatticeFamily::Slab { d: 3, k: 2 }, &settings, 9, &Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn margin_must_be_below_eps() {
        let settings = PcSettings::new(vec![4], 0.05, 50);
        let err = choose_slab_parameters(
            Probability::new(0.3).unwrap(),
            0.3,
            SlabBudget { d_max: 3, k_max: 1 },
            &mut CalibrationTable::new(),
            &settings,
            0,
            &Sequential,
        )
        .unwrap_err();
        assert!(matches!(err, ThresholdError::InvalidMargin { .. }));
    }

    #[test]
    fn table_upsert_replaces_matching_rows() {
        let settings = PcSettings::new(vec![4], 0.05, 50);
        let mut table = CalibrationTable::new();
        let row = table
            .get_or_estimate(LatticeFamily::Hypercubic { d: 2 }, &settings, 1, &Sequential)
            .unwrap();
        assert_eq!(table.rows.len(), 1);
        table.upsert(row.clone());
        assert_eq!(table.rows.len(), 1);
        assert_eq!(
            table.lookup(LatticeFamily::Hypercubic { d: 2 }, &settings, 1),
            Some(&row)
        );
        assert_eq!(table.lookup(LatticeFamily::Hypercubic { d: 2 }, &settings, 2), None);
        assert_eq!(row.reference, Some(0.5));
    }

    #[test]
    fn box_sizes() {
        assert_eq!(crossing_box_vertices(LatticeFamily::Hypercubic { d: 2 }, 1), 6);
        assert_eq!(crossing_box_vertices(LatticeFamily::Hypercubic { d: 3 }, 2), 4 * 9);
        assert_eq!(crossing_box_vertices(LatticeFamily::Slab { d: 4, k: 3 }, 2), 4 * 3 * 9);
    }
}
