//! The end-to-end pipeline: choose `(d, K)`, select the scales, verify the
//! embedding, set `N = n_(d-1)`, and estimate origin-to-boundary
//! probabilities for the embedded process and the full truncated process.
//!
//! Percolation of the truncated measure is an asymptotic statement; the
//! pipeline reports a finite-volume proxy (embedded `theta_L` above a floor
//! across a list of sizes) and labels it as such.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::embedding::{
    select_scales, verify_isomorphism, EdgeLaw, EmbeddedGraph, EmbeddingError, IsomorphismReport, Point, ScaleVector,
    SlabParameters, SlabWindow,
};
use crate::exec::TrialExecutor;
use crate::percolation::{
    derive_seed, origin_boundary_estimate, Estimate, Event, Extent, GraphWindow, Interior, PercolationError, WindowSpec,
};
use crate::sequence::{EpsilonCertificate, ProbabilitySequence};
use crate::thresholds::{choose_slab_parameters, CalibrationTable, PcSettings, SlabBudget, SlabChoice, ThresholdError};

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 0.05;

/// Long-range windows above this many vertices are skipped, not simulated.
pub const MAX_FULL_WINDOW_VERTICES: usize = 8_000_000;

pub const PROXY_NOTE: &str = "finite-volume proxy: embedded theta_L above the positivity floor at every \
listed L; this is evidence for, not a certificate of, P_N(0 <-> infinity) > 0";

// Seed tags for the pipeline stages.
const CALIBRATION_TAG: u64 = 1;
const THETA_TAG: u64 = 100_000;
const CONTAINMENT_TAG: u64 = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub sequence: ProbabilitySequence,
    pub certificate: EpsilonCertificate,
    pub margin: f64,
    /// Upper bound for every step of the scale recursion.
    pub search_limit: u64,
    pub budget: SlabBudget,
    pub calibration: PcSettings,
    /// Fixed `(d, K)`; skips the threshold search when set.
    pub slab: Option<SlabParameters>,
    /// Radius of the slab window used for the isomorphism check.
    pub verify_window: i64,
    pub l_list: Vec<u32>,
    pub trials: u64,
    pub containment_trials: u64,
    pub positivity_floor: f64,
    pub master_seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.l_list.is_empty() || self.l_list[0] == 0 {
            return Err("L list must be nonempty and positive".into());
        }
        if self.l_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err("L list must be increasing".into());
        }
        if self.search_limit == 0 {
            return Err("search limit must be positive".into());
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        if self.verify_window < 0 {
            return Err("verification window must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.positivity_floor) {
            return Err("positivity floor must be in [0, 1]".into());
        }
        if self.slab.is_none() && (self.budget.d_max < 3 || self.budget.k_max < 1) {
            return Err("slab budget needs d_max >= 3 and k_max >= 1".into());
        }
        Ok(())
    }

    pub fn calibration_seed(&self) -> u64 {
        derive_seed(self.master_seed, CALIBRATION_TAG)
    }

    pub fn theta_seed(&self, l: u32) -> u64 {
        derive_seed(self.master_seed, THETA_TAG + u64::from(l))
    }

    pub fn containment_seed(&self, l: u32) -> u64 {
        derive_seed(self.master_seed, CONTAINMENT_TAG + u64::from(l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Configuration,
    SlabParameters,
    ScaleSelection,
    Isomorphism,
    Estimation,
    Containment,
    Positivity,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Configuration => "configuration",
            Self::SlabParameters => "slab-parameters",
            Self::ScaleSelection => "scale-selection",
            Self::Isomorphism => "isomorphism",
            Self::Estimation => "estimation",
            Self::Containment => "containment",
            Self::Positivity => "positivity",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PipelineStatus {
    Passed,
    Failed { stage: Stage, kind: String, reason: String },
}

impl PipelineStatus {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaRow {
    pub l: u32,
    pub seed: u64,
    pub embedded: Estimate,
    /// `None` when the long-range window exceeds the simulation bound.
    pub full: Option<Estimate>,
    pub full_vertices: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// An embedded edge has no counterpart in the long-range window.
    MissingEdge,
    /// Open in the embedded process, closed in the full process.
    EdgeState,
    /// An embedded vertex in the origin's cluster is outside the full origin cluster.
    Cluster,
    /// The embedded origin cluster reaches the boundary but the full one does not.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub trial: u64,
    pub kind: ViolationKind,
    pub a: Point,
    pub b: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub l: u32,
    pub trials: u64,
    pub seed: u64,
    pub embedded_edges: usize,
    pub full_edges: usize,
    /// Open embedded edges checked, summed over trials.
    pub open_edges_checked: u64,
    /// Trials in which the embedded origin cluster reached the boundary.
    pub embedded_hits: u64,
    pub full_hits: u64,
    pub violation: Option<Violation>,
    /// Set when the run had nothing to check (zero trials or an oversized window).
    pub vacuous: Option<String>,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub status: PipelineStatus,
    pub proxy_note: &'static str,
    pub epsilon: f64,
    pub evidence: String,
    pub margin: f64,
    pub master_seed: u64,
    pub slab_supplied: bool,
    pub slab: Option<SlabParameters>,
    pub threshold: Option<SlabChoice>,
    pub scales: Option<Vec<u64>>,
    pub truncation: Option<u64>,
    /// `min_j p_(n_j)`.
    pub min_scale_probability: Option<f64>,
    pub isomorphism: Option<IsomorphismReport>,
    pub theta: Vec<ThetaRow>,
    pub containment: Vec<ContainmentReport>,
    pub positivity_floor: f64,
}

/// The long-range window that contains the embedded slab window of radius `l`.
///
/// Its boundary is everything outside the open rectangle
/// `(-l n_top + R, l n_top) x (-l n_1, l n_1)` with `R` the largest confined
/// offset, so every embedded boundary vertex lands on the full boundary.
pub fn full_window_spec(g: &EmbeddedGraph, law: &ProbabilitySequence, l: u32) -> WindowSpec {
    let l = i64::from(l);
    let top = g.scales().last() as i64;
    let n1 = g.scales().first() as i64;
    let offset = g.max_offset();
    WindowSpec::LongRange {
        law: law.clone(),
        truncation: Some(g.scales().truncation_level()),
        x: Extent::new(-l * top, l * top + offset),
        y: Extent::centered(l * n1),
        interior: Some(Interior {
            x_lo: -l * top + offset,
            x_hi: l * top,
            y_lo: -l * n1,
            y_hi: l * n1,
        }),
    }
}

pub fn embedded_window_spec(g: &EmbeddedGraph, law: &ProbabilitySequence, l: u32) -> WindowSpec {
    WindowSpec::Embedded {
        graph: g.clone(),
        law: law.clone(),
        truncation: None,
        window: SlabWindow::square(i64::from(l)),
    }
}

fn full_window_vertices(g: &EmbeddedGraph, l: u32) -> usize {
    let l = l as usize;
    let width = 2 * l * g.scales().last() as usize + g.max_offset() as usize + 1;
    let height = 2 * l * g.scales().first() as usize + 1;
    width.saturating_mul(height)
}

/// Sample the embedded and the full truncated process from shared per-edge
/// uniforms and check, on every trial, that open embedded edges are open in
/// the full configuration and that the embedded origin cluster (and its
/// reaching the boundary) is contained in the full one.
pub fn containment_check<E: TrialExecutor>(
    g: &EmbeddedGraph,
    law: &ProbabilitySequence,
    l: u32,
    trials: u64,
    seed: u64,
    exec: &E,
) -> Result<ContainmentReport, PercolationError> {
    containment_check_remapped(g, law, l, trials, seed, exec, &|_, key| key)
}

/// [`containment_check`] with a hook that changes the key used to sample each
/// embedded edge; the identity hook gives the real check.
#[doc(hidden)]
pub fn containment_check_remapped<E: TrialExecutor>(
    g: &EmbeddedGraph,
    law: &ProbabilitySequence,
    l: u32,
    trials: u64,
    seed: u64,
    exec: &E,
    remap: &(dyn Fn(usize, u64) -> u64 + Sync),
) -> Result<ContainmentReport, PercolationError> {
    let mut report = ContainmentReport {
        l,
        trials,
        seed,
        embedded_edges: 0,
        full_edges: 0,
        open_edges_checked: 0,
        embedded_hits: 0,
        full_hits: 0,
        violation: None,
        vacuous: None,
    };
    if trials == 0 {
        report.vacuous = Some("no trials".into());
        return Ok(report);
    }
    let full_vertices = full_window_vertices(g, l);
    if full_vertices > MAX_FULL_WINDOW_VERTICES {
        report.vacuous = Some(format!("long-range window of {full_vertices} vertices skipped"));
        return Ok(report);
    }
    let embedded = GraphWindow::build(&embedded_window_spec(g, law, l))?;
    let full = GraphWindow::build(&full_window_spec(g, law, l))?;
    report.embedded_edges = embedded.edges().len();
    report.full_edges = full.edges().len();

    let full_edge = full.edge_index();
    let full_index = full.vertex_index();
    let vertex_map: Vec<Option<u32>> = (0..embedded.vertex_count() as u32)
        .map(|v| full_index.get(embedded.point(v)).copied())
        .collect();
    drop(full_index);
    let (Some(emb_origin), Some(full_origin)) = (embedded.origin(), full.origin()) else {
        return Err(PercolationError::OriginOutside);
    };
    let point = |w: &GraphWindow, v: u32| Point::new(w.point(v)[0], w.point(v)[1]);

    struct Outcome {
        checked: u64,
        embedded_hit: bool,
        full_hit: bool,
        violation: Option<Violation>,
    }

    let outcomes = exec.map_trials(trials, |t| {
        let emb_open = embedded.sample_open_remapped(seed, t, remap);
        let full_open = full.sample_open(seed, t);
        let mut outcome = Outcome {
            checked: 0,
            embedded_hit: false,
            full_hit: false,
            violation: None,
        };
        let violation = |kind, a, b| Some(Violation { trial: t, kind, a, b });
        for (e, _) in embedded.edges().iter().zip(&emb_open).filter(|(_, &o)| o) {
            outcome.checked += 1;
            let (a, b) = (point(&embedded, e.a), point(&embedded, e.b));
            match full_edge.get(&e.key) {
                None => {
                    outcome.violation = violation(ViolationKind::MissingEdge, a, b);
                    return outcome;
                }
                Some(&i) if !full_open[i] => {
                    outcome.violation = violation(ViolationKind::EdgeState, a, b);
                    return outcome;
                }
                Some(_) => {}
            }
        }
        let mut emb_uf = embedded.cluster(&emb_open);
        let mut full_uf = full.cluster(&full_open);
        let emb_root = emb_uf.find(emb_origin);
        let full_root = full_uf.find(full_origin);
        for v in 0..embedded.vertex_count() as u32 {
            if emb_uf.find(v) != emb_root {
                continue;
            }
            let inside = vertex_map[v as usize].is_some_and(|fv| full_uf.find(fv) == full_root);
            if !inside {
                let a = point(&embedded, emb_origin);
                outcome.violation = violation(ViolationKind::Cluster, a, point(&embedded, v));
                return outcome;
            }
        }
        outcome.embedded_hit = embedded.event_holds(&mut emb_uf, Event::OriginToBoundary);
        outcome.full_hit = full.event_holds(&mut full_uf, Event::OriginToBoundary);
        if outcome.embedded_hit && !outcome.full_hit {
            let o = point(&embedded, emb_origin);
            outcome.violation = violation(ViolationKind::Boundary, o, o);
        }
        outcome
    });

    for o in outcomes {
        report.open_edges_checked += o.checked;
        report.embedded_hits += u64::from(o.embedded_hit);
        report.full_hits += u64::from(o.full_hit);
        if report.violation.is_none() {
            report.violation = o.violation;
        }
    }
    Ok(report)
}

fn failed(report: &mut PipelineReport, stage: Stage, kind: &str, reason: String) {
    report.status = PipelineStatus::Failed {
        stage,
        kind: kind.into(),
        reason,
    };
}

/// Resolve `(d, K)`: the configured pair, or the threshold search.
pub fn resolve_slab<E: TrialExecutor>(
    cfg: &PipelineConfig,
    calib: &mut CalibrationTable,
    exec: &E,
) -> Result<(SlabParameters, Option<SlabChoice>), ThresholdError> {
    if let Some(params) = cfg.slab {
        return Ok((params, None));
    }
    let choice = choose_slab_parameters(
        cfg.certificate.epsilon(),
        cfg.margin,
        cfg.budget,
        calib,
        &cfg.calibration,
        cfg.calibration_seed(),
        exec,
    )?;
    Ok((choice.params, Some(choice)))
}

/// Scale selection for a fixed `(d, K)`.
pub fn pipeline_scales(cfg: &PipelineConfig, params: &SlabParameters) -> Result<ScaleVector, EmbeddingError> {
    select_scales(&cfg.sequence, cfg.certificate.epsilon(), params, cfg.search_limit)
}

/// Run every stage in order. Failures are reported in the returned report,
/// attributed to the stage that produced them.
pub fn run_pipeline<E: TrialExecutor>(cfg: &PipelineConfig, calib: &mut CalibrationTable, exec: &E) -> PipelineReport {
    let eps = cfg.certificate.epsilon();
    let mut report = PipelineReport {
        status: PipelineStatus::Passed,
        proxy_note: PROXY_NOTE,
        epsilon: eps.get(),
        evidence: cfg.certificate.evidence().into(),
        margin: cfg.margin,
        master_seed: cfg.master_seed,
        slab_supplied: cfg.slab.is_some(),
        slab: None,
        threshold: None,
        scales: None,
        truncation: None,
        min_scale_probability: None,
        isomorphism: None,
        theta: Vec::new(),
        containment: Vec::new(),
        positivity_floor: cfg.positivity_floor,
    };
    if let Err(reason) = cfg.validate() {
        failed(&mut report, Stage::Configuration, "invalid-config", reason);
        return report;
    }

    let params = match resolve_slab(cfg, calib, exec) {
        Ok((params, choice)) => {
            report.threshold = choice;
            params
        }
        Err(e) => {
            let kind = match e {
                ThresholdError::ParametersNotFound { .. } => "parameters-not-found",
                _ => "threshold-estimation",
            };
            failed(&mut report, Stage::SlabParameters, kind, format!("{e}"));
            return report;
        }
    };
    report.slab = Some(params);

    let scales = match pipeline_scales(cfg, &params) {
        Ok(s) => s,
        Err(e) => {
            let kind = match e {
                EmbeddingError::HypothesisNotWitnessed { .. } => "hypothesis-not-witnessed",
                _ => "scale-selection",
            };
            failed(&mut report, Stage::ScaleSelection, kind, format!("{e}"));
            return report;
        }
    };
    report.scales = Some(scales.as_slice().to_vec());
    report.truncation = Some(scales.last());
    report.min_scale_probability = scales
        .as_slice()
        .iter()
        .map(|&n| cfg.sequence.at(n))
        .min_by(f64::total_cmp);

    let graph = EmbeddedGraph::new(params, scales).expect("scales were built for these parameters");
    let iso = verify_isomorphism(
        &graph,
        SlabWindow::square(cfg.verify_window),
        Some(EdgeLaw {
            seq: &cfg.sequence,
            eps,
        }),
    );
    let iso_passed = iso.passed();
    report.isomorphism = Some(iso);
    if !iso_passed {
        failed(
            &mut report,
            Stage::Isomorphism,
            "verification-failed",
            "isomorphism check failed".into(),
        );
        return report;
    }
    if report.min_scale_probability.is_some_and(|p| p < eps.get()) {
        failed(
            &mut report,
            Stage::Isomorphism,
            "edge-probability",
            "an embedded edge falls below eps".into(),
        );
        return report;
    }

    for &l in &cfg.l_list {
        let seed = cfg.theta_seed(l);
        let row = (|| -> Result<ThetaRow, PercolationError> {
            let embedded = GraphWindow::build(&embedded_window_spec(&graph, &cfg.sequence, l))?;
            let emb = origin_boundary_estimate(&embedded, cfg.trials, seed, exec)?;
            drop(embedded);
            let full_vertices = full_window_vertices(&graph, l);
            let full = if full_vertices <= MAX_FULL_WINDOW_VERTICES {
                let window = GraphWindow::build(&full_window_spec(&graph, &cfg.sequence, l))?;
                Some(origin_boundary_estimate(&window, cfg.trials, seed, exec)?)
            } else {
                None
            };
            Ok(ThetaRow {
                l,
                seed,
                embedded: emb,
                full,
                full_vertices,
            })
        })();
        match row {
            Ok(row) => report.theta.push(row),
            Err(e) => {
                failed(&mut report, Stage::Estimation, "estimation", format!("{e}"));
                return report;
            }
        }
        match containment_check(
            &graph,
            &cfg.sequence,
            l,
            cfg.containment_trials,
            cfg.containment_seed(l),
            exec,
        ) {
            Ok(c) => report.containment.push(c),
            Err(e) => {
                failed(&mut report, Stage::Containment, "containment", format!("{e}"));
                return report;
            }
        }
    }

    if let Some(c) = report.containment.iter().find(|c| !c.passed()) {
        let v = c.violation.as_ref().expect("failed check carries a violation");
        let reason = format!("L = {}: {:?} at trial {} on {} - {}", c.l, v.kind, v.trial, v.a, v.b);
        failed(&mut report, Stage::Containment, "containment-violated", reason);
        return report;
    }
    if let Some(row) = report.theta.iter().find(|r| r.embedded.value < cfg.positivity_floor) {
        let reason = format!(
            "embedded theta_L = {} below floor {} at L = {}",
            row.embedded.value, cfg.positivity_floor, row.l
        );
        failed(&mut report, Stage::Positivity, "below-floor", reason);
    }
    report
}
