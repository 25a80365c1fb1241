//! Embedding of the slab `{0..K-1}^(d-2) x Z^2` into the long-range graph on `Z^2`.
//!
//! Scales `n_1 < ... < n_(d-1)` are chosen so that `p_(n_j) >= eps` and
//! `n_j > (K + 1) n_(j-1)`. A slab vertex `(m_1, .., m_(d-2); k, m)` is sent to
//!
//! ```text
//! (k n_(d-1) + m_1 n_1 + ... + m_(d-2) n_(d-2),  m n_1)
//! ```
//!
//! and slab edges become horizontal edges of length `n_j` or vertical edges of
//! length `n_1`. The spacing makes the positional decoding unique.
//!
//! Slab digits run over `0..K` here; the `{1..K}` labelling differs by a
//! shift of one in every confined coordinate and gives the same graph.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::sequence::{Probability, ProbabilitySequence, SequenceError, TruncationLevel};

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingError {
    InvalidParameters {
        d: usize,
        k: u32,
    },
    WrongScaleCount {
        expected: usize,
        found: usize,
    },
    /// `n_j <= (K + 1) n_(j-1)` at the given 1-based index.
    SpacingViolated {
        index: usize,
        previous: u64,
        found: u64,
    },
    /// No `l` in `(lower, search_limit]` with `p_l >= eps` at recursion step `step`.
    HypothesisNotWitnessed {
        step: usize,
        lower: u64,
        search_limit: u64,
    },
    DigitOutOfRange {
        index: usize,
        digit: u32,
        k: u32,
    },
    WrongDigitCount {
        expected: usize,
        found: usize,
    },
    BlockIndexOutOfRange {
        j: usize,
        max: usize,
    },
    Overflow,
    Sequence(SequenceError),
}

impl fmt::Display for EmbeddingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidParameters { d, k } => {
                write!(f, "slab parameters need d >= 2 and K >= 1 (got d = {d}, K = {k})")
            }
            Self::WrongScaleCount { expected, found } => {
                write!(f, "expected {expected} scales, found {found}")
            }
            Self::SpacingViolated { index, previous, found } => write!(
                f,
                "scale n_{index} = {found} violates spacing against n_{} = {previous}",
                index - 1
            ),
            Self::HypothesisNotWitnessed {
                step,
                lower,
                search_limit,
            } => write!(
                f,
                "hypothesis not witnessed at step {step}: no length in ({lower}, {search_limit}] reaches eps"
            ),
            Self::DigitOutOfRange { index, digit, k } => {
                write!(f, "slab digit {index} = {digit} is outside 0..{k}")
            }
            Self::WrongDigitCount { expected, found } => {
                write!(f, "expected {expected} slab digits, found {found}")
            }
            Self::BlockIndexOutOfRange { j, max } => {
                write!(f, "block index {j} outside 0..={max}")
            }
            Self::Overflow => write!(f, "coordinate overflow"),
            Self::Sequence(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for EmbeddingError {}

impl From<SequenceError> for EmbeddingError {
    fn from(e: SequenceError) -> Self {
        Self::Sequence(e)
    }
}

/// Slab dimension `d` and thickness `K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SlabParameters {
    d: usize,
    k: u32,
}

impl SlabParameters {
    pub fn new(d: usize, k: u32) -> Result<Self, EmbeddingError> {
        if d < 2 || k < 1 {
            return Err(EmbeddingError::InvalidParameters { d, k });
        }
        Ok(Self { d, k })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Number of confined coordinates, `d - 2`.
    pub fn confined(&self) -> usize {
        self.d - 2
    }
}

impl fmt::Display for SlabParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(d = {}, K = {})", self.d, self.k)
    }
}

/// Scales `n_1, ..., n_(d-1)` with `n_j > (K + 1) n_(j-1)` and `n_0 = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ScaleVector {
    scales: Vec<u64>,
}

// Keeps every coordinate produced by a window encode comfortably inside i64.
const MAX_SCALE: u64 = 1 << 40;

impl ScaleVector {
    pub fn new(scales: Vec<u64>, params: &SlabParameters) -> Result<Self, EmbeddingError> {
        let expected = params.d - 1;
        if scales.len() != expected {
            return Err(EmbeddingError::WrongScaleCount {
                expected,
                found: scales.len(),
            });
        }
        let factor = u128::from(params.k) + 1;
        let mut previous = 0u64;
        for (i, &n) in scales.iter().enumerate() {
            if u128::from(n) <= factor * u128::from(previous) || n > MAX_SCALE {
                return Err(EmbeddingError::SpacingViolated {
                    index: i + 1,
                    previous,
                    found: n,
                });
            }
            previous = n;
        }
        // Unique decomposition: (K - 1)(n_1 + ... + n_(j-1)) < n_j.
        let mut partial = 0u128;
        for &n in &scales {
            assert!(
                u128::from(params.k - 1) * partial < u128::from(n),
                "spacing must imply unique decomposition"
            );
            partial += u128::from(n);
        }
        Ok(Self { scales })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.scales
    }

    /// `n_j` for `1 <= j <= d - 1`.
    pub fn get(&self, j: usize) -> Option<u64> {
        j.checked_sub(1).and_then(|i| self.scales.get(i)).copied()
    }

    /// `n_(d-1)`, the truncation level that makes the embedded graph visible.
    pub fn last(&self) -> u64 {
        *self.scales.last().expect("scale vector is never empty")
    }

    pub fn first(&self) -> u64 {
        self.scales[0]
    }

    pub fn truncation_level(&self) -> TruncationLevel {
        TruncationLevel::new(self.last()).expect("scales are positive")
    }
}

/// Run the scale recursion: `n_0 = 0`, `n_j = min { l > (K + 1) n_(j-1) : p_l >= eps }`.
///
/// Every step is bounded by `search_limit`; the error names the failing step.
pub fn select_scales(
    seq: &ProbabilitySequence,
    eps: Probability,
    params: &SlabParameters,
    search_limit: u64,
) -> Result<ScaleVector, EmbeddingError> {
    let factor = u64::from(params.k) + 1;
    let mut scales = Vec::with_capacity(params.d - 1);
    let mut previous = 0u64;
    for step in 1..params.d {
        let lower = factor.saturating_mul(previous);
        let not_witnessed = EmbeddingError::HypothesisNotWitnessed {
            step,
            lower,
            search_limit,
        };
        if lower >= search_limit {
            return Err(not_witnessed);
        }
        match seq.scan_support(eps, lower, search_limit)? {
            Some(n) => {
                debug_assert!(seq.at(n) >= eps.get());
                scales.push(n);
                previous = n;
            }
            None => return Err(not_witnessed),
        }
    }
    ScaleVector::new(scales, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const ORIGIN: Self = Self { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The translate `T_x B = { z + x : z in B }`.
pub fn translate(block: &BTreeSet<Point>, by: Point) -> BTreeSet<Point> {
    block.iter().map(|z| Point::new(z.x + by.x, z.y + by.y)).collect()
}

/// Coordinates in the slab: confined digits (each in `0..K`), then the
/// horizontal index `k` and the vertical index `m`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SlabCoord {
    pub digits: Vec<u32>,
    pub k: i64,
    pub m: i64,
}

impl SlabCoord {
    pub fn new(digits: Vec<u32>, k: i64, m: i64) -> Self {
        Self { digits, k, m }
    }
}

/// Which family of lattice edges an embedded edge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    /// Length `n_j`, `1 <= j <= d - 1`.
    Horizontal(usize),
    /// Length `n_1`.
    Vertical,
}

/// The embedded graph `(V, E)` together with its coordinate map to the slab.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmbeddedGraph {
    params: SlabParameters,
    scales: ScaleVector,
}

impl EmbeddedGraph {
    pub fn new(params: SlabParameters, scales: ScaleVector) -> Result<Self, EmbeddingError> {
        // Re-validate in case the scales were built for other parameters.
        let scales = ScaleVector::new(scales.scales, &params)?;
        Ok(Self { params, scales })
    }

    pub fn params(&self) -> &SlabParameters {
        &self.params
    }

    pub fn scales(&self) -> &ScaleVector {
        &self.scales
    }

    /// Sum of the largest confined offsets, `(K - 1)(n_1 + ... + n_(d-2))`.
    pub fn max_offset(&self) -> i64 {
        let confined: u64 = self.scales.scales[..self.params.confined()].iter().sum();
        (u64::from(self.params.k - 1) * confined) as i64
    }

    /// `B_j`, built literally as `B_0 = {(0,0)}`,
    /// `B_j = union over 0 <= m < K of T_(m n_j, 0) B_(j-1)`.
    pub fn block_set(&self, j: usize) -> Result<BTreeSet<Point>, EmbeddingError> {
        let max = self.params.confined();
        if j > max {
            return Err(EmbeddingError::BlockIndexOutOfRange { j, max });
        }
        let mut block = BTreeSet::new();
        block.insert(Point::ORIGIN);
        for i in 1..=j {
            let n = self.scales.scales[i - 1] as i64;
            let mut next = BTreeSet::new();
            for m in 0..i64::from(self.params.k) {
                next.extend(translate(&block, Point::new(m * n, 0)));
            }
            block = next;
        }
        Ok(block)
    }

    pub fn encode(&self, c: &SlabCoord) -> Result<Point, EmbeddingError> {
        let confined = self.params.confined();
        if c.digits.len() != confined {
            return Err(EmbeddingError::WrongDigitCount {
                expected: confined,
                found: c.digits.len(),
            });
        }
        let mut x =
            c.k.checked_mul(self.scales.last() as i64)
                .ok_or(EmbeddingError::Overflow)?;
        for (i, &digit) in c.digits.iter().enumerate() {
            if digit >= self.params.k {
                return Err(EmbeddingError::DigitOutOfRange {
                    index: i + 1,
                    digit,
                    k: self.params.k,
                });
            }
            x = x
                .checked_add(i64::from(digit) * self.scales.scales[i] as i64)
                .ok_or(EmbeddingError::Overflow)?;
        }
        let y =
            c.m.checked_mul(self.scales.first() as i64)
                .ok_or(EmbeddingError::Overflow)?;
        Ok(Point::new(x, y))
    }

    /// Inverse of [`encode`](Self::encode); `None` when `p` is not in `V`.
    pub fn decode(&self, p: Point) -> Option<SlabCoord> {
        let n1 = self.scales.first() as i64;
        if p.y % n1 != 0 {
            return None;
        }
        let m = p.y / n1;
        let top = self.scales.last() as i64;
        let k = p.x.div_euclid(top);
        let mut rest = p.x.rem_euclid(top);
        let confined = self.params.confined();
        let mut digits = vec![0u32; confined];
        for i in (0..confined).rev() {
            let n = self.scales.scales[i] as i64;
            let digit = rest / n;
            if digit >= i64::from(self.params.k) {
                return None;
            }
            digits[i] = digit as u32;
            rest -= digit * n;
        }
        (rest == 0).then_some(SlabCoord { digits, k, m })
    }

    pub fn contains(&self, p: Point) -> bool {
        self.decode(p).is_some()
    }

    /// Classify the pair `{u, v}` against the embedded edge set.
    pub fn edge_class(&self, u: Point, v: Point) -> Option<EdgeClass> {
        if !self.contains(u) || !self.contains(v) {
            return None;
        }
        if u.y == v.y {
            let length = u.x.abs_diff(v.x);
            let j = self.scales.scales.iter().position(|&n| n == length)?;
            Some(EdgeClass::Horizontal(j + 1))
        } else if u.x == v.x && u.y.abs_diff(v.y) == self.scales.first() {
            Some(EdgeClass::Vertical)
        } else {
            None
        }
    }

    pub fn class_length(&self, class: EdgeClass) -> u64 {
        match class {
            EdgeClass::Horizontal(j) => self.scales.scales[j - 1],
            EdgeClass::Vertical => self.scales.first(),
        }
    }

    /// All slab coordinates with `|k| <= window.k_radius`, `|m| <= window.m_radius`,
    /// in lexicographic (digits, k, m) order.
    pub fn window_coords(&self, window: SlabWindow) -> Vec<SlabCoord> {
        let confined = self.params.confined();
        let k = self.params.k;
        let mut out = Vec::new();
        let mut digits = vec![0u32; confined];
        loop {
            for kk in -window.k_radius..=window.k_radius {
                for m in -window.m_radius..=window.m_radius {
                    out.push(SlabCoord::new(digits.clone(), kk, m));
                }
            }
            // Odometer over {0..K-1}^confined.
            let mut i = 0;
            loop {
                if i == confined {
                    return out;
                }
                digits[i] += 1;
                if digits[i] < k {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    /// Slab neighbours of `c` inside `window`, tagged with the class the
    /// corresponding embedded edge must have.
    pub fn slab_neighbours(&self, c: &SlabCoord, window: SlabWindow) -> Vec<(SlabCoord, EdgeClass)> {
        let mut out = Vec::new();
        for i in 0..c.digits.len() {
            if c.digits[i] + 1 < self.params.k {
                let mut n = c.clone();
                n.digits[i] += 1;
                out.push((n, EdgeClass::Horizontal(i + 1)));
            }
        }
        if c.k < window.k_radius {
            out.push((
                SlabCoord::new(c.digits.clone(), c.k + 1, c.m),
                EdgeClass::Horizontal(self.params.d - 1),
            ));
        }
        if c.m < window.m_radius {
            out.push((SlabCoord::new(c.digits.clone(), c.k, c.m + 1), EdgeClass::Vertical));
        }
        out
    }
}

/// Window `|k| <= k_radius`, `|m| <= m_radius` in the two unbounded slab coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SlabWindow {
    pub k_radius: i64,
    pub m_radius: i64,
}

impl SlabWindow {
    pub fn square(radius: i64) -> Self {
        Self {
            k_radius: radius,
            m_radius: radius,
        }
    }

    pub fn contains(&self, c: &SlabCoord) -> bool {
        c.k.abs() <= self.k_radius && c.m.abs() <= self.m_radius
    }
}

/// Ambient law against which embedded edge probabilities are checked.
#[derive(Clone, Copy, Debug)]
pub struct EdgeLaw<'a> {
    pub seq: &'a ProbabilitySequence,
    pub eps: Probability,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Counterexample {
    RoundTrip {
        coord: SlabCoord,
        point: Option<Point>,
    },
    NotInjective {
        a: SlabCoord,
        b: SlabCoord,
        point: Point,
    },
    Adjacency {
        a: SlabCoord,
        b: SlabCoord,
        slab: Option<EdgeClass>,
        embedded: Option<EdgeClass>,
    },
    DuplicateEdge {
        a: Point,
        b: Point,
    },
    Length {
        a: Point,
        b: Point,
        length: u64,
    },
    Probability {
        length: u64,
        untruncated: f64,
        truncated: f64,
        eps: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsomorphismReport {
    pub params: SlabParameters,
    pub scales: Vec<u64>,
    pub window: SlabWindow,
    pub vertices: usize,
    pub slab_edges: usize,
    pub pairs_checked: u64,
    pub injective: bool,
    pub adjacency_equivalent: bool,
    pub edges_distinct: bool,
    pub lengths_ok: bool,
    /// `None` when no law was supplied.
    pub probabilities_ok: Option<bool>,
    pub max_edge_length: u64,
    pub vertical_length: Option<u64>,
    pub min_edge_probability: Option<f64>,
    pub counterexample: Option<Counterexample>,
}

impl IsomorphismReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
            && self.injective
            && self.adjacency_equivalent
            && self.edges_distinct
            && self.lengths_ok
            && self.probabilities_ok != Some(false)
    }
}

/// Exhaustive check, over every vertex pair of a finite slab window, that the
/// coordinate map is a graph isomorphism onto its image.
///
/// Checks: encode/decode round trip, injectivity, adjacency equivalence (with
/// matching edge class), distinct image edges, every image edge of length
/// `n_j` with vertical edges of length `n_1`, and (given a law) `p_(n_j) >= eps`
/// both untruncated and truncated at `N = n_(d-1)`. Stops at the first
/// counterexample.
pub fn verify_isomorphism(g: &EmbeddedGraph, window: SlabWindow, law: Option<EdgeLaw<'_>>) -> IsomorphismReport {
    let mut report = IsomorphismReport {
        params: g.params,
        scales: g.scales.scales.clone(),
        window,
        vertices: 0,
        slab_edges: 0,
        pairs_checked: 0,
        injective: true,
        adjacency_equivalent: true,
        edges_distinct: true,
        lengths_ok: true,
        probabilities_ok: law.map(|_| true),
        max_edge_length: 0,
        vertical_length: None,
        min_edge_probability: None,
        counterexample: None,
    };

    let coords = g.window_coords(window);
    report.vertices = coords.len();
    let mut points = Vec::with_capacity(coords.len());
    let mut seen: BTreeMap<Point, usize> = BTreeMap::new();
    for (i, c) in coords.iter().enumerate() {
        let point = match g.encode(c) {
            Ok(p) if g.decode(p).as_ref() == Some(c) => p,
            other => {
                report.counterexample = Some(Counterexample::RoundTrip {
                    coord: c.clone(),
                    point: other.ok(),
                });
                return report;
            }
        };
        if let Some(&j) = seen.get(&point) {
            report.injective = false;
            report.counterexample = Some(Counterexample::NotInjective {
                a: coords[j].clone(),
                b: c.clone(),
                point,
            });
            return report;
        }
        seen.insert(point, i);
        points.push(point);
    }

    let index: BTreeMap<&SlabCoord, usize> = coords.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut expected: Vec<Vec<(usize, EdgeClass)>> = vec![Vec::new(); coords.len()];
    for (i, c) in coords.iter().enumerate() {
        for (n, class) in g.slab_neighbours(c, window) {
            let j = index[&n];
            expected[i].push((j, class));
            expected[j].push((i, class));
            report.slab_edges += 1;
        }
    }

    let mut image_edges = BTreeSet::new();
    let mut lengths = BTreeSet::new();
    for i in 0..coords.len() {
        for j in (i + 1)..coords.len() {
            report.pairs_checked += 1;
            let slab = expected[i].iter().find(|(n, _)| *n == j).map(|(_, class)| *class);
            let embedded = g.edge_class(points[i], points[j]);
            if slab != embedded {
                report.adjacency_equivalent = false;
                report.counterexample = Some(Counterexample::Adjacency {
                    a: coords[i].clone(),
                    b: coords[j].clone(),
                    slab,
                    embedded,
                });
                return report;
            }
            let Some(class) = embedded else { continue };
            let (a, b) = (points[i].min(points[j]), points[i].max(points[j]));
            if !image_edges.insert((a, b)) {
                report.edges_distinct = false;
                report.counterexample = Some(Counterexample::DuplicateEdge { a, b });
                return report;
            }
            let length = if a.y == b.y {
                a.x.abs_diff(b.x)
            } else {
                a.y.abs_diff(b.y)
            };
            let length_ok = g.scales.scales.contains(&length)
                && length == g.class_length(class)
                && (class != EdgeClass::Vertical || length == g.scales.first());
            if !length_ok {
                report.lengths_ok = false;
                report.counterexample = Some(Counterexample::Length { a, b, length });
                return report;
            }
            if class == EdgeClass::Vertical {
                report.vertical_length = Some(length);
            }
            report.max_edge_length = report.max_edge_length.max(length);
            lengths.insert(length);
        }
    }
    if image_edges.len() != report.slab_edges {
        report.edges_distinct = false;
    }

    if let Some(law) = law {
        let truncated = law.seq.truncate(g.scales.truncation_level());
        for &length in &lengths {
            let full = law.seq.at(length);
            let cut = truncated.at(length);
            report.min_edge_probability = Some(report.min_edge_probability.map_or(full, |m: f64| m.min(full)));
            if !(full >= law.eps.get() && cut >= law.eps.get()) {
                report.probabilities_ok = Some(false);
                report.counterexample = Some(Counterexample::Probability {
                    length,
                    untruncated: full,
                    truncated: cut,
                    eps: law.eps.get(),
                });
                return report;
            }
        }
    }
    report
}
