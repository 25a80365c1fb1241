use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use super::rng::{edge_key, edge_uniform, trial_stream};
use super::union_find::UnionFind;
use super::PercolationError;
use crate::embedding::{EmbeddedGraph, SlabCoord, SlabWindow};
use crate::sequence::{Probability, ProbabilitySequence, TruncationLevel};

/// Inclusive integer range `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Extent {
    pub lo: i64,
    pub hi: i64,
}

impl Extent {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    /// `-radius..=radius`.
    pub const fn centered(radius: i64) -> Self {
        Self {
            lo: -radius,
            hi: radius,
        }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn span(&self) -> u64 {
        self.hi.abs_diff(self.lo)
    }
}

/// Open rectangle; vertices of a long-range window outside it form the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Interior {
    pub x_lo: i64,
    pub x_hi: i64,
    pub y_lo: i64,
    pub y_hi: i64,
}

impl Interior {
    fn contains(&self, x: i64, y: i64) -> bool {
        self.x_lo < x && x < self.x_hi && self.y_lo < y && y < self.y_hi
    }
}

/// Nearest-neighbour lattice families used for threshold estimation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatticeFamily {
    /// `Z^d`.
    Hypercubic { d: usize },
    /// `{0..K-1}^(d-2) x Z^2`.
    Slab { d: usize, k: u32 },
}

impl LatticeFamily {
    pub fn validate(&self) -> Result<(), PercolationError> {
        match *self {
            Self::Hypercubic { d } if d >= 1 => Ok(()),
            Self::Slab { d, k } if d >= 2 && k >= 1 => Ok(()),
            _ => Err(PercolationError::Config(
                "lattice family needs d >= 2 (slab) or d >= 1, and K >= 1",
            )),
        }
    }

    /// Box with `L + 2` vertices along the crossing axis and `L + 1` along the
    /// other unbounded axes; confined slab axes at full thickness.
    pub fn crossing_spec(&self, p: Probability, l: u32) -> WindowSpec {
        let l = i64::from(l);
        match *self {
            Self::Hypercubic { d } => {
                let mut extents = vec![Extent::new(0, l); d];
                extents[0] = Extent::new(0, l + 1);
                WindowSpec::Hypercubic { d, p, extents }
            }
            Self::Slab { d, k } => WindowSpec::Slab {
                d,
                k,
                p,
                x: Extent::new(0, l + 1),
                y: Extent::new(0, l),
            },
        }
    }
}

impl fmt::Display for LatticeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hypercubic { d } => write!(f, "Z^{d}"),
            Self::Slab { d, k } => write!(f, "slab(d={d},K={k})"),
        }
    }
}

/// Recipe for a finite window.
#[derive(Clone, Debug, PartialEq)]
pub enum WindowSpec {
    /// Every horizontal and vertical edge of `Z^2` inside the box, with length
    /// up to the truncation level (or the box span when untruncated).
    LongRange {
        law: ProbabilitySequence,
        truncation: Option<TruncationLevel>,
        x: Extent,
        y: Extent,
        /// Defaults to the open box, i.e. the boundary is the outer frame.
        interior: Option<Interior>,
    },
    /// Nearest-neighbour box in `Z^d` with uniform `p`.
    Hypercubic {
        d: usize,
        p: Probability,
        extents: Vec<Extent>,
    },
    /// Coordinates ordered `(x, y, c_1, .., c_(d-2))` with `c_i in 0..K`.
    Slab {
        d: usize,
        k: u32,
        p: Probability,
        x: Extent,
        y: Extent,
    },
    /// Image of a slab window; edges carry `p_length` of the (optionally
    /// truncated) ambient law.
    Embedded {
        graph: EmbeddedGraph,
        law: ProbabilitySequence,
        truncation: Option<TruncationLevel>,
        window: SlabWindow,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFamily {
    LongRange { truncation: Option<u64> },
    Hypercubic { d: usize },
    Slab { d: usize, k: u32 },
    Embedded { d: usize, k: u32 },
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WindowEdge {
    pub a: u32,
    pub b: u32,
    pub p: f64,
    pub key: u64,
}

/// Connectivity events evaluated on one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// Open path from a left terminal to a right terminal.
    Crossing,
    /// The origin's cluster contains a boundary vertex.
    OriginToBoundary,
    Connected(u32, u32),
}

/// A finite graph with a deterministic edge list and per-edge probabilities.
#[derive(Clone, Debug)]
pub struct GraphWindow {
    family: WindowFamily,
    dim: usize,
    coords: Vec<i64>,
    edges: Vec<WindowEdge>,
    origin: Option<u32>,
    boundary: Vec<u32>,
    left: Vec<u32>,
    right: Vec<u32>,
}

/// Clusters of one sampled configuration.
#[derive(Clone, Debug)]
pub struct ClusterState {
    pub forest: UnionFind,
    pub open: Vec<bool>,
}

const MAX_VERTICES: usize = u32::MAX as usize;

impl GraphWindow {
    pub fn build(spec: &WindowSpec) -> Result<Self, PercolationError> {
        match spec {
            WindowSpec::LongRange {
                law,
                truncation,
                x,
                y,
                interior,
            } => Self::long_range(law, *truncation, *x, *y, *interior),
            WindowSpec::Hypercubic { d, p, extents } => {
                if *d == 0 || extents.len() != *d {
                    return Err(PercolationError::Config("hypercubic box needs d >= 1 extents"));
                }
                Self::lattice_box(extents, *d, *p, WindowFamily::Hypercubic { d: *d })
            }
            WindowSpec::Slab { d, k, p, x, y } => {
                if *d < 2 || *k < 1 {
                    return Err(PercolationError::Config("slab needs d >= 2 and K >= 1"));
                }
                let mut extents = vec![*x, *y];
                extents.resize(*d, Extent::new(0, i64::from(*k) - 1));
                Self::lattice_box(&extents, 2, *p, WindowFamily::Slab { d: *d, k: *k })
            }
            WindowSpec::Embedded {
                graph,
                law,
                truncation,
                window,
            } => Self::embedded(graph, law, *truncation, *window),
        }
    }

    /// Arbitrary graph on points of `Z^dim`; used for oracle tests.
    pub fn from_parts(
        dim: usize,
        points: &[Vec<i64>],
        edges: &[(u32, u32, f64)],
        origin: Option<u32>,
        boundary: Vec<u32>,
        left: Vec<u32>,
        right: Vec<u32>,
    ) -> Result<Self, PercolationError> {
        let n = points.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(PercolationError::Config("point dimension mismatch"));
        }
        let in_range = |v: &u32| (*v as usize) < n;
        if !(boundary.iter().all(in_range) && left.iter().all(in_range) && right.iter().all(in_range))
            || origin.is_some_and(|o| !in_range(&o))
        {
            return Err(PercolationError::Config("vertex index out of range"));
        }
        let mut w = Self::empty(WindowFamily::Custom, dim);
        for p in points {
            w.coords.extend_from_slice(p);
        }
        for &(a, b, p) in edges {
            if !in_range(&a) || !in_range(&b) || a == b {
                return Err(PercolationError::Config("bad edge endpoints"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(PercolationError::Config("edge probability outside [0, 1]"));
            }
            w.push_edge(a, b, p);
        }
        // One uniform per lattice edge: parallel edges would be perfectly correlated.
        let keys = w.edge_index();
        if keys.len() != w.edges.len() {
            return Err(PercolationError::Config("duplicate edge"));
        }
        w.origin = origin;
        w.boundary = boundary;
        w.left = left;
        w.right = right;
        Ok(w)
    }

    fn empty(family: WindowFamily, dim: usize) -> Self {
        Self {
            family,
            dim,
            coords: Vec::new(),
            edges: Vec::new(),
            origin: None,
            boundary: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    fn push_edge(&mut self, a: u32, b: u32, p: f64) {
        let key = edge_key(self.point(a), self.point(b));
        self.edges.push(WindowEdge { a, b, p, key });
    }

    fn long_range(
        law: &ProbabilitySequence,
        truncation: Option<TruncationLevel>,
        x: Extent,
        y: Extent,
        interior: Option<Interior>,
    ) -> Result<Self, PercolationError> {
        if x.is_empty() || y.is_empty() {
            return Err(PercolationError::Config("empty window extent"));
        }
        let (w, h) = (x.len(), y.len());
        if w.checked_mul(h).is_none_or(|n| n > MAX_VERTICES) {
            return Err(PercolationError::Config("window too large"));
        }
        let law = match truncation {
            Some(level) => law.truncate(level),
            None => law.clone(),
        };
        let interior = interior.unwrap_or(Interior {
            x_lo: x.lo,
            x_hi: x.hi,
            y_lo: y.lo,
            y_hi: y.hi,
        });
        let mut out = Self::empty(
            WindowFamily::LongRange {
                truncation: law.range_limit(),
            },
            2,
        );
        // Row-major: index = (yy - y.lo) * w + (xx - x.lo).
        for yy in y.lo..=y.hi {
            for xx in x.lo..=x.hi {
                let v = (out.coords.len() / 2) as u32;
                out.coords.extend_from_slice(&[xx, yy]);
                if xx == 0 && yy == 0 {
                    out.origin = Some(v);
                }
                if !interior.contains(xx, yy) {
                    out.boundary.push(v);
                }
                if xx == x.lo {
                    out.left.push(v);
                }
                if xx == x.hi {
                    out.right.push(v);
                }
            }
        }
        let reach = |span: u64| law.range_limit().map_or(span, |n| n.min(span)) as usize;
        let probs: Vec<f64> = (1..=reach(x.span().max(y.span())) as u64).map(|n| law.at(n)).collect();
        let index = |col: usize, row: usize| (row * w + col) as u32;
        let (hx, hy) = (reach(x.span()), reach(y.span()));
        for row in 0..h {
            for col in 0..w {
                for len in 1..=hx.min(w - 1 - col) {
                    out.push_edge(index(col, row), index(col + len, row), probs[len - 1]);
                }
            }
        }
        for col in 0..w {
            for row in 0..h {
                for len in 1..=hy.min(h - 1 - row) {
                    out.push_edge(index(col, row), index(col, row + len), probs[len - 1]);
                }
            }
        }
        Ok(out)
    }

    /// Nearest-neighbour box; the first `unbounded` axes define the boundary.
    fn lattice_box(
        extents: &[Extent],
        unbounded: usize,
        p: Probability,
        family: WindowFamily,
    ) -> Result<Self, PercolationError> {
        if extents.iter().any(Extent::is_empty) {
            return Err(PercolationError::Config("empty window extent"));
        }
        let total = extents
            .iter()
            .try_fold(1usize, |acc, e| acc.checked_mul(e.len()))
            .filter(|&n| n <= MAX_VERTICES)
            .ok_or(PercolationError::Config("window too large"))?;
        let dim = extents.len();
        let mut out = Self::empty(family, dim);
        out.coords.reserve(total * dim);
        // Axis 0 varies fastest.
        let mut strides = vec![1usize; dim];
        for a in 1..dim {
            strides[a] = strides[a - 1] * extents[a - 1].len();
        }
        let mut point: Vec<i64> = extents.iter().map(|e| e.lo).collect();
        for v in 0..total as u32 {
            out.coords.extend_from_slice(&point);
            if point.iter().all(|&c| c == 0) {
                out.origin = Some(v);
            }
            let on_frame = point[..unbounded]
                .iter()
                .zip(extents)
                .any(|(&c, e)| c == e.lo || c == e.hi);
            if on_frame {
                out.boundary.push(v);
            }
            if point[0] == extents[0].lo {
                out.left.push(v);
            }
            if point[0] == extents[0].hi {
                out.right.push(v);
            }
            for a in 0..dim {
                if point[a] < extents[a].hi {
                    point[a] += 1;
                    break;
                }
                point[a] = extents[a].lo;
            }
        }
        for v in 0..total {
            for a in 0..dim {
                let c = out.coords[v * dim + a];
                if c < extents[a].hi {
                    out.push_edge(v as u32, (v + strides[a]) as u32, p.get());
                }
            }
        }
        Ok(out)
    }

    fn embedded(
        graph: &EmbeddedGraph,
        law: &ProbabilitySequence,
        truncation: Option<TruncationLevel>,
        window: SlabWindow,
    ) -> Result<Self, PercolationError> {
        if window.k_radius < 0 || window.m_radius < 0 {
            return Err(PercolationError::Config("negative slab window radius"));
        }
        let law = match truncation {
            Some(level) => law.truncate(level),
            None => law.clone(),
        };
        let params = graph.params();
        let mut out = Self::empty(
            WindowFamily::Embedded {
                d: params.d(),
                k: params.k(),
            },
            2,
        );
        let coords = graph.window_coords(window);
        let mut index: BTreeMap<&SlabCoord, u32> = BTreeMap::new();
        for (i, c) in coords.iter().enumerate() {
            let p = graph
                .encode(c)
                .map_err(|_| PercolationError::Config("slab window overflows Z^2"))?;
            out.coords.extend_from_slice(&[p.x, p.y]);
            index.insert(c, i as u32);
            let v = i as u32;
            if c.k == 0 && c.m == 0 && c.digits.iter().all(|&d| d == 0) {
                out.origin = Some(v);
            }
            if c.k.abs() == window.k_radius || c.m.abs() == window.m_radius {
                out.boundary.push(v);
            }
            if c.k == -window.k_radius {
                out.left.push(v);
            }
            if c.k == window.k_radius {
                out.right.push(v);
            }
        }
        for (i, c) in coords.iter().enumerate() {
            for (n, class) in graph.slab_neighbours(c, window) {
                let j = index[&n];
                let p = law.at(graph.class_length(class));
                out.push_edge(i as u32, j, p);
            }
        }
        Ok(out)
    }

    pub fn family(&self) -> &WindowFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn edges(&self) -> &[WindowEdge] {
        &self.edges
    }

    pub fn point(&self, v: u32) -> &[i64] {
        let i = v as usize * self.dim;
        &self.coords[i..i + self.dim]
    }

    pub fn origin(&self) -> Option<u32> {
        self.origin
    }

    pub fn boundary(&self) -> &[u32] {
        &self.boundary
    }

    pub fn left(&self) -> &[u32] {
        &self.left
    }

    pub fn right(&self) -> &[u32] {
        &self.right
    }

    /// Map from coordinates to vertex index.
    pub fn vertex_index(&self) -> BTreeMap<&[i64], u32> {
        (0..self.vertex_count() as u32).map(|v| (self.point(v), v)).collect()
    }

    /// Map from edge key to edge index.
    pub fn edge_index(&self) -> BTreeMap<u64, usize> {
        self.edges.iter().enumerate().map(|(i, e)| (e.key, i)).collect()
    }

    /// Per-edge uniforms of one trial, in edge order.
    pub fn uniforms(&self, master_seed: u64, trial: u64) -> Vec<f64> {
        let stream = trial_stream(master_seed, trial);
        self.edges.iter().map(|e| edge_uniform(stream, e.key)).collect()
    }

    /// Open flags of one trial: edge `e` is open iff its uniform is `< p_e`.
    pub fn sample_open(&self, master_seed: u64, trial: u64) -> Vec<bool> {
        let stream = trial_stream(master_seed, trial);
        self.edges.iter().map(|e| is_open(stream, e)).collect()
    }

    /// Like [`sample_open`](Self::sample_open), but edge `i` draws the uniform
    /// of key `remap(i, key)`. Only useful for fault injection.
    pub fn sample_open_remapped(&self, master_seed: u64, trial: u64, remap: &dyn Fn(usize, u64) -> u64) -> Vec<bool> {
        let stream = trial_stream(master_seed, trial);
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| {
                is_open(
                    stream,
                    &WindowEdge {
                        key: remap(i, e.key),
                        ..*e
                    },
                )
            })
            .collect()
    }

    pub fn cluster(&self, open: &[bool]) -> UnionFind {
        let mut uf = UnionFind::new(self.vertex_count());
        for (e, _) in self.edges.iter().zip(open).filter(|(_, &o)| o) {
            uf.union(e.a, e.b);
        }
        uf
    }

    pub fn sample_and_cluster(&self, master_seed: u64, trial: u64) -> ClusterState {
        let open = self.sample_open(master_seed, trial);
        let forest = self.cluster(&open);
        ClusterState { forest, open }
    }

    /// Cluster one trial without materialising the open flags.
    pub fn sample_forest(&self, master_seed: u64, trial: u64) -> UnionFind {
        let stream = trial_stream(master_seed, trial);
        let mut uf = UnionFind::new(self.vertex_count());
        for e in &self.edges {
            if is_open(stream, e) {
                uf.union(e.a, e.b);
            }
        }
        uf
    }

    pub fn check_event(&self, event: Event) -> Result<(), PercolationError> {
        let n = self.vertex_count() as u32;
        match event {
            Event::OriginToBoundary if self.origin.is_none() => Err(PercolationError::OriginOutside),
            Event::Connected(a, b) if a >= n || b >= n => Err(PercolationError::Config("event vertex out of range")),
            _ => Ok(()),
        }
    }

    /// Whether `event` holds for the clusters in `uf`.
    pub fn event_holds(&self, uf: &mut UnionFind, event: Event) -> bool {
        match event {
            Event::Crossing => {
                let mut marked = vec![false; self.vertex_count()];
                for &v in &self.left {
                    let r = uf.find(v);
                    marked[r as usize] = true;
                }
                self.right.iter().any(|&v| marked[uf.find(v) as usize])
            }
            Event::OriginToBoundary => match self.origin {
                Some(o) => {
                    let r = uf.find(o);
                    self.boundary.iter().any(|&v| uf.find(v) == r)
                }
                None => false,
            },
            Event::Connected(a, b) => uf.connected(a, b),
        }
    }
}

#[inline]
fn is_open(stream: u64, e: &WindowEdge) -> bool {
    if e.p <= 0.0 {
        false
    } else if e.p >= 1.0 {
        true
    } else {
        edge_uniform(stream, e.key) < e.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{ScaleVector, SlabParameters};

    fn prob(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn nearest_neighbour() -> ProbabilitySequence {
        ProbabilitySequence::constant(prob(0.5))
    }

    #[test]
    fn nearest_neighbour_square() {
        let w = GraphWindow::build(&WindowSpec::LongRange {
            law: nearest_neighbour(),
            truncation: Some(TruncationLevel::new(1).unwrap()),
            x: Extent::new(0, 1),
            y: Extent::new(0, 1),
            interior: None,
        })
        .unwrap();
        assert_eq!(w.edges().len(), 4);
        assert_eq!(w.vertex_count(), 4);
    }

    #[test]
    fn long_range_row() {
        let w = GraphWindow::build(&WindowSpec::LongRange {
            law: nearest_neighbour(),
            truncation: Some(TruncationLevel::new(2).unwrap()),
            x: Extent::new(0, 2),
            y: Extent::new(0, 0),
            interior: None,
        })
        .unwrap();
        let pairs: Vec<_> = w.edges().iter().map(|e| (w.point(e.a)[0], w.point(e.b)[0])).collect();
        assert_eq!(pairs, [(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn untruncated_window_uses_full_span() {
        let w = GraphWindow::build(&WindowSpec::LongRange {
            law: nearest_neighbour(),
            truncation: None,
            x: Extent::new(0, 3),
            y: Extent::new(0, 2),
            interior: None,
        })
        .unwrap();
        // Rows: 3 * C(4, 2); columns: 4 * C(3, 2).
        assert_eq!(w.edges().len(), 3 * 6 + 4 * 3);
    }

    #[test]
    fn slab_edge_count() {
        // {0,1} x 2x2 box: two copies of a 4-cycle plus 4 rungs.
        let w = GraphWindow::build(&WindowSpec::Slab {
            d: 3,
            k: 2,
            p: prob(0.5),
            x: Extent::new(0, 1),
            y: Extent::new(0, 1),
        })
        .unwrap();
        assert_eq!(w.vertex_count(), 8);
        assert_eq!(w.edges().len(), 12);
        // Boundary ignores the confined axis.
        assert_eq!(w.boundary().len(), 8);
    }

    #[test]
    fn hypercubic_counts() {
        let w = GraphWindow::build(&WindowSpec::Hypercubic {
            d: 3,
            p: prob(0.5),
            extents: vec![Extent::new(0, 2); 3],
        })
        .unwrap();
        assert_eq!(w.vertex_count(), 27);
        assert_eq!(w.edges().len(), 3 * 2 * 9);
        assert_eq!(w.boundary().len(), 26);
        assert_eq!(w.point(w.origin().unwrap()), &[0, 0, 0]);
    }

    #[test]
    fn crossing_rectangle_l1_has_seven_edges() {
        let spec = LatticeFamily::Hypercubic { d: 2 }.crossing_spec(prob(0.5), 1);
        let w = GraphWindow::build(&spec).unwrap();
        assert_eq!(w.vertex_count(), 6);
        assert_eq!(w.edges().len(), 7);
        assert_eq!(w.left().len(), 2);
        assert_eq!(w.right().len(), 2);
    }

    #[test]
    fn slab_rejects_bad_dimension() {
        let spec = WindowSpec::Slab {
            d: 1,
            k: 2,
            p: prob(0.5),
            x: Extent::new(0, 1),
            y: Extent::new(0, 1),
        };
        assert!(GraphWindow::build(&spec).is_err());
    }

    #[test]
    fn edge_order_is_deterministic() {
        let spec = LatticeFamily::Slab { d: 4, k: 2 }.crossing_spec(prob(0.3), 3);
        let a = GraphWindow::build(&spec).unwrap();
        let b = GraphWindow::build(&spec).unwrap();
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn embedded_window_matches_long_range_keys() {
        let params = SlabParameters::new(3, 2).unwrap();
        let g = EmbeddedGraph::new(params, ScaleVector::new(vec![1, 4], &params).unwrap()).unwrap();
        let law = nearest_neighbour();
        let emb = GraphWindow::build(&WindowSpec::Embedded {
            graph: g,
            law: law.clone(),
            truncation: None,
            window: SlabWindow::square(2),
        })
        .unwrap();
        let full = GraphWindow::build(&WindowSpec::LongRange {
            law,
            truncation: Some(TruncationLevel::new(4).unwrap()),
            x: Extent::new(-8, 9),
            y: Extent::new(-2, 2),
            interior: None,
        })
        .unwrap();
        let keys = full.edge_index();
        assert!(emb.edges().iter().all(|e| keys.contains_key(&e.key)));
        assert_eq!(emb.vertex_count(), 2 * 25);
    }
}
