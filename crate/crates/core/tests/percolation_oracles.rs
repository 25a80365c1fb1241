use std::collections::VecDeque;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use trunclab_core::percolation::{
    event_estimate, exact_event_probability, Event, Extent, GraphWindow, LatticeFamily, UnionFind, WindowSpec,
};
use trunclab_core::sequence::{Probability, ProbabilitySequence, TruncationLevel};
use trunclab_core::Sequential;

fn prob(v: f64) -> Probability {
    Probability::new(v).unwrap()
}

/// Components by breadth-first search, labelled by smallest member.
fn bfs_labels(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut adj = vec![vec![]; n];
    for &(a, b) in edges {
        adj[a as usize].push(b as usize);
        adj[b as usize].push(a as usize);
    }
    let mut label = vec![u32::MAX; n];
    for s in 0..n {
        if label[s] != u32::MAX {
            continue;
        }
        label[s] = s as u32;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if label[w] == u32::MAX {
                    label[w] = s as u32;
                    queue.push_back(w);
                }
            }
        }
    }
    label
}

fn random_graph(rng: &mut StdRng, max_edges: usize) -> GraphWindow {
    let n = rng.gen_range(2..=9usize);
    let mut pairs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|a| (a + 1..n as u32).map(move |b| (a, b)))
        .collect();
    let m = rng.gen_range(1..=max_edges.min(pairs.len()));
    let points: Vec<Vec<i64>> = (0..n as i64).map(|i| vec![i, 0]).collect();
    let edges: Vec<(u32, u32, f64)> = (0..m)
        .map(|_| {
            let (a, b) = pairs.swap_remove(rng.gen_range(0..pairs.len()));
            (a, b, f64::from(rng.gen_range(0..=20u32)) / 20.0)
        })
        .collect();
    let boundary = vec![n as u32 - 1, n as u32 / 2];
    GraphWindow::from_parts(2, &points, &edges, Some(0), boundary, vec![0, 1], vec![n as u32 - 1]).unwrap()
}

#[test]
fn union_find_matches_bfs_exhaustively() {
    let mut rng = StdRng::seed_from_u64(6);
    let mut windows: Vec<GraphWindow> = (0..40).map(|_| random_graph(&mut rng, 12)).collect();
    windows.push(GraphWindow::build(&LatticeFamily::Hypercubic { d: 2 }.crossing_spec(prob(0.5), 1)).unwrap());
    windows.push(
        GraphWindow::build(&WindowSpec::Slab {
            d: 3,
            k: 2,
            p: prob(0.5),
            x: Extent::new(0, 1),
            y: Extent::new(0, 1),
        })
        .unwrap(),
    );
    for w in &windows {
        let m = w.edges().len();
        assert!(m <= 12);
        for mask in 0u32..(1 << m) {
            let open: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            let mut uf = w.cluster(&open);
            let pairs: Vec<(u32, u32)> = w
                .edges()
                .iter()
                .zip(&open)
                .filter(|(_, &o)| o)
                .map(|(e, _)| (e.a, e.b))
                .collect();
            assert_eq!(uf.labels(), bfs_labels(w.vertex_count(), &pairs));
        }
    }
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let mut rng = StdRng::seed_from_u64(7);
    let trials = 100_000;
    let mut windows: Vec<GraphWindow> = Vec::new();
    while windows.len() < 50 {
        let w = match windows.len() % 3 {
            0 => random_graph(&mut rng, 22),
            1 => {
                let seq = ProbabilitySequence::constant(prob(rng.gen_range(0.1..0.9)));
                GraphWindow::build(&WindowSpec::LongRange {
                    law: seq,
                    truncation: Some(TruncationLevel::new(rng.gen_range(1..3)).unwrap()),
                    x: Extent::new(-1, rng.gen_range(1..3)),
                    y: Extent::new(-1, 1),
                    interior: None,
                })
                .unwrap()
            }
            _ => {
                GraphWindow::build(&LatticeFamily::Hypercubic { d: 2 }.crossing_spec(prob(rng.gen_range(0.2..0.8)), 1))
                    .unwrap()
            }
        };
        if w.edges().len() <= 22 {
            windows.push(w);
        }
    }
    for (i, w) in windows.iter().enumerate() {
        let events = [
            Event::Crossing,
            Event::OriginToBoundary,
            Event::Connected(0, w.vertex_count() as u32 - 1),
        ];
        for event in events {
            let exact = exact_event_probability(w, event).unwrap();
            let est = event_estimate(w, event, trials, 1000 + i as u64, &Sequential).unwrap();
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            assert!(
                (est.value - exact).abs() <= 4.0 * sigma + 1e-12,
                "window {i} {event:?}: mc {} exact {exact}",
                est.value
            );
        }
    }
}

#[test]
fn open_sets_are_nested_in_p() {
    let ps = [0.2, 0.35, 0.5, 0.65, 0.8];
    let windows: Vec<GraphWindow> = ps
        .iter()
        .map(|&p| GraphWindow::build(&LatticeFamily::Slab { d: 3, k: 2 }.crossing_spec(prob(p), 8)).unwrap())
        .collect();
    for trial in 0..200 {
        let states: Vec<Vec<bool>> = windows.iter().map(|w| w.sample_open(42, trial)).collect();
        for pair in states.windows(2) {
            assert!(pair[0].iter().zip(&pair[1]).all(|(&a, &b)| !a || b));
        }
        let crossings: Vec<bool> = windows
            .iter()
            .zip(&states)
            .map(|(w, s)| w.event_holds(&mut w.cluster(s), Event::Crossing))
            .collect();
        assert!(crossings.windows(2).all(|c| c[0] <= c[1]));
    }
}

#[test]
fn open_sets_are_nested_in_truncation() {
    let seq = ProbabilitySequence::power_law(0.9, 0.7).unwrap();
    let build = |n: u64| {
        GraphWindow::build(&WindowSpec::LongRange {
            law: seq.clone(),
            truncation: Some(TruncationLevel::new(n).unwrap()),
            x: Extent::centered(6),
            y: Extent::centered(6),
            interior: None,
        })
        .unwrap()
    };
    let levels = [1, 2, 4, 8];
    let windows: Vec<GraphWindow> = levels.iter().map(|&n| build(n)).collect();
    for trial in 0..200 {
        let mut thetas = vec![];
        for pair in windows.windows(2) {
            let small = pair[0].sample_open(9, trial);
            let large = pair[1].sample_open(9, trial);
            let index = pair[1].edge_index();
            for (e, &open) in pair[0].edges().iter().zip(&small) {
                if open {
                    assert!(large[index[&e.key]]);
                }
            }
        }
        for w in &windows {
            let mut uf = w.sample_forest(9, trial);
            thetas.push(w.event_holds(&mut uf, Event::OriginToBoundary));
        }
        assert!(thetas.windows(2).all(|t| t[0] <= t[1]));
    }
}

#[test]
fn duplicate_edges_are_rejected() {
    let points = vec![vec![0], vec![1]];
    let err = GraphWindow::from_parts(1, &points, &[(0, 1, 0.5), (1, 0, 0.5)], None, vec![], vec![], vec![]);
    assert!(err.is_err());
}

#[test]
fn union_find_handles_long_chains() {
    let mut uf = UnionFind::new(100_000);
    for i in 0..99_999 {
        uf.union(i, i + 1);
    }
    assert!(uf.connected(0, 99_999));
    assert_eq!(uf.component_size(5), 100_000);
}
