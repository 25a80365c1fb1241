use trunclab::config::LoadedConfig;
use trunclab::output;
use trunclab::Parallel;
use trunclab_core::harness::run_pipeline;
use trunclab_core::percolation::{crossing_estimate, LatticeFamily};
use trunclab_core::sequence::Probability;
use trunclab_core::thresholds::{estimate_pc, CalibrationTable, PcSettings};
use trunclab_core::{Sequential, TrialExecutor};

#[test]
fn map_trials_keeps_index_order() {
    let f = |i: u64| i.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 7;
    assert_eq!(Parallel.map_trials(10_000, f), Sequential.map_trials(10_000, f));
    assert_eq!(
        Parallel.count_successes(10_000, |i| f(i) % 3 == 0),
        Sequential.count_successes(10_000, |i| f(i) % 3 == 0)
    );
}

#[test]
fn crossing_estimates_are_schedule_independent() {
    for family in [LatticeFamily::Hypercubic { d: 2 }, LatticeFamily::Slab { d: 4, k: 2 }] {
        let p = Probability::new(0.4).unwrap();
        let a = crossing_estimate(family, p, 10, 3000, 99, &Sequential).unwrap();
        let b = crossing_estimate(family, p, 10, 3000, 99, &Parallel).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn threshold_rows_are_schedule_independent() {
    let settings = PcSettings::new(vec![6, 10], 0.02, 400);
    let family = LatticeFamily::Slab { d: 3, k: 2 };
    let a = estimate_pc(family, &settings, 3, &Sequential).unwrap();
    let b = estimate_pc(family, &settings, 3, &Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pipeline_report_is_schedule_independent() {
    let text = r#"
master_seed = 5
l_list = [3, 6]
trials = 200
containment_trials = 30
verify_window = 2

[sequence]
kind = "power_law"
amplitude = 0.95
exponent = 0.05

[certificate]
epsilon = 0.45
evidence = "p_n >= 0.45 for every n up to 3 * 10^6"

[budget]
d_max = 3
k_max = 3

[calibration]
l_schedule = [6, 10]
trials_per_probe = 300
bracket_tol = 0.02
"#;
    let cfg = LoadedConfig::parse(text, std::path::Path::new("p.toml"))
        .unwrap()
        .pipeline_config()
        .unwrap();
    let a = run_pipeline(&cfg, &mut CalibrationTable::new(), &Sequential);
    let b = run_pipeline(&cfg, &mut CalibrationTable::new(), &Parallel);
    assert!(a.status.passed(), "{:?}", a.status);
    assert_eq!(output::report_json(&a).unwrap(), output::report_json(&b).unwrap());
}
