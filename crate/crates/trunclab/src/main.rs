use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use trunclab::calibration;
use trunclab::config::{LoadedConfig, SequenceSpec};
use trunclab::family::{parse_lattice, FamilyArg};
use trunclab::output::{self, Manifest, Seeds, Timings, Versions};
use trunclab::{exit_code, Parallel, EXIT_HYPOTHESIS, EXIT_PASS, EXIT_USAGE, EXIT_VERIFICATION};
use trunclab_core::embedding::{
    select_scales, verify_isomorphism, EdgeLaw, EmbeddedGraph, EmbeddingError, SlabParameters, SlabWindow,
};
use trunclab_core::harness::run_pipeline;
use trunclab_core::percolation::{
    crossing_estimate, origin_boundary_estimate, Estimate, Extent, GraphWindow, LatticeFamily, WindowSpec,
};
use trunclab_core::sequence::{Probability, ProbabilitySequence, TruncationLevel};
use trunclab_core::thresholds::{estimate_pc, family_seed, CalibrationRow, CalibrationTable, PcSettings};

#[derive(Parser)]
#[command(name = "trunclab", version, about = "Truncated long-range percolation laboratory")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write report, estimates and manifest.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a crossing or origin-to-boundary probability; prints one CSV row.
    Estimate(EstimateArgs),
    /// (Re)compute calibration rows.
    Pc(PcArgs),
    /// Check the slab embedding exhaustively on a window.
    VerifyEmbedding(VerifyArgs),
    /// Print the scales n_j and the truncation level N.
    Scales {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        slab: SlabArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EventArg {
    Crossing,
    Theta,
}

#[derive(Args)]
struct EstimateArgs {
    /// z<d>, slab:<d>:<K> or long-range.
    #[arg(long)]
    family: FamilyArg,
    /// Edge probability; for long-range, the constant p_n unless --config gives a law.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long = "L")]
    l: u32,
    /// Truncation level (long-range only).
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EventArg::Crossing)]
    event: EventArg,
    /// Take the long-range law from this config's [sequence].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the column names first.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct PcArgs {
    /// z<d> or slab:<d>:<K>; repeatable.
    #[arg(long, required = true, value_parser = parse_lattice)]
    family: Vec<LatticeFamily>,
    /// Calibration CSV to update (created when missing).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Take settings, seed and table path from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    l_schedule: Option<Vec<u32>>,
    #[arg(long)]
    bracket_tol: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    scan_step: Option<f64>,
    /// Seed from which each family's seed is derived.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SlabArgs {
    #[arg(long, requires = "k")]
    d: Option<usize>,
    #[arg(long, requires = "d")]
    k: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    slab: SlabArgs,
    /// Bound on |k| and |m|; defaults to the config's verify_window.
    #[arg(long)]
    window: Option<i64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Pipeline { config, out } => pipeline(&config, &out),
        Command::Estimate(args) => estimate(args),
        Command::Pc(args) => pc(args),
        Command::VerifyEmbedding(args) => verify_embedding(args),
        Command::Scales { config, slab } => scales(&config, &slab),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn pipeline(config: &Path, out: &Path) -> Result<u8> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let t0 = Instant::now();
    let loaded = LoadedConfig::load(config)?;
    let cfg = loaded.pipeline_config()?;
    let table_path = loaded.calibration_table_path();
    let mut calib = match &table_path {
        Some(p) => calibration::load(p)?,
        None => CalibrationTable::new(),
    };
    let load_ms = t0.elapsed().as_millis();

    let t1 = Instant::now();
    let report = run_pipeline(&cfg, &mut calib, &Parallel);
    let pipeline_ms = t1.elapsed().as_millis();

    let t2 = Instant::now();
    let mut outputs = output::write_results(out, &loaded.text, &cfg, &report, &calib)?;
    if let Some(p) = &table_path {
        calibration::save(&calib, p)?;
    }
    outputs.push(output::MANIFEST_FILE);
    let status = output::status_line(&report.status);
    let manifest = Manifest {
        command: std::env::args().collect(),
        config_path: config.display().to_string(),
        config_text: loaded.text.clone(),
        config: cfg.clone(),
        seeds: Seeds::of(&cfg),
        versions: Versions::default(),
        threads: rayon::current_num_threads(),
        started_unix_s: started,
        timings: Timings {
            load_ms,
            pipeline_ms,
            write_ms: t2.elapsed().as_millis(),
        },
        status: status.clone(),
        outputs,
    };
    output::write_manifest(out, &manifest)?;

    println!("{status}");
    if let Some(scales) = &report.scales {
        println!("scales = {scales:?}, N = {}", scales.last().copied().unwrap_or(0));
    }
    for row in &report.theta {
        let full = row
            .full
            .as_ref()
            .map_or("skipped".into(), |e| format!("{:.4}", e.value));
        println!(
            "L = {}: theta embedded = {:.4}, full = {full}",
            row.l, row.embedded.value
        );
    }
    println!("outputs in {}", out.display());
    Ok(exit_code(&report.status))
}

fn estimate(a: EstimateArgs) -> Result<u8> {
    let exec = Parallel;
    let l = a.l;
    if l == 0 {
        bail!("--L must be positive");
    }
    let (est, params): (Estimate, String) = match a.family {
        FamilyArg::Lattice(family) => {
            if a.n.is_some() {
                bail!("--N applies to the long-range family only");
            }
            let p = Probability::new(a.p.context("--p is required for lattice families")?)?;
            let est = match a.event {
                EventArg::Crossing => crossing_estimate(family, p, l, a.trials, a.seed, &exec)?,
                EventArg::Theta => {
                    let r = Extent::centered(i64::from(l));
                    let spec = match family {
                        LatticeFamily::Hypercubic { d } => WindowSpec::Hypercubic {
                            d,
                            p,
                            extents: vec![r; d],
                        },
                        LatticeFamily::Slab { d, k } => WindowSpec::Slab { d, k, p, x: r, y: r },
                    };
                    origin_boundary_estimate(&GraphWindow::build(&spec)?, a.trials, a.seed, &exec)?
                }
            };
            (est, format!("p={};L={l}", p.get()))
        }
        FamilyArg::LongRange => {
            let (law, law_desc) = match (&a.config, a.p) {
                (Some(path), None) => {
                    let loaded = LoadedConfig::load(path)?;
                    let kind = match loaded.file.sequence {
                        SequenceSpec::Constant { .. } => "constant",
                        SequenceSpec::PowerLaw { .. } => "power_law",
                        SequenceSpec::Lacunary { .. } => "lacunary",
                        SequenceSpec::Table { .. } => "table",
                    };
                    (loaded.sequence()?, format!("law={kind}"))
                }
                (None, Some(p)) => (ProbabilitySequence::constant(Probability::new(p)?), format!("p={p}")),
                _ => bail!("long-range needs exactly one of --p and --config"),
            };
            let truncation = a.n.map(TruncationLevel::new).transpose()?;
            let li = i64::from(l);
            let (x, y) = match a.event {
                EventArg::Crossing => (Extent::new(0, li + 1), Extent::new(0, li)),
                EventArg::Theta => (Extent::centered(li), Extent::centered(li)),
            };
            let window = GraphWindow::build(&WindowSpec::LongRange {
                law,
                truncation,
                x,
                y,
                interior: None,
            })?;
            let est = match a.event {
                EventArg::Crossing => trunclab_core::percolation::event_estimate(
                    &window,
                    trunclab_core::percolation::Event::Crossing,
                    a.trials,
                    a.seed,
                    &exec,
                )?,
                EventArg::Theta => origin_boundary_estimate(&window, a.trials, a.seed, &exec)?,
            };
            let n = a.n.map_or("inf".into(), |n| n.to_string());
            (est, format!("{law_desc};L={l};N={n}"))
        }
    };
    let event = match a.event {
        EventArg::Crossing => "crossing",
        EventArg::Theta => "theta",
    };
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    if a.header {
        w.write_record(["family", "params", "event", "value", "half_width", "trials", "seed"])?;
    }
    w.write_record([
        a.family.to_string(),
        params,
        event.into(),
        est.value.to_string(),
        est.half_width.to_string(),
        est.trials.to_string(),
        est.master_seed.to_string(),
    ])?;
    w.flush()?;
    Ok(EXIT_PASS)
}

fn pc(a: PcArgs) -> Result<u8> {
    let loaded = a.config.as_deref().map(LoadedConfig::load).transpose()?;
    let mut settings = match &loaded {
        Some(c) => c.file.calibration.settings(),
        None => PcSettings::new(vec![16, 32, 64], 0.01, 1000),
    };
    if let Some(v) = a.l_schedule {
        settings.l_schedule = v;
    }
    if let Some(v) = a.bracket_tol {
        settings.bracket_tol = v;
    }
    if let Some(v) = a.trials {
        settings.trials_per_probe = v;
    }
    if let Some(v) = a.scan_step {
        settings.scan_step = v;
    }
    let seed = match (a.seed, &loaded) {
        (Some(s), _) => s,
        (None, Some(c)) => c.pipeline_config()?.calibration_seed(),
        (None, None) => 0,
    };
    let table_path = a
        .table
        .or_else(|| loaded.as_ref().and_then(|c| c.calibration_table_path()));
    let mut table = match &table_path {
        Some(p) => calibration::load(p)?,
        None => CalibrationTable::new(),
    };

    let mut computed = CalibrationTable::new();
    let mut code = EXIT_PASS;
    for family in a.family {
        match estimate_pc(family, &settings, family_seed(seed, family), &Parallel) {
            Ok(est) => {
                let row = CalibrationRow::from_estimate(&est, &settings);
                table.upsert(row.clone());
                computed.upsert(row);
            }
            Err(e) => {
                eprintln!("{family}: {e}");
                code = EXIT_HYPOTHESIS;
            }
        }
    }
    if let Some(p) = &table_path {
        calibration::save(&table, p)?;
    }
    calibration::write_table(&computed, io::stdout().lock())?;
    Ok(code)
}

fn slab_from(args: &SlabArgs, loaded: &LoadedConfig) -> Result<SlabParameters> {
    match (args.d, args.k) {
        (Some(d), Some(k)) => Ok(SlabParameters::new(d, k)?),
        _ => loaded
            .slab()?
            .context("slab parameters are needed: pass --d and --k or add a [slab] section"),
    }
}

fn hypothesis_failure(e: &EmbeddingError) -> bool {
    matches!(e, EmbeddingError::HypothesisNotWitnessed { .. })
}

fn scales(config: &Path, slab: &SlabArgs) -> Result<u8> {
    let loaded = LoadedConfig::load(config)?;
    let params = slab_from(slab, &loaded)?;
    let seq = loaded.sequence()?;
    let eps = loaded.certificate()?.epsilon();
    match select_scales(&seq, eps, &params, loaded.file.search_limit) {
        Ok(s) => {
            let mut out = io::stdout().lock();
            for (j, n) in s.as_slice().iter().enumerate() {
                writeln!(out, "n_{} = {n}", j + 1)?;
            }
            writeln!(out, "N = {}", s.last())?;
            Ok(EXIT_PASS)
        }
        Err(e) if hypothesis_failure(&e) => {
            eprintln!("hypothesis-not-witnessed: {e}");
            Ok(EXIT_HYPOTHESIS)
        }
        Err(e) => Err(e.into()),
    }
}

fn verify_embedding(a: VerifyArgs) -> Result<u8> {
    let loaded = LoadedConfig::load(&a.config)?;
    let params = slab_from(&a.slab, &loaded)?;
    let seq = loaded.sequence()?;
    let eps = loaded.certificate()?.epsilon();
    let radius = a.window.unwrap_or(loaded.file.verify_window);
    if radius < 0 {
        bail!("--window must be nonnegative");
    }
    let scales = match select_scales(&seq, eps, &params, loaded.file.search_limit) {
        Ok(s) => s,
        Err(e) if hypothesis_failure(&e) => {
            eprintln!("hypothesis-not-witnessed: {e}");
            return Ok(EXIT_HYPOTHESIS);
        }
        Err(e) => return Err(e.into()),
    };
    let graph = EmbeddedGraph::new(params, scales)?;
    let report = verify_isomorphism(&graph, SlabWindow::square(radius), Some(EdgeLaw { seq: &seq, eps }));
    let mut out = io::stdout().lock();
    match a.format {
        Format::Json => {
            #[derive(serde::Serialize)]
            struct Json<'a> {
                passed: bool,
                report: &'a trunclab_core::embedding::IsomorphismReport,
            }
            serde_json::to_writer_pretty(
                &mut out,
                &Json {
                    passed: report.passed(),
                    report: &report,
                },
            )?;
            writeln!(out)?;
        }
        Format::Text => {
            let yes = |b: bool| if b { "yes" } else { "no" };
            writeln!(out, "slab d = {}, K = {}", params.d(), params.k())?;
            writeln!(out, "scales = {:?}, N = {}", report.scales, graph.scales().last())?;
            writeln!(
                out,
                "window |k|, |m| <= {radius}: {} vertices, {} slab edges, {} pairs",
                report.vertices, report.slab_edges, report.pairs_checked
            )?;
            writeln!(out, "injective: {}", yes(report.injective))?;
            writeln!(out, "adjacency equivalent: {}", yes(report.adjacency_equivalent))?;
            writeln!(out, "image edges distinct: {}", yes(report.edges_distinct))?;
            writeln!(out, "edge lengths in scales: {}", yes(report.lengths_ok))?;
            if let Some(ok) = report.probabilities_ok {
                writeln!(out, "edge probabilities >= eps: {}", yes(ok))?;
            }
            writeln!(out, "max edge length: {}", report.max_edge_length)?;
            if let Some(c) = &report.counterexample {
                writeln!(out, "counterexample: {c:?}")?;
            }
            writeln!(out, "result: {}", if report.passed() { "PASS" } else { "FAIL" })?;
        }
    }
    Ok(if report.passed() { EXIT_PASS } else { EXIT_VERIFICATION })
}
