//! `intdecomp` command-line front end: instance generation, single runs,
//! the exhaustive oracle, benchmark grids and hyperparameter sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use intdecomp::bench::{derive_seed, grid_search, run_benchmark, write_atomic, BenchmarkConfig, GridParam};
use intdecomp::decomposition::{gen_random_instance, greedy_decompose, shrink_svd, Instance};
use intdecomp::engine::{run_bbo, AlgoSpec, RunRecord};
use intdecomp::ising::{SolverConfig, SolverKind};
use intdecomp::linalg::RealMatrix;
use intdecomp::oracle::{brute_force, brute_force_cached, DEFAULT_TIE_TOLERANCE};

/// Exit code when a benchmark finishes with failed cells.
const EXIT_PARTIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "intdecomp", version, about = "Binary-real matrix decomposition by black-box optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file (random Gaussian, or shrunk from a source matrix).
    Gen(GenArgs),
    /// Run black-box optimization on an instance.
    Run(RunArgs),
    /// Enumerate every spin assignment and cache the exact optimum.
    Brute(BruteArgs),
    /// Execute a benchmark grid from a JSON config, then export the analysis.
    Bench(BenchArgs),
    /// Sweep one prior hyperparameter over its grid on a single instance.
    Gridsearch(GridArgs),
    /// Rank-one greedy baseline.
    Greedy(GreedyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Rows of W.
    #[arg(long)]
    n: usize,
    /// Columns of W.
    #[arg(long)]
    d: usize,
    /// Inner dimension (columns of M).
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated singular values, min(n, d) of them.
    #[arg(long, value_delimiter = ',')]
    spectrum: Option<Vec<f64>>,
    /// JSON matrix (array of rows) to shrink via its SVD instead of sampling.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Source rows to keep (default 0..n).
    #[arg(long, value_delimiter = ',', requires = "source")]
    rows: Option<Vec<usize>>,
    /// Source columns to keep (default 0..d).
    #[arg(long, value_delimiter = ',', requires = "source")]
    cols: Option<Vec<usize>>,
    /// Singular components to keep (default: all).
    #[arg(long, value_delimiter = ',', requires = "source")]
    svs: Option<Vec<usize>>,
    #[arg(long)]
    label: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// rs, vbocs, nbocs, gbocs, fmqa08, fmqa12 (fmqaNN for other factor ranks).
    #[arg(long, default_value = "nbocs")]
    algo: String,
    #[arg(long, default_value = "sa")]
    solver: SolverKind,
    /// Optimization iterations after the initial design (default 2n²).
    #[arg(long)]
    iters: Option<usize>,
    /// Initial random evaluations (default n).
    #[arg(long)]
    init: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of runs; seeds beyond a single run are derived from --seed.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Add the symmetry orbit of every observation to the training data.
    #[arg(long)]
    augment: bool,
    /// Prior variance for nbocs.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Inverse-gamma scale for gbocs.
    #[arg(long)]
    beta: Option<f64>,
    /// Factor rank for fmqa (overrides the rank in the name).
    #[arg(long)]
    kfm: Option<usize>,
    #[arg(long)]
    gibbs_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Record file for a single run, directory for several.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BruteArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Relative tolerance for counting ties with the optimum.
    #[arg(long, default_value_t = DEFAULT_TIE_TOLERANCE)]
    tol: f64,
    /// Oracle cache directory.
    #[arg(long, default_value = "oracle-cache")]
    cache_dir: PathBuf,
    /// Bypass the cache.
    #[arg(long)]
    no_cache: bool,
    /// Also write the result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config (JSON).
    config: PathBuf,
    /// Worker threads (INTDECOMP_WORKERS takes precedence).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    instance: PathBuf,
    /// sigma2 (nbocs) or beta (gbocs).
    #[arg(long)]
    param: String,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value = "sa")]
    solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Report path (JSON); stdout table only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GreedyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    alternations: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Brute(a) => cmd_brute(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Greedy(a) => cmd_greedy(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Prints to stdout, treating a closed pipe (`| head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    let mut inst = match &a.source {
        None => gen_random_instance(a.n, a.d, a.k, a.seed, a.spectrum.as_deref())?,
        Some(src) => {
            let text = std::fs::read_to_string(src).with_context(|| format!("reading {}", src.display()))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text).context("source must be a JSON array of rows")?;
            let source = RealMatrix::from_rows(&rows)?;
            let rows = a.rows.unwrap_or_else(|| (0..a.n).collect());
            let cols = a.cols.unwrap_or_else(|| (0..a.d).collect());
            let svs = a.svs.unwrap_or_else(|| (0..source.rows().min(source.cols())).collect());
            let w = shrink_svd(&source, a.n, a.d, &rows, &cols, &svs)?;
            let stem = src.file_stem().map_or("source".into(), |s| s.to_string_lossy().into_owned());
            Instance::new(format!("{stem}-{}x{}-k{}", a.n, a.d, a.k), w, a.k)?
        }
    };
    if let Some(label) = a.label {
        inst.label = label;
    }
    let json = inst.to_json();
    match &a.out {
        Some(p) => {
            write_atomic(p, json.as_bytes())?;
            log::info!("wrote {} (n = {})", p.display(), inst.spin_len());
        }
        None => print_stdout(&json)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn build_spec(a: &RunArgs) -> Result<AlgoSpec> {
    let mut spec: AlgoSpec = a.algo.parse()?;
    spec.augment |= a.augment;
    spec.solver = SolverConfig {
        sweeps: a.sweeps.unwrap_or(SolverConfig::DEFAULT_SWEEPS),
        restarts: a.restarts.unwrap_or(SolverConfig::DEFAULT_RESTARTS),
        ..SolverConfig::new(a.solver)
    };
    if let Some(v) = a.sigma2 {
        spec.hyper.sigma2 = v;
    }
    if let Some(v) = a.beta {
        spec.hyper.beta = v;
    }
    if let Some(v) = a.kfm {
        spec.hyper.fm.k_fm = v;
    }
    if let Some(v) = a.gibbs_steps {
        spec.hyper.gibbs_steps = v;
    }
    if let Some(v) = a.epochs {
        spec.hyper.fm.epochs = v;
    }
    if let Some(v) = a.lr {
        spec.hyper.fm.learning_rate = v;
    }
    spec.n_iter = a.iters;
    spec.n_init = a.init;
    Ok(spec)
}

fn report_run(inst: &Instance, rec: &RunRecord) {
    let best = rec.final_best();
    let rel = if inst.w_norm() > 0.0 { best.max(0.0).sqrt() / inst.w_norm() } else { 0.0 };
    println!(
        "{} {} seed={} evals={} best_cost={best:.6e} rel_residual={rel:.6} time={:.2}s",
        rec.instance_label,
        rec.algo.name(),
        rec.seed,
        rec.evaluations(),
        rec.total_seconds
    );
    if let Some(m) = rec.best_candidate() {
        println!("  best M = {}", m.to_sign_string());
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let inst = load_instance(&a.instance)?;
    let spec = build_spec(&a)?;
    log::info!(
        "{} on {} (n = {}): {} initial + {} iterations",
        spec.name(),
        inst.label,
        inst.spin_len(),
        spec.n_init_for(inst.spin_len()),
        spec.n_iter_for(inst.spin_len())
    );
    for r in 0..a.runs {
        let seed = if a.runs == 1 { a.seed } else { derive_seed(a.seed, &inst.label, &spec.name(), r) };
        let rec = run_bbo(&inst, &spec, seed)?;
        report_run(&inst, &rec);
        if let Some(out) = &a.out {
            let path = if a.runs == 1 { out.clone() } else { out.join(format!("run-{r:03}.jsonl")) };
            write_atomic(&path, rec.to_jsonl().as_bytes())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_brute(a: BruteArgs) -> Result<ExitCode> {
    let inst = load_instance(&a.instance)?;
    log::info!("enumerating 2^{} states of {}", inst.spin_len(), inst.label);
    let res = if a.no_cache {
        brute_force(&inst, a.tol)?
    } else {
        brute_force_cached(&inst, a.tol, &a.cache_dir)?
    };
    if let Some(out) = &a.out {
        res.save(out)?;
    }
    let second = res.second_best_cost.map_or("none".into(), |c| format!("{c:.6e}"));
    println!(
        "{} states={} best_cost={:.6e} minimizers={} second_best={second} time={:.2}s",
        res.instance_label,
        res.states_enumerated,
        res.best_cost,
        res.minimizers.len(),
        res.elapsed_seconds
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let config = BenchmarkConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let report = run_benchmark(&config, base, a.workers)?;
    println!(
        "cells: {} total, {} run, {} skipped, {} failed ({} workers)",
        report.cells_total,
        report.cells_run,
        report.cells_skipped,
        report.failures.len(),
        report.workers
    );
    for f in &report.failures {
        println!("FAILED {} {} run {}: {}", f.instance, f.algo, f.run, f.error);
    }
    for o in &report.outputs {
        println!("wrote {}", config.output_dir.join(o).display());
    }
    Ok(if report.succeeded() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL_FAILURE) })
}

fn cmd_gridsearch(a: GridArgs) -> Result<ExitCode> {
    let param: GridParam = a.param.parse()?;
    let inst = load_instance(&a.instance)?;
    let mut base = AlgoSpec::new(param.algorithm());
    base.solver = SolverConfig::new(a.solver);
    base.n_iter = a.iters;
    let report = grid_search(&inst, param, &base, a.runs, a.seed, a.workers)?;
    println!("{:>10}  {:>14}", a.param, "mean_final_cost");
    for p in &report.points {
        println!("{:>10}  {:>14.6e}", p.value, p.mean_final_cost);
    }
    if let Some(out) = &a.out {
        write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_greedy(a: GreedyArgs) -> Result<ExitCode> {
    let inst = load_instance(&a.instance)?;
    let res = greedy_decompose(&inst, a.alternations)?;
    println!(
        "{} greedy cost={:.6e} rel_residual={:.6}",
        inst.label, res.cost, res.relative_residual
    );
    println!("  M = {}", res.m.to_sign_string());
    Ok(ExitCode::SUCCESS)
}
