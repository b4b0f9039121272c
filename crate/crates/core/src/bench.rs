//! Benchmark grid: instances × algorithms × seeded runs, executed on a
//! bounded worker pool, followed by the analysis exports.
//!
//! Every cell's seed is hashed from `(base_seed, instance label, algorithm
//! name, run index)`, so cells are independent of scheduling and of which
//! other cells the config lists. Finished records are written atomically
//! and skipped on rerun.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! records/<label>/<algo>/run-000.jsonl
//! oracle/<label>-k<K>.oracle.json
//! analysis/counts.csv  analysis/timings.csv
//! analysis/curves/<label>__<algo>.csv
//! analysis/domains/<label>__<algo>.csv
//! summary.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    count_table, domain_population, summarize_runs, timing_table, ward_cluster, write_counts_csv,
    write_curve_csv, write_domain_csv, write_timing_csv, CountTable, DomainTraces, DEFAULT_DOMAINS,
    DEFAULT_SMOOTHING_WINDOW,
};
use crate::decomposition::{gen_random_instance, Instance};
use crate::engine::{run_bbo, AlgoSpec, Algorithm, RunRecord};
use crate::error::{Error, Result};
use crate::oracle::{brute_force_cached, OracleResult, DEFAULT_COUNT_TOLERANCE, DEFAULT_TIE_TOLERANCE, ENUMERATION_LIMIT};
use crate::surrogate::{BETA_GRID, SIGMA2_GRID};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "INTDECOMP_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Path(PathBuf),
    Generate {
        n_rows: usize,
        n_cols: usize,
        k: usize,
        seed: u64,
        #[serde(default)]
        spectrum: Option<Vec<f64>>,
        #[serde(default)]
        label: Option<String>,
    },
}

impl InstanceSource {
    /// Relative paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Instance> {
        match self {
            InstanceSource::Path(p) => Instance::load(base.join(p)),
            InstanceSource::Generate {
                n_rows,
                n_cols,
                k,
                seed,
                spectrum,
                label,
            } => {
                let mut inst = gen_random_instance(*n_rows, *n_cols, *k, *seed, spectrum.as_deref())?;
                if let Some(l) = label {
                    inst.label = l.clone();
                }
                Ok(inst)
            }
        }
    }
}

/// An algorithm given by name (`"nbocs"`, `"fmqa08-aug"`, ...) or as a
/// full spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgoEntry {
    Name(String),
    Spec(AlgoSpec),
}

impl AlgoEntry {
    pub fn spec(&self) -> Result<AlgoSpec> {
        match self {
            AlgoEntry::Name(n) => n.parse(),
            AlgoEntry::Spec(s) => Ok(s.clone()),
        }
    }
}

fn default_schema() -> u32 {
    BENCH_SCHEMA_VERSION
}
fn default_runs() -> usize {
    25
}
fn default_rs_runs() -> usize {
    100
}
fn default_window() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub instances: Vec<InstanceSource>,
    pub algorithms: Vec<AlgoEntry>,
    #[serde(default = "default_runs")]
    pub runs_per_cell: usize,
    #[serde(default = "default_rs_runs")]
    pub rs_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Overrides every algorithm's iteration count when set.
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    /// Skip brute force (and the oracle-based exports).
    #[serde(default)]
    pub skip_oracle: bool,
}

impl BenchmarkConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        if cfg.schema_version != BENCH_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported benchmark config schema {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    fn runs_for(&self, spec: &AlgoSpec) -> usize {
        if spec.algorithm == Algorithm::Rs {
            self.rs_runs
        } else {
            self.runs_per_cell
        }
    }
}

/// First 8 bytes (little endian) of SHA-256 over the cell identity.
pub fn derive_seed(base_seed: u64, label: &str, algo: &str, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update((algo.len() as u64).to_le_bytes());
    h.update(algo.as_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Worker count: the environment override, else `requested`, else the
/// available parallelism.
pub fn worker_count(requested: Option<usize>) -> usize {
    let from_env = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    from_env
        .or(requested)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// File-name-safe version of a label.
pub fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

pub fn record_path(output_dir: &Path, label: &str, algo: &str, run: usize) -> PathBuf {
    output_dir
        .join("records")
        .join(safe_name(label))
        .join(safe_name(algo))
        .join(format!("run-{run:03}.jsonl"))
}

/// Writes through a temporary sibling and renames, so a crash never leaves
/// a truncated file under the final name.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub instance: String,
    pub algo: String,
    pub run: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub cells_total: usize,
    pub cells_run: usize,
    pub cells_skipped: usize,
    pub workers: usize,
    pub failures: Vec<CellFailure>,
    /// Analysis exports written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl BenchReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Cell<'a> {
    instance: &'a Instance,
    spec: &'a AlgoSpec,
    name: String,
    run: usize,
    path: PathBuf,
}

/// Runs every missing cell of the grid, then the analysis exports.
///
/// `config_dir` anchors relative instance paths. Cell failures are
/// collected in the report rather than aborting the grid.
pub fn run_benchmark(config: &BenchmarkConfig, config_dir: &Path, workers: Option<usize>) -> Result<BenchReport> {
    let instances = config
        .instances
        .iter()
        .map(|s| s.resolve(config_dir))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for inst in &instances {
        if !seen.insert(inst.label.clone()) {
            return Err(Error::InvalidArgument(format!("duplicate instance label '{}'", inst.label)));
        }
    }
    let mut specs = config
        .algorithms
        .iter()
        .map(AlgoEntry::spec)
        .collect::<Result<Vec<_>>>()?;
    if let Some(iters) = config.iters {
        specs.iter_mut().for_each(|s| s.n_iter = Some(iters));
    }
    let out = &config.output_dir;

    let mut cells = Vec::new();
    for inst in &instances {
        for spec in &specs {
            let name = spec.name();
            for run in 0..config.runs_for(spec) {
                cells.push(Cell {
                    instance: inst,
                    spec,
                    path: record_path(out, &inst.label, &name, run),
                    name: name.clone(),
                    run,
                });
            }
        }
    }
    let pending: Vec<&Cell> = cells.iter().filter(|c| !c.path.exists()).collect();
    let workers = worker_count(workers);
    log::info!(
        "{} cells, {} already done, {} workers",
        cells.len(),
        cells.len() - pending.len(),
        workers
    );

    let failures: Vec<CellFailure> = pool(workers)?.install(|| {
        pending
            .par_iter()
            .filter_map(|cell| {
                let seed = derive_seed(config.base_seed, &cell.instance.label, &cell.name, cell.run);
                let result = run_bbo(cell.instance, cell.spec, seed)
                    .and_then(|rec| write_atomic(&cell.path, rec.to_jsonl().as_bytes()));
                match result {
                    Ok(()) => {
                        log::debug!("done {} {} run {}", cell.instance.label, cell.name, cell.run);
                        None
                    }
                    Err(e) => {
                        log::error!("cell {} {} run {} failed: {e}", cell.instance.label, cell.name, cell.run);
                        Some(CellFailure {
                            instance: cell.instance.label.clone(),
                            algo: cell.name.clone(),
                            run: cell.run,
                            error: e.to_string(),
                        })
                    }
                }
            })
            .collect()
    });

    let outputs = export_analysis(config, &instances, &specs)?;
    let report = BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        cells_total: cells.len(),
        cells_run: pending.len() - failures.len(),
        cells_skipped: cells.len() - pending.len(),
        workers,
        failures,
        outputs,
    };
    let summary = serde_json::to_string_pretty(&report)?;
    write_atomic(&out.join("summary.json"), summary.as_bytes())?;
    Ok(report)
}

/// Loads every record present for the grid (missing cells are skipped).
fn load_cell_records(out: &Path, label: &str, name: &str, runs: usize) -> Result<Vec<RunRecord>> {
    let mut recs = Vec::new();
    for run in 0..runs {
        let p = record_path(out, label, name, run);
        if p.exists() {
            recs.push(RunRecord::load(&p)?);
        }
    }
    Ok(recs)
}

fn mean_traces(all: &[DomainTraces]) -> DomainTraces {
    let first = &all[0];
    let n = all.len() as f64;
    DomainTraces {
        steps: first.steps.clone(),
        traces: (0..first.traces.len())
            .map(|d| {
                (0..first.steps.len())
                    .map(|t| all.iter().map(|tr| tr.traces[d][t]).sum::<f64>() / n)
                    .collect()
            })
            .collect(),
    }
}

fn export_analysis(config: &BenchmarkConfig, instances: &[Instance], specs: &[AlgoSpec]) -> Result<Vec<String>> {
    let out = &config.output_dir;
    let analysis = out.join("analysis");
    let mut written = Vec::new();
    let mut oracles: BTreeMap<String, OracleResult> = BTreeMap::new();
    if !config.skip_oracle {
        for inst in instances.iter().filter(|i| i.spin_len() <= ENUMERATION_LIMIT) {
            let o = brute_force_cached(inst, DEFAULT_TIE_TOLERANCE, out.join("oracle"))?;
            oracles.insert(inst.label.clone(), o);
        }
    }

    let mut all_records = Vec::new();
    let mut by_algo: Vec<(String, Vec<RunRecord>)> = Vec::new();
    for spec in specs {
        let name = spec.name();
        let mut algo_records = Vec::new();
        for inst in instances {
            let recs = load_cell_records(out, &inst.label, &name, config.runs_for(spec))?;
            if let Some(oracle) = oracles.get(&inst.label) {
                let cell = format!("{}__{}.csv", safe_name(&inst.label), safe_name(&name));
                if recs.len() >= 2 && recs.iter().all(|r| r.evaluations() == recs[0].evaluations()) {
                    let curve = summarize_runs(&recs, oracle)?;
                    write_curve_csv(analysis.join("curves").join(&cell), &curve)?;
                    written.push(format!("analysis/curves/{cell}"));
                }
                if oracle.minimizers.len() >= DEFAULT_DOMAINS && !recs.is_empty() {
                    let model = ward_cluster(&oracle.minimizers, DEFAULT_DOMAINS)?;
                    let traces = recs
                        .iter()
                        .map(|r| domain_population(r, &model, config.smoothing_window))
                        .collect::<Result<Vec<_>>>()?;
                    write_domain_csv(analysis.join("domains").join(&cell), &mean_traces(&traces))?;
                    written.push(format!("analysis/domains/{cell}"));
                }
            }
            algo_records.extend(recs);
        }
        all_records.extend(algo_records.iter().cloned());
        if !algo_records.is_empty() {
            by_algo.push((name, algo_records));
        }
    }
    if !by_algo.is_empty() {
        write_timing_csv(analysis.join("timings.csv"), &timing_table(&by_algo)?)?;
        written.push("analysis/timings.csv".into());
    }
    if !oracles.is_empty() {
        let table: CountTable = count_table(&all_records, &oracles, DEFAULT_COUNT_TOLERANCE)?;
        write_counts_csv(analysis.join("counts.csv"), &table)?;
        written.push("analysis/counts.csv".into());
    }
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridParam {
    Sigma2,
    Beta,
}

impl std::str::FromStr for GridParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma2" => Ok(GridParam::Sigma2),
            "beta" => Ok(GridParam::Beta),
            other => Err(Error::Parse(format!(
                "unknown hyperparameter '{other}' (expected sigma2 or beta)"
            ))),
        }
    }
}

impl GridParam {
    pub fn grid(self) -> &'static [f64] {
        match self {
            GridParam::Sigma2 => &SIGMA2_GRID,
            GridParam::Beta => &BETA_GRID,
        }
    }

    /// The algorithm whose prior the parameter belongs to.
    pub fn algorithm(self) -> Algorithm {
        match self {
            GridParam::Sigma2 => Algorithm::Nbocs,
            GridParam::Beta => Algorithm::Gbocs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub value: f64,
    pub mean_final_cost: f64,
    pub final_costs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema_version: u32,
    pub instance: String,
    pub param: GridParam,
    pub runs: usize,
    /// Sorted by `mean_final_cost`, ascending.
    pub points: Vec<GridPoint>,
}

/// Runs `runs` seeded optimizations for every grid value of `param`.
pub fn grid_search(
    instance: &Instance,
    param: GridParam,
    base: &AlgoSpec,
    runs: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<GridReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("grid search needs at least one run".into()));
    }
    let mut spec = base.clone();
    spec.algorithm = param.algorithm();
    let jobs: Vec<(usize, usize)> = (0..param.grid().len())
        .flat_map(|g| (0..runs).map(move |r| (g, r)))
        .collect();
    let results: Vec<Result<f64>> = pool(worker_count(workers))?.install(|| {
        jobs.par_iter()
            .map(|&(g, r)| {
                let value = param.grid()[g];
                let mut s = spec.clone();
                match param {
                    GridParam::Sigma2 => s.hyper.sigma2 = value,
                    GridParam::Beta => s.hyper.beta = value,
                }
                let tag = format!("{}-{:?}={value:e}", s.name(), param);
                let seed = derive_seed(base_seed, &instance.label, &tag, r);
                run_bbo(instance, &s, seed).map(|rec| rec.final_best())
            })
            .collect()
    });
    let mut points: Vec<GridPoint> = param
        .grid()
        .iter()
        .map(|&value| GridPoint {
            value,
            mean_final_cost: 0.0,
            final_costs: Vec::with_capacity(runs),
        })
        .collect();
    for (&(g, _), res) in jobs.iter().zip(results) {
        points[g].final_costs.push(res?);
    }
    for p in &mut points {
        p.mean_final_cost = p.final_costs.iter().sum::<f64>() / runs as f64;
    }
    points.sort_by(|a, b| a.mean_final_cost.total_cmp(&b.mean_final_cost));
    Ok(GridReport {
        schema_version: BENCH_SCHEMA_VERSION,
        instance: instance.label.clone(),
        param,
        runs,
        points,
    })
}
