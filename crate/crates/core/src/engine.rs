//! Black-box optimization driver.
//!
//! A run draws `n_init` uniform random assignments, then repeats: fit a
//! surrogate to every observation so far, turn it into an Ising problem,
//! minimize that, and evaluate the minimizer on the true cost. Every
//! evaluation is traced with its timings. All randomness flows from one
//! master generator seeded by the run seed.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{symmetry_orbit, CostEvaluator, Instance, SpinAssignment};
use crate::error::{Error, Result};
use crate::ising::{solve, IsingProblem, SolverConfig, SolverKind};
use crate::surrogate::{
    fit_blr, fit_fm_with, to_quadratic, Dataset, FmConfig, GramStats, Prior, QuadraticModel,
    DEFAULT_BETA, DEFAULT_GIBBS_STEPS, DEFAULT_SIGMA2,
};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rs,
    Vbocs,
    Nbocs,
    Gbocs,
    Fmqa,
}

/// Which observations get their symmetry orbit added to the dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentScope {
    #[default]
    Both,
    Initial,
    Iterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub sigma2: f64,
    pub beta: f64,
    pub gibbs_steps: usize,
    pub fm: FmConfig,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            sigma2: DEFAULT_SIGMA2,
            beta: DEFAULT_BETA,
            gibbs_steps: DEFAULT_GIBBS_STEPS,
            fm: FmConfig::new(8),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoSpec {
    pub algorithm: Algorithm,
    pub solver: SolverConfig,
    pub hyper: Hyper,
    pub augment: bool,
    #[serde(default)]
    pub augment_scope: AugmentScope,
    /// Defaults to `n` when unset.
    pub n_init: Option<usize>,
    /// Defaults to `2n²` when unset.
    pub n_iter: Option<usize>,
}

impl AlgoSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            solver: SolverConfig::new(SolverKind::Sa),
            hyper: Hyper::default(),
            augment: false,
            augment_scope: AugmentScope::Both,
            n_init: None,
            n_iter: None,
        }
    }

    pub fn fmqa(k_fm: usize) -> Self {
        let mut spec = Self::new(Algorithm::Fmqa);
        spec.hyper.fm.k_fm = k_fm;
        spec
    }

    pub fn with_iters(mut self, n_iter: usize) -> Self {
        self.n_iter = Some(n_iter);
        self
    }

    pub fn with_augment(mut self, augment: bool) -> Self {
        self.augment = augment;
        self
    }

    pub fn n_init_for(&self, n: usize) -> usize {
        self.n_init.unwrap_or(n)
    }

    pub fn n_iter_for(&self, n: usize) -> usize {
        self.n_iter.unwrap_or(2 * n * n)
    }

    /// Short name: `rs`, `vbocs`, `nbocs`, `gbocs` or `fmqaNN`, with an
    /// `-aug` suffix when augmenting.
    pub fn name(&self) -> String {
        let base = match self.algorithm {
            Algorithm::Rs => "rs".to_string(),
            Algorithm::Vbocs => "vbocs".to_string(),
            Algorithm::Nbocs => "nbocs".to_string(),
            Algorithm::Gbocs => "gbocs".to_string(),
            Algorithm::Fmqa => format!("fmqa{:02}", self.hyper.fm.k_fm),
        };
        if self.augment && self.algorithm != Algorithm::Rs {
            format!("{base}-aug")
        } else {
            base
        }
    }
}

impl FromStr for AlgoSpec {
    type Err = Error;

    /// Accepts the names produced by [`AlgoSpec::name`].
    fn from_str(s: &str) -> Result<Self> {
        let (base, augment) = match s.strip_suffix("-aug") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let spec = match base {
            "rs" => AlgoSpec::new(Algorithm::Rs),
            "vbocs" => AlgoSpec::new(Algorithm::Vbocs),
            "nbocs" => AlgoSpec::new(Algorithm::Nbocs),
            "gbocs" => AlgoSpec::new(Algorithm::Gbocs),
            _ => match base.strip_prefix("fmqa").and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if k >= 1 => AlgoSpec::fmqa(k),
                _ => {
                    return Err(Error::Parse(format!(
                        "unknown algorithm '{s}' (expected rs, vbocs, nbocs, gbocs, fmqa08, fmqa12)"
                    )))
                }
            },
        };
        Ok(spec.with_augment(augment && base != "rs"))
    }
}

impl fmt::Display for AlgoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// One black-box evaluation. `step` counts evaluations from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub step: usize,
    pub candidate: SpinAssignment,
    pub cost: f64,
    pub best_cost_so_far: f64,
    pub surrogate_fit_seconds: f64,
    pub solve_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub instance_label: String,
    pub algo: AlgoSpec,
    pub seed: u64,
    pub n_rows: usize,
    pub k: usize,
    pub n_init: usize,
    /// Final dataset size, augmentation included.
    pub dataset_rows: usize,
    pub iterations: Vec<IterationRecord>,
    pub total_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    label: String,
    algo: String,
    spec: AlgoSpec,
    seed: u64,
    n: usize,
    n_rows: usize,
    k: usize,
    n_init: usize,
    dataset_rows: usize,
    total_seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct Line {
    step: usize,
    x: String,
    y: f64,
    best: f64,
    t_fit: f64,
    t_solve: f64,
    t_eval: f64,
}

impl RunRecord {
    pub fn n(&self) -> usize {
        self.n_rows * self.k
    }

    pub fn evaluations(&self) -> usize {
        self.iterations.len()
    }

    pub fn best_trace(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.best_cost_so_far).collect()
    }

    pub fn final_best(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |it| it.best_cost_so_far)
    }

    /// The best assignment seen (first occurrence of the final best cost).
    pub fn best_candidate(&self) -> Option<&SpinAssignment> {
        let best = self.final_best();
        self.iterations.iter().find(|it| it.cost == best).map(|it| &it.candidate)
    }

    /// Candidates proposed after the initial design.
    pub fn proposals(&self) -> &[IterationRecord] {
        &self.iterations[self.n_init.min(self.iterations.len())..]
    }

    /// A copy with every timing field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.total_seconds = 0.0;
        for it in &mut out.iterations {
            it.surrogate_fit_seconds = 0.0;
            it.solve_seconds = 0.0;
            it.eval_seconds = 0.0;
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            schema_version: RECORD_SCHEMA_VERSION,
            label: self.instance_label.clone(),
            algo: self.algo.name(),
            spec: self.algo.clone(),
            seed: self.seed,
            n: self.n(),
            n_rows: self.n_rows,
            k: self.k,
            n_init: self.n_init,
            dataset_rows: self.dataset_rows,
            total_seconds: self.total_seconds,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for it in &self.iterations {
            let line = Line {
                step: it.step,
                x: it.candidate.to_sign_string(),
                y: it.cost,
                best: it.best_cost_so_far,
                t_fit: it.surrogate_fit_seconds,
                t_solve: it.solve_seconds,
                t_eval: it.eval_seconds,
            };
            out.push_str(&serde_json::to_string(&line).expect("line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header: Header = match lines.next() {
            Some(line) => serde_json::from_str(&line.map_err(|e| Error::Parse(e.to_string()))?)?,
            None => return Err(Error::Parse("empty run record".into())),
        };
        if header.schema_version != RECORD_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported run record schema {}",
                header.schema_version
            )));
        }
        let mut iterations = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)?;
            iterations.push(IterationRecord {
                step: l.step,
                candidate: SpinAssignment::parse_signs(&l.x, header.n_rows)?,
                cost: l.y,
                best_cost_so_far: l.best,
                surrogate_fit_seconds: l.t_fit,
                solve_seconds: l.t_solve,
                eval_seconds: l.t_eval,
            });
        }
        Ok(Self {
            instance_label: header.label,
            algo: header.spec,
            seed: header.seed,
            n_rows: header.n_rows,
            k: header.k,
            n_init: header.n_init,
            dataset_rows: header.dataset_rows,
            iterations,
            total_seconds: header.total_seconds,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// The orbit of `m`, every member paired with `cost`.
pub fn augment_observation(m: &SpinAssignment, cost: f64) -> Vec<(SpinAssignment, f64)> {
    symmetry_orbit(m).into_iter().map(|x| (x, cost)).collect()
}

/// Observations so far, in whichever form the surrogate consumes.
enum Observations {
    Blr(GramStats),
    Fm(Dataset),
}

impl Observations {
    fn push(&mut self, x: &SpinAssignment, y: f64) -> Result<()> {
        match self {
            Observations::Blr(stats) => stats.push(x, y),
            Observations::Fm(data) => data.push(x.clone(), y),
        }
    }
}

struct Trace {
    iterations: Vec<IterationRecord>,
    best: f64,
    rows: usize,
}

impl Trace {
    fn record(&mut self, candidate: SpinAssignment, cost: f64, t_fit: f64, t_solve: f64, t_eval: f64) {
        self.best = self.best.min(cost);
        self.iterations.push(IterationRecord {
            step: self.iterations.len() + 1,
            candidate,
            cost,
            best_cost_so_far: self.best,
            surrogate_fit_seconds: t_fit,
            solve_seconds: t_solve,
            eval_seconds: t_eval,
        });
    }
}

fn fit_surrogate(
    spec: &AlgoSpec,
    obs: &Observations,
    seed: u64,
) -> Result<QuadraticModel> {
    let h = &spec.hyper;
    match (spec.algorithm, obs) {
        (Algorithm::Vbocs, Observations::Blr(stats)) => {
            Ok(to_quadratic(&fit_blr(stats, Prior::Horseshoe, seed, h.gibbs_steps)?.draw))
        }
        (Algorithm::Nbocs, Observations::Blr(stats)) => Ok(to_quadratic(
            &fit_blr(stats, Prior::Normal { sigma2: h.sigma2 }, seed, 1)?.draw,
        )),
        (Algorithm::Gbocs, Observations::Blr(stats)) => Ok(to_quadratic(
            &fit_blr(stats, Prior::NormalGamma { beta: h.beta }, seed, 1)?.draw,
        )),
        (Algorithm::Fmqa, Observations::Fm(data)) => Ok(to_quadratic(&fit_fm_with(data, &h.fm, seed)?)),
        _ => unreachable!("observation store matches the algorithm"),
    }
}

/// Runs one optimization on `instance`; deterministic in `seed` apart from
/// the timing fields.
pub fn run_bbo(instance: &Instance, spec: &AlgoSpec, seed: u64) -> Result<RunRecord> {
    let n = instance.spin_len();
    let rows = instance.n_rows();
    let n_init = spec.n_init_for(n);
    let n_iter = spec.n_iter_for(n);
    if spec.algorithm == Algorithm::Rs {
        let mut record = random_search(instance, n_init + n_iter, seed)?;
        record.algo = spec.clone();
        record.n_init = n_init;
        return Ok(record);
    }
    if n_init == 0 {
        return Err(Error::InvalidArgument("n_init must be >= 1 for surrogate methods".into()));
    }
    let started = Instant::now();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluator = CostEvaluator::new(instance);
    let mut obs = match spec.algorithm {
        Algorithm::Fmqa => Observations::Fm(Dataset::new(n)),
        _ => Observations::Blr(GramStats::new(n)),
    };
    let mut trace = Trace {
        iterations: Vec::with_capacity(n_init + n_iter),
        best: f64::INFINITY,
        rows: 0,
    };
    let augment_init = spec.augment && spec.augment_scope != AugmentScope::Iterations;
    let augment_iter = spec.augment && spec.augment_scope != AugmentScope::Initial;

    let add = |obs: &mut Observations, trace: &mut Trace, x: &SpinAssignment, y: f64, orbit: bool| {
        if orbit {
            for (member, cost) in augment_observation(x, y) {
                obs.push(&member, cost)?;
                trace.rows += 1;
            }
        } else {
            obs.push(x, y)?;
            trace.rows += 1;
        }
        Ok::<_, Error>(())
    };

    for _ in 0..n_init {
        let x = SpinAssignment::random(n, rows, &mut master);
        let t = Instant::now();
        let y = evaluator.cost(&x);
        let t_eval = t.elapsed().as_secs_f64();
        add(&mut obs, &mut trace, &x, y, augment_init)?;
        trace.record(x, y, 0.0, 0.0, t_eval);
    }

    for it in 0..n_iter {
        let step = n_init + it + 1;
        let fit_seed: u64 = master.random();
        let solve_seed: u64 = master.random();

        let t = Instant::now();
        let model = fit_surrogate(spec, &obs, fit_seed).map_err(|e| Error::FitFailed {
            step,
            source: Box::new(e),
        })?;
        let t_fit = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let problem = IsingProblem::from_quadratic(&model);
        let solver = spec.solver.clone().with_seed(solve_seed);
        let (x, _) = solve(&problem, &solver)?;
        let x = x.reshaped(rows)?;
        let t_solve = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let y = evaluator.cost(&x);
        let t_eval = t.elapsed().as_secs_f64();

        add(&mut obs, &mut trace, &x, y, augment_iter)?;
        trace.record(x, y, t_fit, t_solve, t_eval);
    }

    Ok(RunRecord {
        instance_label: instance.label.clone(),
        algo: spec.clone(),
        seed,
        n_rows: rows,
        k: instance.k(),
        n_init,
        dataset_rows: trace.rows,
        iterations: trace.iterations,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// `n_total` independent uniform assignments.
pub fn random_search(instance: &Instance, n_total: usize, seed: u64) -> Result<RunRecord> {
    if n_total == 0 {
        return Err(Error::InvalidArgument("n_total must be >= 1".into()));
    }
    let started = Instant::now();
    let n = instance.spin_len();
    let rows = instance.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluator = CostEvaluator::new(instance);
    let mut trace = Trace {
        iterations: Vec::with_capacity(n_total),
        best: f64::INFINITY,
        rows: 0,
    };
    for _ in 0..n_total {
        let x = SpinAssignment::random(n, rows, &mut rng);
        let t = Instant::now();
        let y = evaluator.cost(&x);
        let t_eval = t.elapsed().as_secs_f64();
        trace.record(x, y, 0.0, 0.0, t_eval);
    }
    Ok(RunRecord {
        instance_label: instance.label.clone(),
        algo: AlgoSpec::new(Algorithm::Rs),
        seed,
        n_rows: rows,
        k: instance.k(),
        n_init: n_total,
        dataset_rows: 0,
        iterations: trace.iterations,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{black_box_cost, gen_random_instance};

    fn quick(algorithm: Algorithm) -> AlgoSpec {
        let mut spec = AlgoSpec::new(algorithm).with_iters(6);
        spec.solver.sweeps = 50;
        spec.solver.restarts = 2;
        spec.hyper.gibbs_steps = 5;
        spec.hyper.fm.epochs = 5;
        spec
    }

    #[test]
    fn names_round_trip() {
        for name in ["rs", "vbocs", "nbocs", "gbocs", "fmqa08", "fmqa12", "nbocs-aug", "fmqa08-aug"] {
            assert_eq!(name.parse::<AlgoSpec>().unwrap().name(), name);
        }
        assert!("bocs".parse::<AlgoSpec>().is_err());
        assert!("fmqa".parse::<AlgoSpec>().is_err());
    }

    #[test]
    fn budget_and_monotone_trace() {
        let inst = gen_random_instance(3, 5, 2, 1, None).unwrap();
        for algo in [Algorithm::Rs, Algorithm::Vbocs, Algorithm::Nbocs, Algorithm::Gbocs, Algorithm::Fmqa] {
            let rec = run_bbo(&inst, &quick(algo), 4).unwrap();
            assert_eq!(rec.evaluations(), 6 + 6);
            assert!(rec.best_trace().windows(2).all(|w| w[1] <= w[0]));
            for it in &rec.iterations {
                assert_eq!(it.cost, black_box_cost(&inst, &it.candidate).unwrap());
            }
            if algo != Algorithm::Rs {
                assert_eq!(rec.dataset_rows, 12);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let inst = gen_random_instance(3, 5, 2, 2, None).unwrap();
        for algo in [Algorithm::Vbocs, Algorithm::Nbocs, Algorithm::Fmqa] {
            let a = run_bbo(&inst, &quick(algo), 9).unwrap().without_timings();
            let b = run_bbo(&inst, &quick(algo), 9).unwrap().without_timings();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn augmentation_grows_rows_not_evaluations() {
        let inst = gen_random_instance(4, 6, 2, 3, None).unwrap();
        let spec = quick(Algorithm::Nbocs).with_augment(true);
        let rec = run_bbo(&inst, &spec, 1).unwrap();
        assert_eq!(rec.evaluations(), 8 + 6);
        // orbit sizes are at most 8 at K = 2
        assert!(rec.dataset_rows > rec.evaluations() && rec.dataset_rows <= 8 * rec.evaluations());
        let mut init_only = spec.clone();
        init_only.augment_scope = AugmentScope::Initial;
        let rec2 = run_bbo(&inst, &init_only, 1).unwrap();
        assert!(rec2.dataset_rows < rec.dataset_rows);
    }

    #[test]
    fn augment_observation_sizes() {
        let m = SpinAssignment::parse_signs("+++++-+-+", 3).unwrap();
        assert_eq!(augment_observation(&m, 1.5).len(), 48);
        let one = SpinAssignment::parse_signs("+-+", 3).unwrap();
        let orbit = augment_observation(&one, 2.0);
        assert_eq!(orbit.len(), 2);
        assert!(orbit.iter().all(|(_, c)| *c == 2.0));
    }

    #[test]
    fn jsonl_round_trip() {
        let inst = gen_random_instance(3, 4, 2, 5, None).unwrap();
        let rec = run_bbo(&inst, &quick(Algorithm::Gbocs), 3).unwrap();
        let text = rec.to_jsonl();
        assert_eq!(text.lines().count(), 1 + rec.evaluations());
        let line: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for key in ["step", "x", "y", "best", "t_fit", "t_solve", "t_eval"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
        assert_eq!(RunRecord::from_jsonl(&text).unwrap(), rec);
    }

    #[test]
    fn random_search_small_space() {
        let inst = gen_random_instance(3, 5, 2, 7, None).unwrap();
        let rec = random_search(&inst, 50, 0).unwrap();
        assert_eq!(rec.evaluations(), 50);
        assert!(random_search(&inst, 0, 0).is_err());
    }
}
