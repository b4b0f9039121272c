//! Minimizers for `offset + Σ hᵢxᵢ + Σ_{i<j} Jᵢⱼxᵢxⱼ` over spins.
//!
//! Simulated annealing (SA) follows a geometric inverse-temperature schedule
//! derived from the problem's effective fields, simulated quenching (SQ)
//! runs Metropolis at one fixed temperature, and the exact solver walks all
//! `2ⁿ` states in Gray-code order. Stochastic solvers restart from fresh
//! random states, restart `r` seeded with `seed + r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::SpinAssignment;
use crate::error::{Error, Result};
use crate::surrogate::QuadraticModel;

/// Largest `n` accepted by the exhaustive solver.
pub const EXACT_LIMIT: usize = 25;
pub const HOT_FIELD_FACTOR: f64 = 2.9;
pub const COLD_FIELD_FACTOR: f64 = 0.4;

/// Same layout as [`QuadraticModel`]: `j` is a row-major `n x n` matrix
/// that is zero on and below the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingProblem {
    pub n: usize,
    pub h: Vec<f64>,
    pub j: Vec<f64>,
    pub offset: f64,
}

impl IsingProblem {
    pub fn new(h: Vec<f64>, j: Vec<f64>, offset: f64) -> Result<Self> {
        let n = h.len();
        if j.len() != n * n {
            return Err(Error::Shape(format!("couplings have {} entries, expected {}", j.len(), n * n)));
        }
        for r in 0..n {
            for c in 0..=r {
                if j[r * n + c] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "coupling ({r}, {c}) is not strictly upper triangular"
                    )));
                }
            }
        }
        if !offset.is_finite() || h.iter().chain(&j).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("problem coefficients must be finite".into()));
        }
        Ok(Self { n, h, j, offset })
    }

    pub fn from_quadratic(model: &QuadraticModel) -> Self {
        Self {
            n: model.n,
            h: model.linear.clone(),
            j: model.pairwise.clone(),
            offset: model.offset,
        }
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.j[i * self.n + j]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            h: self.h.iter().map(|v| v * s).collect(),
            j: self.j.iter().map(|v| v * s).collect(),
            offset: self.offset * s,
        }
    }

    /// Per-spin `|hᵢ| + Σⱼ |Jᵢⱼ|` over both triangles.
    pub fn effective_fields(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let couplings: f64 = (0..n)
                    .filter(|&k| k != i)
                    .map(|k| self.coupling(i.min(k), i.max(k)).abs())
                    .sum();
                self.h[i].abs() + couplings
            })
            .collect()
    }

    /// Full symmetric coupling matrix, used for local fields.
    fn symmetric_couplings(&self) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for k in (i + 1)..n {
                let v = self.coupling(i, k);
                s[i * n + k] = v;
                s[k * n + i] = v;
            }
        }
        s
    }
}

pub fn energy(problem: &IsingProblem, x: &SpinAssignment) -> f64 {
    assert_eq!(x.len(), problem.n, "spin length does not match problem");
    energy_of(problem, x.values())
}

fn energy_of(problem: &IsingProblem, x: &[i8]) -> f64 {
    let n = problem.n;
    let mut e = problem.offset;
    for i in 0..n {
        let xi = f64::from(x[i]);
        let row = &problem.j[i * n..(i + 1) * n];
        let inner: f64 = ((i + 1)..n).map(|k| row[k] * f64::from(x[k])).sum();
        e += xi * (problem.h[i] + inner);
    }
    e
}

/// Geometric inverse-temperature ramp from `1 / (2.9 · max field)` to
/// `1 / (0.4 · min field)`.
///
/// The max field is the largest per-spin `|hᵢ| + Σ|Jᵢⱼ|`, the min field the
/// smallest nonzero one. A problem with no nonzero coefficient gets a flat
/// unit schedule; `sweeps = 1` yields the cold end only.
pub fn default_sa_schedule(problem: &IsingProblem, sweeps: usize) -> Vec<f64> {
    let fields = problem.effective_fields();
    let max_field = fields.iter().copied().fold(0.0, f64::max);
    let min_field = fields.iter().copied().filter(|&f| f > 0.0).fold(f64::INFINITY, f64::min);
    if max_field == 0.0 {
        return vec![1.0; sweeps];
    }
    let beta_hot = 1.0 / (HOT_FIELD_FACTOR * max_field);
    let beta_cold = 1.0 / (COLD_FIELD_FACTOR * min_field);
    if sweeps <= 1 {
        return vec![beta_cold; sweeps];
    }
    let ratio = (beta_cold / beta_hot).ln();
    (0..sweeps)
        .map(|s| {
            if s + 1 == sweeps {
                beta_cold
            } else {
                beta_hot * (ratio * s as f64 / (sweeps - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Sa,
    Sq,
    Exact,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Sa => "sa",
            SolverKind::Sq => "sq",
            SolverKind::Exact => "exact",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sa" => Ok(SolverKind::Sa),
            "sq" => Ok(SolverKind::Sq),
            "exact" => Ok(SolverKind::Exact),
            other => Err(Error::Parse(format!("unknown solver '{other}' (expected sa, sq or exact)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub sweeps: usize,
    pub restarts: usize,
    /// Overrides the SA default schedule (and the SQ constant temperature).
    pub beta_schedule: Option<Vec<f64>>,
    pub constant_temperature: f64,
    pub seed: u64,
    /// Visit spins in a fresh random order each sweep instead of `0..n`.
    pub random_order: bool,
}

impl SolverConfig {
    pub const DEFAULT_SWEEPS: usize = 1000;
    pub const DEFAULT_RESTARTS: usize = 10;
    pub const DEFAULT_SQ_TEMPERATURE: f64 = 0.1;

    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            sweeps: Self::DEFAULT_SWEEPS,
            restarts: Self::DEFAULT_RESTARTS,
            beta_schedule: None,
            constant_temperature: Self::DEFAULT_SQ_TEMPERATURE,
            seed: 0,
            random_order: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.sweeps == 0 {
            return Err(Error::InvalidArgument("restarts and sweeps must be >= 1".into()));
        }
        if self.kind == SolverKind::Sq
            && self.beta_schedule.is_none()
            && !(self.constant_temperature > 0.0 && self.constant_temperature.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "SQ temperature must be positive, got {}",
                self.constant_temperature
            )));
        }
        if let Some(s) = &self.beta_schedule {
            if s.is_empty() || s.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(Error::InvalidArgument(
                    "beta schedule must be non-empty, finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(SolverKind::Sa)
    }
}

/// Lowest-energy state found, with its energy.
pub fn solve(problem: &IsingProblem, config: &SolverConfig) -> Result<(SpinAssignment, f64)> {
    config.validate()?;
    if problem.n == 0 {
        return Err(Error::InvalidArgument("empty problem".into()));
    }
    let (best, _) = match config.kind {
        SolverKind::Exact => solve_exact(problem)?,
        SolverKind::Sa | SolverKind::Sq => {
            let schedule = match (&config.beta_schedule, config.kind) {
                (Some(s), _) => s.clone(),
                (None, SolverKind::Sa) => default_sa_schedule(problem, config.sweeps),
                (None, _) => vec![1.0 / config.constant_temperature; config.sweeps],
            };
            anneal(problem, &schedule, config)
        }
    };
    // report a freshly summed energy rather than the running update
    let e = energy_of(problem, &best);
    Ok((SpinAssignment::flat(best)?, e))
}

fn anneal(problem: &IsingProblem, schedule: &[f64], config: &SolverConfig) -> (Vec<i8>, f64) {
    let n = problem.n;
    let sym = problem.symmetric_couplings();
    let mut best: Option<(Vec<i8>, f64)> = None;
    let mut order: Vec<usize> = (0..n).collect();
    let mut field = vec![0.0; n];
    for r in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
        let mut x: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        for i in 0..n {
            let row = &sym[i * n..(i + 1) * n];
            field[i] = problem.h[i] + row.iter().zip(&x).map(|(c, &s)| c * f64::from(s)).sum::<f64>();
        }
        let mut e = energy_of(problem, &x);
        let mut run_best = e;
        let mut run_state = x.clone();
        for &beta in schedule {
            if config.random_order {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            }
            for &i in &order {
                let delta = -2.0 * f64::from(x[i]) * field[i];
                let accept = delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp();
                if !accept {
                    continue;
                }
                x[i] = -x[i];
                e += delta;
                let step = 2.0 * f64::from(x[i]);
                for (f, c) in field.iter_mut().zip(&sym[i * n..(i + 1) * n]) {
                    *f += step * c;
                }
                if e < run_best {
                    run_best = e;
                    run_state.copy_from_slice(&x);
                }
            }
        }
        let exact_e = energy_of(problem, &run_state);
        if best.as_ref().is_none_or(|(_, b)| exact_e < *b) {
            best = Some((run_state, exact_e));
        }
    }
    best.expect("at least one restart")
}

/// Gray-code walk over all states, starting from all `-1`.
fn solve_exact(problem: &IsingProblem) -> Result<(Vec<i8>, f64)> {
    let n = problem.n;
    if n > EXACT_LIMIT {
        return Err(Error::TooLarge { n, limit: EXACT_LIMIT });
    }
    let sym = problem.symmetric_couplings();
    let mut x = vec![-1i8; n];
    let mut field: Vec<f64> = (0..n)
        .map(|i| problem.h[i] - sym[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    let mut e = energy_of(problem, &x);
    let mut best_e = e;
    let mut best_code: u64 = 0;
    let mut code: u64 = 0;
    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        code ^= 1 << i;
        e += -2.0 * f64::from(x[i]) * field[i];
        x[i] = -x[i];
        let d = 2.0 * f64::from(x[i]);
        for (f, c) in field.iter_mut().zip(&sym[i * n..(i + 1) * n]) {
            *f += d * c;
        }
        if e < best_e {
            best_e = e;
            best_code = code;
        }
    }
    let state: Vec<i8> = (0..n).map(|i| if best_code >> i & 1 == 1 { 1 } else { -1 }).collect();
    let e = energy_of(problem, &state);
    Ok((state, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::predict;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, seed: u64) -> IsingProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let h = (0..n).map(|_| g()).collect();
        let mut j = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                j[a * n + b] = g();
            }
        }
        IsingProblem::new(h, j, 0.3).unwrap()
    }

    fn all_solvers() -> Vec<SolverConfig> {
        [SolverKind::Sa, SolverKind::Sq, SolverKind::Exact]
            .into_iter()
            .map(|k| SolverConfig {
                sweeps: 200,
                ..SolverConfig::new(k)
            })
            .collect()
    }

    #[test]
    fn energy_examples() {
        let zero = IsingProblem::new(vec![0.0; 3], vec![0.0; 9], 1.5).unwrap();
        let x = SpinAssignment::flat(vec![1, -1, 1]).unwrap();
        assert_eq!(energy(&zero, &x), 1.5);
        let down = IsingProblem::new(vec![-1.0; 4], vec![0.0; 16], 2.0).unwrap();
        assert_eq!(energy(&down, &SpinAssignment::flat(vec![1; 4]).unwrap()), 2.0 - 4.0);
    }

    #[test]
    fn energy_matches_predict() {
        let p = random_problem(9, 4);
        let q = QuadraticModel {
            n: p.n,
            offset: p.offset,
            linear: p.h.clone(),
            pairwise: p.j.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = SpinAssignment::random(9, 9, &mut rng);
            assert!((energy(&p, &x) - predict(&q, &x)).abs() < 1e-12);
        }
        assert_eq!(IsingProblem::from_quadratic(&q), p);
    }

    #[test]
    fn rejects_lower_triangle() {
        let mut j = vec![0.0; 4];
        j[2] = 1.0;
        assert!(IsingProblem::new(vec![0.0; 2], j, 0.0).is_err());
    }

    #[test]
    fn schedule_from_fields() {
        let p = IsingProblem::new(vec![1.0, 1.0], vec![0.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        let s = default_sa_schedule(&p, 50);
        assert_eq!(s.len(), 50);
        assert!((1.0 / s[0] - 5.8).abs() < 1e-12);
        assert!((1.0 / s[49] - 0.8).abs() < 1e-12);
        assert!(s.windows(2).all(|w| w[1] >= w[0]));

        let scaled = default_sa_schedule(&p.scaled(10.0), 50);
        for (a, b) in s.iter().zip(&scaled) {
            assert!((a / b - 10.0).abs() < 1e-9);
        }
        let zero = IsingProblem::new(vec![0.0; 3], vec![0.0; 9], 0.0).unwrap();
        assert_eq!(default_sa_schedule(&zero, 4), vec![1.0; 4]);
    }

    #[test]
    fn downhill_fields_reach_all_up() {
        let p = IsingProblem::new(vec![-1.0; 6], vec![0.0; 36], 0.5).unwrap();
        for cfg in all_solvers() {
            let (x, e) = solve(&p, &cfg).unwrap();
            assert_eq!(x.values(), &[1; 6]);
            assert_eq!(e, 0.5 - 6.0);
        }
    }

    #[test]
    fn ferromagnetic_chain_aligns() {
        let n = 8;
        let mut j = vec![0.0; n * n];
        for i in 0..n - 1 {
            j[i * n + i + 1] = -1.0;
        }
        let p = IsingProblem::new(vec![0.0; n], j, 0.0).unwrap();
        for cfg in all_solvers() {
            let (x, e) = solve(&p, &cfg).unwrap();
            assert!(x.values().iter().all(|&v| v == x.values()[0]), "{:?}", cfg.kind);
            assert_eq!(e, -7.0);
        }
    }

    #[test]
    fn exact_matches_naive_enumeration() {
        for seed in 0..5 {
            let p = random_problem(10, seed);
            let naive = (0..1u64 << 10)
                .map(|b| energy(&p, &SpinAssignment::from_bits(b, 10, 10).unwrap()))
                .fold(f64::INFINITY, f64::min);
            let (_, e) = solve(&p, &SolverConfig::new(SolverKind::Exact)).unwrap();
            assert!((e - naive).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let p = random_problem(12, 2);
        let cfg = SolverConfig::new(SolverKind::Sq).with_seed(3);
        assert_eq!(solve(&p, &cfg).unwrap(), solve(&p, &cfg).unwrap());
        let big = random_problem(26, 0);
        assert!(matches!(
            solve(&big, &SolverConfig::new(SolverKind::Exact)),
            Err(Error::TooLarge { .. })
        ));
        let bad = SolverConfig {
            restarts: 0,
            ..SolverConfig::default()
        };
        assert!(solve(&p, &bad).is_err());
    }

    #[test]
    fn random_order_still_finds_optimum_on_easy_problem() {
        let p = random_problem(8, 9);
        let (_, exact) = solve(&p, &SolverConfig::new(SolverKind::Exact)).unwrap();
        let cfg = SolverConfig {
            random_order: true,
            ..SolverConfig::default()
        };
        let (_, e) = solve(&p, &cfg).unwrap();
        assert!((e - exact).abs() < 1e-9);
    }
}
