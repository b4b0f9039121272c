//! Exhaustive ground truth for small instances.
//!
//! Every one of the `2^(N·K)` assignments is evaluated. The work is split
//! into prefix ranges (fixed high bits) that run in parallel; inside a range
//! the low bits follow Gray-code order. Results are merged so the output does
//! not depend on how the space was split.
//!
//! Enumeration screens with `‖W‖² − Σ_b u_bᵀ (W Wᵀ) u_b` over an orthonormal
//! basis `u_b` of the columns of `M`, which costs `O(N²K)` per state instead
//! of `O(NKD)`. The states near the optimum (and the runner-up) are then
//! re-scored with the explicit-residual evaluator, so reported costs carry
//! no cancellation error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{costs_tie, CostEvaluator, Instance, SpinAssignment};
use crate::engine::RunRecord;
use crate::error::{Error, Result};

/// Largest `N·K` accepted for enumeration.
pub const ENUMERATION_LIMIT: usize = 26;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_COUNT_TOLERANCE: f64 = 1e-6;
pub const ORACLE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub instance_label: String,
    pub k: usize,
    pub best_cost: f64,
    /// Sorted; every member ties with `best_cost`.
    pub minimizers: Vec<SpinAssignment>,
    /// Smallest cost that does not tie with `best_cost`; `None` when every
    /// assignment ties.
    pub second_best_cost: Option<f64>,
    pub states_enumerated: u64,
    pub elapsed_seconds: f64,
    pub tie_tolerance: f64,
    pub w_frobenius: f64,
}

/// Slack added to the tie tolerance while screening, covering the rounding
/// of the Gram form (relative to `‖W‖²`).
const SCREEN_SLACK: f64 = 1e-10;

/// Screening cost `‖W‖² − ‖P_M W‖²` via the Gram matrix `G = W Wᵀ`.
struct GramCost {
    rows: usize,
    k: usize,
    gram: Vec<f64>,
    w2: f64,
    basis: Vec<f64>,
    gu: Vec<f64>,
}

impl GramCost {
    fn new(instance: &Instance) -> Self {
        let w = instance.w();
        let rows = w.rows();
        let mut gram = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in i..rows {
                let v: f64 = w.row(i).iter().zip(w.row(j)).map(|(a, b)| a * b).sum();
                gram[i * rows + j] = v;
                gram[j * rows + i] = v;
            }
        }
        Self {
            rows,
            k: instance.k(),
            gram,
            w2: w.frobenius_norm_sq(),
            basis: Vec::with_capacity(rows * instance.k()),
            gu: vec![0.0; rows],
        }
    }

    fn cost_of(&mut self, spins: &[i8]) -> f64 {
        let n = self.rows;
        self.basis.clear();
        let mut captured = 0.0;
        for c in 0..self.k {
            let start = self.basis.len();
            self.basis.extend(spins[c * n..(c + 1) * n].iter().map(|&s| f64::from(s)));
            // two passes of modified Gram-Schmidt against the accepted basis
            for _ in 0..2 {
                for b in (0..start).step_by(n) {
                    let (prev, cur) = self.basis.split_at_mut(start);
                    let u = &prev[b..b + n];
                    let dot: f64 = u.iter().zip(cur.iter()).map(|(a, v)| a * v).sum();
                    cur.iter_mut().zip(u).for_each(|(v, a)| *v -= dot * a);
                }
            }
            let cur = &mut self.basis[start..];
            let norm = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
            // ±1 columns: a dependent column leaves only rounding behind
            if norm <= 1e-6 {
                self.basis.truncate(start);
                continue;
            }
            cur.iter_mut().for_each(|v| *v /= norm);
            for i in 0..n {
                self.gu[i] = self.gram[i * n..(i + 1) * n].iter().zip(cur.iter()).map(|(g, u)| g * u).sum();
            }
            captured += cur.iter().zip(&self.gu).map(|(u, g)| u * g).sum::<f64>();
        }
        (self.w2 - captured).max(0.0)
    }
}

/// Running summary of one enumerated range.
#[derive(Clone, Debug)]
struct Partial {
    best: f64,
    /// States that tie with `best` so far, with their costs.
    near: Vec<(f64, u64)>,
    second: (f64, u64),
    count: u64,
}

impl Partial {
    fn empty() -> Self {
        Self {
            best: f64::INFINITY,
            near: Vec::new(),
            second: (f64::INFINITY, 0),
            count: 0,
        }
    }

    fn offer(&mut self, cost: f64, code: u64, tol: f64, w2: f64) {
        self.count += 1;
        if cost < self.best || costs_tie(cost, self.best, tol, w2) {
            self.near.push((cost, code));
            if cost < self.best {
                self.best = cost;
                self.prune(tol, w2);
            }
        } else if cost < self.second.0 {
            self.second = (cost, code);
        }
    }

    /// Drops entries that no longer tie with `best`, feeding `second`.
    fn prune(&mut self, tol: f64, w2: f64) {
        let best = self.best;
        let mut second = self.second;
        self.near.retain(|&(c, code)| {
            let keep = costs_tie(c, best, tol, w2);
            if !keep && c < second.0 {
                second = (c, code);
            }
            keep
        });
        self.second = second;
    }

    fn merge(mut self, other: Partial, tol: f64, w2: f64) -> Partial {
        self.best = self.best.min(other.best);
        if other.second.0 < self.second.0 {
            self.second = other.second;
        }
        self.near.extend(other.near);
        self.count += other.count;
        self.prune(tol, w2);
        self
    }
}

fn code_to_spins(code: u64, n: usize, rows: usize) -> SpinAssignment {
    SpinAssignment::from_bits(code, n, rows).expect("code fits the spin length")
}

/// Enumerates every assignment of `instance` and groups the optimum.
pub fn brute_force(instance: &Instance, tie_tolerance: f64) -> Result<OracleResult> {
    let n = instance.spin_len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    if !(tie_tolerance >= 0.0 && tie_tolerance.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad tie tolerance {tie_tolerance}")));
    }
    let started = Instant::now();
    let rows = instance.n_rows();
    let w2 = instance.w().frobenius_norm_sq();
    let prefix_bits = n.min(8);
    let screen_tol = tie_tolerance + SCREEN_SLACK;
    let low_bits = n - prefix_bits;

    let merged = (0u64..(1 << prefix_bits))
        .into_par_iter()
        .map(|prefix| {
            let mut eval = GramCost::new(instance);
            let mut part = Partial::empty();
            let mut spins: Vec<i8> = (0..n)
                .map(|i| {
                    if i >= low_bits && (prefix >> (i - low_bits)) & 1 == 1 {
                        1
                    } else {
                        -1
                    }
                })
                .collect();
            let mut code = prefix << low_bits;
            part.offer(eval.cost_of(&spins), code, screen_tol, w2);
            for step in 1u64..(1 << low_bits) {
                let i = step.trailing_zeros() as usize;
                code ^= 1 << i;
                spins[i] = -spins[i];
                part.offer(eval.cost_of(&spins), code, screen_tol, w2);
            }
            part
        })
        .reduce(Partial::empty, |a, b| a.merge(b, screen_tol, w2));

    // exact re-scoring of the screened survivors and the runner-up
    let mut exact = CostEvaluator::new(instance);
    let mut rescored = Partial::empty();
    let mut candidates: Vec<u64> = merged.near.iter().map(|&(_, c)| c).collect();
    if merged.second.0.is_finite() {
        candidates.push(merged.second.1);
    }
    candidates.sort_unstable();
    for code in candidates {
        let spins = code_to_spins(code, n, rows);
        rescored.offer(exact.cost(&spins), code, tie_tolerance, w2);
    }
    let mut minimizers: Vec<SpinAssignment> =
        rescored.near.iter().map(|&(_, c)| code_to_spins(c, n, rows)).collect();
    minimizers.sort();
    let second = rescored.second.0;
    Ok(OracleResult {
        instance_label: instance.label.clone(),
        k: instance.k(),
        best_cost: rescored.best,
        minimizers,
        second_best_cost: second.is_finite().then_some(second),
        states_enumerated: merged.count,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        tie_tolerance,
        w_frobenius: w2.sqrt(),
    })
}

/// Number of runs whose final best cost ties with the oracle optimum.
pub fn count_exact(records: &[RunRecord], oracle: &OracleResult, tolerance: f64) -> Result<usize> {
    if let Some(r) = records.iter().find(|r| r.instance_label != oracle.instance_label) {
        return Err(Error::InvalidArgument(format!(
            "record for '{}' counted against oracle for '{}'",
            r.instance_label, oracle.instance_label
        )));
    }
    Ok(records.iter().filter(|r| oracle.is_exact(r.final_best(), tolerance)).count())
}

impl OracleResult {
    /// Whether `cost` reaches the optimum within `tolerance` (relative, with
    /// the usual absolute floor).
    pub fn is_exact(&self, cost: f64, tolerance: f64) -> bool {
        costs_tie(cost, self.best_cost, tolerance, self.w_frobenius * self.w_frobenius)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&OracleFile::from(self)).expect("oracle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: OracleFile = serde_json::from_str(text)?;
        if f.schema_version != ORACLE_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported oracle schema {}", f.schema_version)));
        }
        let minimizers = f
            .minimizers
            .iter()
            .map(|s| SpinAssignment::parse_signs(s, f.n_rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            instance_label: f.label,
            k: f.k,
            best_cost: f.best_cost,
            minimizers,
            second_best_cost: f.second_best_cost,
            states_enumerated: f.states_enumerated,
            elapsed_seconds: f.elapsed_seconds,
            tie_tolerance: f.tie_tolerance,
            w_frobenius: f.w_frobenius,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    schema_version: u32,
    label: String,
    n_rows: usize,
    k: usize,
    best_cost: f64,
    second_best_cost: Option<f64>,
    minimizers: Vec<String>,
    states_enumerated: u64,
    elapsed_seconds: f64,
    tie_tolerance: f64,
    w_frobenius: f64,
}

impl From<&OracleResult> for OracleFile {
    fn from(r: &OracleResult) -> Self {
        Self {
            schema_version: ORACLE_SCHEMA_VERSION,
            label: r.instance_label.clone(),
            n_rows: r.minimizers.first().map_or(0, SpinAssignment::rows),
            k: r.k,
            best_cost: r.best_cost,
            second_best_cost: r.second_best_cost,
            minimizers: r.minimizers.iter().map(SpinAssignment::to_sign_string).collect(),
            states_enumerated: r.states_enumerated,
            elapsed_seconds: r.elapsed_seconds,
            tie_tolerance: r.tie_tolerance,
            w_frobenius: r.w_frobenius,
        }
    }
}

/// Cache file for an instance: `<dir>/<label>-k<K>.oracle.json`, with any
/// character outside `[A-Za-z0-9._-]` in the label replaced by `_`.
pub fn cache_path(dir: impl AsRef<Path>, instance: &Instance) -> PathBuf {
    let safe = crate::bench::safe_name(&instance.label);
    dir.as_ref().join(format!("{safe}-k{}.oracle.json", instance.k()))
}

/// Reads the cached result for `instance` if present and consistent,
/// otherwise enumerates and writes the cache.
pub fn brute_force_cached(instance: &Instance, tie_tolerance: f64, dir: impl AsRef<Path>) -> Result<OracleResult> {
    let path = cache_path(&dir, instance);
    if path.exists() {
        match OracleResult::load(&path) {
            Ok(r) if r.k == instance.k()
                && r.tie_tolerance == tie_tolerance
                && r.w_frobenius == instance.w_norm()
                && r.minimizers.first().is_none_or(|m| m.rows() == instance.n_rows()) =>
            {
                log::info!("oracle cache hit: {}", path.display());
                return Ok(r);
            }
            Ok(_) => log::warn!("oracle cache {} does not match the instance; recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable oracle cache {}: {e}", path.display()),
        }
    }
    let result = brute_force(instance, tie_tolerance)?;
    std::fs::create_dir_all(dir.as_ref()).map_err(|e| Error::io(dir.as_ref(), e))?;
    result.save(&path)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{black_box_cost, canonical_form, gen_random_instance, symmetry_orbit};
    use crate::linalg::RealMatrix;

    #[test]
    fn all_ones_rank_one() {
        let w = RealMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let inst = Instance::new("ones", w, 1).unwrap();
        let r = brute_force(&inst, DEFAULT_TIE_TOLERANCE).unwrap();
        assert!(r.best_cost.abs() < 1e-24);
        let signs: Vec<String> = r.minimizers.iter().map(|m| m.to_sign_string()).collect();
        assert_eq!(signs, vec!["--", "++"]);
        assert_eq!(r.states_enumerated, 4);
    }

    #[test]
    fn generic_k3_has_48_minimizers() {
        let inst = gen_random_instance(6, 20, 3, 0, None).unwrap();
        let r = brute_force(&inst, DEFAULT_TIE_TOLERANCE).unwrap();
        assert_eq!(r.minimizers.len(), 48);
        let orbit = symmetry_orbit(&r.minimizers[0]);
        assert_eq!(orbit, r.minimizers);
        assert!(r.second_best_cost.unwrap() > r.best_cost);
    }

    #[test]
    fn matches_naive_scan_and_orbit_classes() {
        let inst = gen_random_instance(3, 5, 2, 4, None).unwrap();
        let r = brute_force(&inst, DEFAULT_TIE_TOLERANCE).unwrap();
        let costs: Vec<f64> = (0..64u64)
            .map(|b| black_box_cost(&inst, &SpinAssignment::from_bits(b, 6, 3).unwrap()).unwrap())
            .collect();
        let naive = costs.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_cost, naive);
        let mut classes: Vec<SpinAssignment> = r.minimizers.iter().map(canonical_form).collect();
        classes.dedup();
        let orbit_total: usize = classes.iter().map(|c| symmetry_orbit(c).len()).sum();
        assert_eq!(orbit_total, r.minimizers.len());
        // nothing strictly between the tie band and the second best
        let second = r.second_best_cost.unwrap();
        let w2 = inst.w().frobenius_norm_sq();
        for &c in &costs {
            assert!(costs_tie(c, r.best_cost, 1e-9, w2) || c >= second - 1e-12 * w2);
        }
    }

    #[test]
    fn json_and_cache_round_trip() {
        let inst = gen_random_instance(3, 4, 2, 1, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = brute_force_cached(&inst, DEFAULT_TIE_TOLERANCE, dir.path()).unwrap();
        assert!(cache_path(dir.path(), &inst).exists());
        let second = brute_force_cached(&inst, DEFAULT_TIE_TOLERANCE, dir.path()).unwrap();
        assert_eq!(first, second);
        assert_eq!(OracleResult::from_json(&first.to_json()).unwrap(), first);
    }

    #[test]
    fn rejects_large_instances() {
        let inst = gen_random_instance(9, 4, 3, 0, None).unwrap();
        assert!(matches!(brute_force(&inst, 1e-9), Err(Error::TooLarge { .. })));
    }
}
