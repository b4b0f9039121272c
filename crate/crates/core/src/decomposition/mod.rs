//! The integer-decomposition problem `W ≈ M C` with `M ∈ {-1,+1}^{N×K}`.
//!
//! Eliminating `C` by least squares turns the mixed problem into a
//! pseudo-Boolean cost over the `n = N·K` spins of `M`; that cost is the
//! black box every optimizer in this crate works against.

mod generate;
mod spin;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};

pub use generate::{gen_random_instance, shrink_svd};
pub use spin::{canonical_form, symmetry_orbit, SpinAssignment};

pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

/// Absolute floor for cost comparisons, relative to `‖W‖²`. Costs are
/// computed to roughly machine precision of `‖W‖²`, so differences below
/// this are rounding.
const COST_ABS_FLOOR: f64 = 1e-12;

/// A target matrix `W` (`N x D`) and decomposition rank `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub label: String,
    w: RealMatrix,
    k: usize,
}

impl Instance {
    pub fn new(label: impl Into<String>, w: RealMatrix, k: usize) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 {
            return Err(Error::InvalidInstance("empty target matrix".into()));
        }
        if k == 0 || k > w.rows() {
            return Err(Error::InvalidInstance(format!(
                "rank K = {k} must satisfy 1 <= K <= N = {}",
                w.rows()
            )));
        }
        Ok(Self {
            label: label.into(),
            w,
            k,
        })
    }

    pub fn w(&self) -> &RealMatrix {
        &self.w
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `N`
    pub fn n_rows(&self) -> usize {
        self.w.rows()
    }

    /// `D`
    pub fn n_cols(&self) -> usize {
        self.w.cols()
    }

    /// Spin-vector length `n = N·K`.
    pub fn spin_len(&self) -> usize {
        self.w.rows() * self.k
    }

    pub fn w_norm(&self) -> f64 {
        self.w.frobenius_norm()
    }

    pub fn check_spins(&self, m: &SpinAssignment) -> Result<()> {
        if m.len() != self.spin_len() || m.rows() != self.n_rows() {
            return Err(Error::Shape(format!(
                "spin assignment is {}x{}, instance expects {}x{}",
                m.rows(),
                m.cols(),
                self.n_rows(),
                self.k
            )));
        }
        Ok(())
    }

    pub fn spins_from_signs(&self, s: &str) -> Result<SpinAssignment> {
        let m = SpinAssignment::parse_signs(s, self.n_rows())?;
        self.check_spins(&m)?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            schema_version: INSTANCE_SCHEMA_VERSION,
            label: self.label.clone(),
            n: self.n_rows(),
            d: self.n_cols(),
            k: self.k,
            w: self.w.to_rows(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        if file.w.len() != file.n || file.w.iter().any(|r| r.len() != file.d) {
            return Err(Error::InvalidInstance(format!(
                "declared {}x{} but matrix does not match",
                file.n, file.d
            )));
        }
        let w = RealMatrix::from_rows(&file.w)?;
        Self::new(file.label, w, file.k)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default = "default_schema")]
    schema_version: u32,
    label: String,
    n: usize,
    d: usize,
    k: usize,
    w: Vec<Vec<f64>>,
}

fn default_schema() -> u32 {
    INSTANCE_SCHEMA_VERSION
}

/// `M`, the fitted `C`, and the squared residual they leave.
#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub m: SpinAssignment,
    pub c: RealMatrix,
    /// `‖W − MC‖_F²`
    pub cost: f64,
    /// `‖W − MC‖_F / ‖W‖_F`
    pub relative_residual: f64,
}

impl DecompositionResult {
    fn from_parts(instance: &Instance, m: SpinAssignment, c: RealMatrix) -> Result<Self> {
        let resid = instance.w.sub(&m.to_matrix().matmul(&c)?)?;
        let cost = resid.frobenius_norm_sq();
        let norm = instance.w_norm();
        let relative_residual = if norm > 0.0 { cost.sqrt() / norm } else { 0.0 };
        Ok(Self {
            m,
            c,
            cost,
            relative_residual,
        })
    }
}

/// Fits `C` for a given `M` by minimum-norm least squares.
pub fn decompose_with(instance: &Instance, m: &SpinAssignment) -> Result<DecompositionResult> {
    instance.check_spins(m)?;
    let ls = linalg::min_norm_least_squares(&m.to_matrix(), &instance.w)?;
    DecompositionResult::from_parts(instance, m.clone(), ls.c)
}

/// Evaluates `‖W − M M⁺ W‖_F²` with reusable buffers.
///
/// The residual is formed explicitly against an orthonormal basis of the
/// column space of `M` (from a Jacobi orthogonalization of its columns), so
/// exact fits evaluate to rounding-level zeros rather than the cancellation
/// error of `‖W‖² − ‖PW‖²`. Rank-deficient `M` is handled with the same
/// singular value cutoff as [`linalg::min_norm_least_squares`].
pub struct CostEvaluator<'a> {
    w: &'a RealMatrix,
    rows: usize,
    k: usize,
    cols: Vec<Vec<f64>>,
    basis: Vec<usize>,
    proj: Vec<f64>,
    resid_row: Vec<f64>,
}

impl<'a> CostEvaluator<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let rows = instance.n_rows();
        let k = instance.k();
        Self {
            w: &instance.w,
            rows,
            k,
            cols: vec![vec![0.0; rows]; k],
            basis: Vec::with_capacity(k),
            proj: vec![0.0; k * instance.n_cols()],
            resid_row: vec![0.0; instance.n_cols()],
        }
    }

    /// Cost of the assignment given as raw `±1` values (column-major).
    pub fn cost_of(&mut self, spins: &[i8]) -> f64 {
        debug_assert_eq!(spins.len(), self.rows * self.k);
        let (n, k) = (self.rows, self.k);
        for (c, col) in self.cols.iter_mut().enumerate() {
            for (dst, &s) in col.iter_mut().zip(&spins[c * n..(c + 1) * n]) {
                *dst = f64::from(s);
            }
        }
        orthogonalize(&mut self.cols);
        let norms: Vec<f64> = self
            .cols
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let s_max = norms.iter().copied().fold(0.0, f64::max);
        let thresh = (n.max(k) as f64) * f64::EPSILON * s_max;
        self.basis.clear();
        for (c, &s) in norms.iter().enumerate() {
            if s > thresh {
                self.cols[c].iter_mut().for_each(|v| *v /= s);
                self.basis.push(c);
            }
        }

        let d = self.w.cols();
        // proj[b] = u_bᵀ W
        self.proj.iter_mut().for_each(|p| *p = 0.0);
        for i in 0..n {
            let wrow = self.w.row(i);
            for (slot, &b) in self.basis.iter().enumerate() {
                let u = self.cols[b][i];
                let prow = &mut self.proj[slot * d..(slot + 1) * d];
                for (p, &wv) in prow.iter_mut().zip(wrow) {
                    *p += u * wv;
                }
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            self.resid_row.copy_from_slice(self.w.row(i));
            for (slot, &b) in self.basis.iter().enumerate() {
                let u = self.cols[b][i];
                let prow = &self.proj[slot * d..(slot + 1) * d];
                for (r, &p) in self.resid_row.iter_mut().zip(prow) {
                    *r -= u * p;
                }
            }
            total += self.resid_row.iter().map(|r| r * r).sum::<f64>();
        }
        total
    }

    pub fn cost(&mut self, m: &SpinAssignment) -> f64 {
        self.cost_of(m.values())
    }
}

/// One-sided Jacobi rotations until the columns are mutually orthogonal.
fn orthogonalize(cols: &mut [Vec<f64>]) {
    let k = cols.len();
    let tol = f64::EPSILON * (cols.first().map_or(1, Vec::len) as f64);
    for _ in 0..linalg::SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let (lo, hi) = cols.split_at_mut(q);
                let (cp, cq) = (&mut lo[p], &mut hi[0]);
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for (x, y) in cp.iter().zip(cq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            return;
        }
    }
}

/// `‖W − MC‖_F²` with `C` eliminated by minimum-norm least squares.
///
/// Total over all assignments: rank-deficient `M` falls back to the
/// pseudoinverse, which never beats its best full-rank column subset.
pub fn black_box_cost(instance: &Instance, m: &SpinAssignment) -> Result<f64> {
    instance.check_spins(m)?;
    Ok(CostEvaluator::new(instance).cost(m))
}

/// Whether two costs are equal up to a relative tolerance, with an
/// absolute floor scaled by `‖W‖²`.
pub fn costs_tie(a: f64, b: f64, rel_tol: f64, w_norm_sq: f64) -> bool {
    let diff = (a - b).abs();
    diff <= rel_tol * a.abs().max(b.abs()) || diff <= COST_ABS_FLOOR * w_norm_sq
}

/// `(‖f(M)‖ − ‖f(M*)‖) / ‖W‖` from raw squared costs.
pub fn residual_from_costs(cost: f64, exact_cost: f64, w_norm: f64) -> f64 {
    if w_norm == 0.0 {
        return 0.0;
    }
    ((cost.max(0.0).sqrt() - exact_cost.max(0.0).sqrt()) / w_norm).max(0.0)
}

/// Normalized gap between the cost of `m` and the brute-force optimum.
///
/// Fails when `exact_cost` is larger than the cost of `m` beyond rounding,
/// which means the supplied optimum cannot be the true minimum.
pub fn residual_error(instance: &Instance, m: &SpinAssignment, exact_cost: f64) -> Result<f64> {
    let cost = black_box_cost(instance, m)?;
    let w_norm = instance.w_norm();
    if costs_tie(cost, exact_cost, 1e-9, w_norm * w_norm) {
        return Ok(0.0);
    }
    if exact_cost > cost {
        return Err(Error::InconsistentOracle(format!(
            "exact cost {exact_cost} exceeds cost {cost} of the given assignment"
        )));
    }
    Ok(residual_from_costs(cost, exact_cost, w_norm))
}

/// Sequential rank-one greedy baseline.
///
/// Builds `m_i, c_i` for `i = 1..K` on the running residual `R`. Each
/// rank-one fit starts from `c` = top right singular vector of `R` and
/// alternates `m ← sign(R c)` (with `sign(0) = +1`), `c ← Rᵀ m / N` until `m`
/// stops changing or `max_alternations` is reached.
pub fn greedy_decompose(instance: &Instance, max_alternations: usize) -> Result<DecompositionResult> {
    if max_alternations == 0 {
        return Err(Error::InvalidArgument("max_alternations must be >= 1".into()));
    }
    let (n, d, k) = (instance.n_rows(), instance.n_cols(), instance.k());
    let mut resid = instance.w.clone();
    let mut spins = Vec::with_capacity(n * k);
    let mut c_rows = Vec::with_capacity(k * d);

    for _ in 0..k {
        let dec = linalg::svd(&resid)?;
        let mut c = dec.v.column(0);
        let mut m: Vec<i8> = vec![0; n];
        for _ in 0..max_alternations {
            let next: Vec<i8> = (0..n)
                .map(|i| {
                    let s: f64 = resid.row(i).iter().zip(&c).map(|(r, cv)| r * cv).sum();
                    if s >= 0.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect();
            let unchanged = next == m;
            m = next;
            c = (0..d)
                .map(|j| (0..n).map(|i| resid.get(i, j) * f64::from(m[i])).sum::<f64>() / n as f64)
                .collect();
            if unchanged {
                break;
            }
        }
        for i in 0..n {
            let mi = f64::from(m[i]);
            for j in 0..d {
                let v = resid.get(i, j) - mi * c[j];
                resid.set(i, j, v);
            }
        }
        spins.extend_from_slice(&m);
        c_rows.extend_from_slice(&c);
    }
    let m = SpinAssignment::new(spins, n)?;
    let c = RealMatrix::new(k, d, c_rows)?;
    DecompositionResult::from_parts(instance, m, c)
}
