//! Dense row-major real matrices and the factorizations the rest of the
//! crate builds on: one-sided Jacobi SVD, minimum-norm least squares and
//! Cholesky.
//!
//! Everything here is `f64` and allocation-light; matrices in this
//! problem are at most a few hundred entries on a side.

use std::fmt;

use thiserror::Error;

/// Sweep cap for the Jacobi SVD before reporting non-convergence.
pub const SVD_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("SVD did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
}

/// A dense real matrix stored row-major. All entries are finite.
#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix, LinalgError> {
        matmul(self, other)
    }

    pub fn sub(&self, other: &RealMatrix) -> Result<RealMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} - {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Sum of squared entries.
    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Selects a sub-matrix by explicit row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self, LinalgError> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(LinalgError::DimensionMismatch(format!(
                "row index {r} out of range for {} rows",
                self.rows
            )));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(LinalgError::DimensionMismatch(format!(
                "column index {c} out of range for {} columns",
                self.cols
            )));
        }
        Ok(Self::from_fn(rows.len(), cols.len(), |i, j| {
            self.get(rows[i], cols[j])
        }))
    }
}

pub fn matmul(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} * {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = RealMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm(a: &RealMatrix) -> f64 {
    a.frobenius_norm_sq().sqrt()
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// For an `m x n` input with `r = min(m, n)`, `u` is `m x r`, `v` is `n x r`
/// and `singular_values` holds `r` values in descending order. Left vectors
/// belonging to exactly-zero singular values are zero columns.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: RealMatrix,
    pub singular_values: Vec<f64>,
    pub v: RealMatrix,
}

impl Svd {
    /// Numerical rank: singular values below `max(m, n) * eps * s_max`
    /// count as zero.
    pub fn rank(&self) -> usize {
        let thresh = self.threshold();
        self.singular_values.iter().filter(|&&s| s > thresh).count()
    }

    pub fn threshold(&self) -> f64 {
        let dim = self.u.rows.max(self.v.rows) as f64;
        let s_max = self.singular_values.first().copied().unwrap_or(0.0);
        dim * f64::EPSILON * s_max
    }

    pub fn reconstruct(&self) -> RealMatrix {
        let (m, n) = (self.u.rows, self.v.rows);
        RealMatrix::from_fn(m, n, |i, j| {
            self.singular_values
                .iter()
                .enumerate()
                .map(|(k, s)| self.u.get(i, k) * s * self.v.get(j, k))
                .sum()
        })
    }
}

pub fn svd(a: &RealMatrix) -> Result<Svd, LinalgError> {
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if a.rows >= a.cols {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
fn jacobi_tall(a: &RealMatrix) -> Result<Svd, LinalgError> {
    let (m, n) = (a.rows, a.cols);
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64);
    // columns below this squared norm are rounding noise of a rank-deficient
    // input; rotating against them never converges
    let floor = (f64::EPSILON * a.frobenius_norm()).powi(2);

    let mut converged = n < 2;
    for _ in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || alpha.min(beta) <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(SVD_MAX_SWEEPS));
    }

    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u = RealMatrix::zeros(m, n);
    let mut v = RealMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        singular_values.push(s);
        if s > 0.0 {
            for i in 0..m {
                u.set(i, k, cols[j][i] / s);
            }
        }
        for i in 0..n {
            v.set(i, k, vcols[j][i]);
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

#[inline]
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Result of [`min_norm_least_squares`].
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub c: RealMatrix,
    pub rank: usize,
    /// True when `m` has fewer independent columns than columns.
    pub rank_deficient: bool,
}

/// Minimum-norm minimizer of `‖w − m c‖_F` through the SVD pseudoinverse.
pub fn min_norm_least_squares(m: &RealMatrix, w: &RealMatrix) -> Result<LeastSquares, LinalgError> {
    if m.rows != w.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "lhs has {} rows, rhs has {}",
            m.rows, w.rows
        )));
    }
    let dec = svd(m)?;
    let rank = dec.rank();
    let k = m.cols;
    let d = w.cols;
    // c = V_r diag(1/s_r) U_rᵀ w
    let mut c = RealMatrix::zeros(k, d);
    let mut proj = vec![0.0; d];
    for r in 0..rank {
        proj.iter_mut().for_each(|p| *p = 0.0);
        for i in 0..m.rows {
            let uir = dec.u.get(i, r);
            if uir == 0.0 {
                continue;
            }
            for (p, &wij) in proj.iter_mut().zip(w.row(i)) {
                *p += uir * wij;
            }
        }
        let inv = 1.0 / dec.singular_values[r];
        for row in 0..k {
            let f = dec.v.get(row, r) * inv;
            if f == 0.0 {
                continue;
            }
            let crow = &mut c.data[row * d..(row + 1) * d];
            for (cv, &p) in crow.iter_mut().zip(&proj) {
                *cv += f * p;
            }
        }
    }
    Ok(LeastSquares {
        c,
        rank,
        rank_deficient: rank < k,
    })
}

/// Orthonormalizes the columns of `a` with twice-applied modified
/// Gram-Schmidt. Requires full column rank.
pub fn orthonormalize_columns(a: &RealMatrix) -> Result<RealMatrix, LinalgError> {
    let (m, n) = (a.rows, a.cols);
    if n > m {
        return Err(LinalgError::DimensionMismatch(format!(
            "cannot orthonormalize {n} columns in dimension {m}"
        )));
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
                let (lo, hi) = cols.split_at_mut(j);
                for (y, x) in hi[0].iter_mut().zip(&lo[i]) {
                    *y -= dot * x;
                }
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= f64::EPSILON {
            return Err(LinalgError::DimensionMismatch(
                "columns are linearly dependent".into(),
            ));
        }
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    Ok(RealMatrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix held as a flat row-major `n x n` slice.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for {n}x{n}",
                a.len()
            )));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let lj = j * n;
            let mut diag = a[lj + j];
            for k in 0..j {
                diag -= l[lj + k] * l[lj + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite(j));
            }
            let djj = diag.sqrt();
            l[lj + j] = djj;
            for i in (j + 1)..n {
                let li = i * n;
                let mut s = a[li + j];
                for k in 0..j {
                    s -= l[li + k] * l[lj + k];
                }
                l[li + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = b[i] / self.l[i * n + i];
            b[i] = xi;
            for k in 0..i {
                b[k] -= self.l[i * n + k] * xi;
            }
        }
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }
}
