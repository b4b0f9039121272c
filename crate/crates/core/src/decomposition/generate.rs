//! Instance construction: seeded Gaussian targets and SVD shrinking of a
//! larger source matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Instance;
use crate::error::{Error, Result};
use crate::linalg::{self, RealMatrix};

/// Seeded random target.
///
/// Entries are i.i.d. standard normal, unless `spectrum` is given, in which
/// case `W = U diag(spectrum) Vᵀ` with Haar-like orthonormal `U`, `V` built by
/// orthonormalizing Gaussian matrices.
pub fn gen_random_instance(
    n_rows: usize,
    n_cols: usize,
    k: usize,
    seed: u64,
    spectrum: Option<&[f64]>,
) -> Result<Instance> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::InvalidArgument("dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |rows, cols| {
        RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    };
    let w = match spectrum {
        None => gauss(n_rows, n_cols),
        Some(spec) => {
            let r = n_rows.min(n_cols);
            if spec.len() != r {
                return Err(Error::InvalidArgument(format!(
                    "spectrum has {} values, expected min(N, D) = {r}",
                    spec.len()
                )));
            }
            if spec.iter().any(|s| !s.is_finite()) {
                return Err(Error::InvalidArgument("spectrum must be finite".into()));
            }
            let u = linalg::orthonormalize_columns(&gauss(n_rows, r))?;
            let v = linalg::orthonormalize_columns(&gauss(n_cols, r))?;
            RealMatrix::from_fn(n_rows, n_cols, |i, j| {
                (0..r).map(|t| u.get(i, t) * spec[t] * v.get(j, t)).sum()
            })
        }
    };
    let label = format!("rand-{n_rows}x{n_cols}-k{k}-s{seed}");
    Instance::new(label, w, k)
}

/// Assembles `U[row_pick, sv_pick] · diag(s[sv_pick]) · V[col_pick, sv_pick]ᵀ`
/// from the thin SVD of `source`.
pub fn shrink_svd(
    source: &RealMatrix,
    n_rows: usize,
    n_cols: usize,
    row_pick: &[usize],
    col_pick: &[usize],
    sv_pick: &[usize],
) -> Result<RealMatrix> {
    if row_pick.len() != n_rows || col_pick.len() != n_cols {
        return Err(Error::InvalidArgument(format!(
            "picked {}x{} indices for a {n_rows}x{n_cols} output",
            row_pick.len(),
            col_pick.len()
        )));
    }
    let dec = linalg::svd(source)?;
    let r = dec.singular_values.len();
    let check = |name: &str, picks: &[usize], bound: usize| -> Result<()> {
        match picks.iter().find(|&&i| i >= bound) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "{name} index {i} out of range (< {bound})"
            ))),
            None => Ok(()),
        }
    };
    check("row", row_pick, source.rows())?;
    check("column", col_pick, source.cols())?;
    check("singular value", sv_pick, r)?;

    Ok(RealMatrix::from_fn(n_rows, n_cols, |i, j| {
        sv_pick
            .iter()
            .map(|&t| dec.u.get(row_pick[i], t) * dec.singular_values[t] * dec.v.get(col_pick[j], t))
            .sum()
    }))
}
