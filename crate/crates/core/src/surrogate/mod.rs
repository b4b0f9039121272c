//! Quadratic surrogates over spin vectors.
//!
//! Every surrogate reduces to `ŷ(x) = c + Σ bᵢ xᵢ + Σ_{i<j} A_ij xᵢ xⱼ`
//! ([`QuadraticModel`]), which is what the Ising solvers minimize. Targets
//! are standardized before fitting; affine rescaling of `y` does not move the
//! surrogate's argmin.

mod blr;
mod fm;

use serde::{Deserialize, Serialize};

use crate::decomposition::SpinAssignment;
use crate::error::{Error, Result};

pub use blr::{fit_blr, fit_blr_and_sample, BlrFit, BlrPosteriorDraw, GramStats, Prior};
pub use fm::{fit_fm, fit_fm_with, FmConfig, FmModel};

/// Default number of Gibbs steps per horseshoe fit.
pub const DEFAULT_GIBBS_STEPS: usize = 100;
/// Variance of the normal prior.
pub const DEFAULT_SIGMA2: f64 = 0.1;
/// Inverse scale of the normal-gamma prior.
pub const DEFAULT_BETA: f64 = 0.001;
pub const SIGMA2_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0];
pub const BETA_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];

/// Observed `(x, y)` pairs, all `x` of the same length.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    xs: Vec<SpinAssignment>,
    ys: Vec<f64>,
    n: usize,
}

impl Dataset {
    pub fn new(n: usize) -> Self {
        Self {
            xs: Vec::new(),
            ys: Vec::new(),
            n,
        }
    }

    pub fn push(&mut self, x: SpinAssignment, y: f64) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Shape(format!(
                "observation has {} spins, dataset expects {}",
                x.len(),
                self.n
            )));
        }
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite cost {y}")));
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xs(&self) -> &[SpinAssignment] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Mean / population standard deviation of the targets, with a unit scale
/// when the targets are constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub center: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn from_moments(count: f64, sum: f64, sum_sq: f64) -> Self {
        let center = sum / count;
        let var = (sum_sq / count - center * center).max(0.0);
        let sd = var.sqrt();
        // relative cutoff: constant targets leave only rounding in `var`
        let scale = if sd > 1e-12 * center.abs().max(1e-300) && sd > 0.0 {
            sd
        } else {
            1.0
        };
        Self { center, scale }
    }

    pub fn fit(ys: &[f64]) -> Self {
        let n = ys.len() as f64;
        let center = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - center).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * center.abs() && sd > 0.0 { sd } else { 1.0 };
        Self { center, scale }
    }

    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.center) / self.scale
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        self.center + self.scale * z
    }
}

/// Number of features `1 + n + n(n−1)/2`.
pub fn feature_len(n: usize) -> usize {
    1 + n + n * (n.saturating_sub(1)) / 2
}

/// Position of pair `(i, j)`, `i < j`, in lexicographic pair order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// `(1, x₁..xₙ, x₁x₂, x₁x₃, …, xₙ₋₁xₙ)`.
pub fn expand_features(x: &SpinAssignment) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_len(x.len()));
    out.push(1.0);
    write_interaction_features(x.values(), &mut out);
    out
}

/// Appends the non-constant features (linear then pairwise) to `out`.
pub(crate) fn write_interaction_features(x: &[i8], out: &mut Vec<f64>) {
    out.extend(x.iter().map(|&v| f64::from(v)));
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            out.push(f64::from(x[i] * x[j]));
        }
    }
}

/// `offset + Σ linearᵢ xᵢ + Σ_{i<j} pairwise[i][j] xᵢ xⱼ`, with `pairwise`
/// held as a row-major `n x n` matrix that is zero on and below the
/// diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub n: usize,
    pub offset: f64,
    pub linear: Vec<f64>,
    pub pairwise: Vec<f64>,
}

impl QuadraticModel {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            offset: 0.0,
            linear: vec![0.0; n],
            pairwise: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pairwise[i * self.n + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < j, "pairwise terms are strictly upper triangular");
        self.pairwise[i * self.n + j] = v;
    }

    /// `shift + scale * ŷ(x)` as a model.
    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        Self {
            n: self.n,
            offset: shift + scale * self.offset,
            linear: self.linear.iter().map(|v| v * scale).collect(),
            pairwise: self.pairwise.iter().map(|v| v * scale).collect(),
        }
    }

    /// The model as a flat coefficient vector aligned with
    /// [`expand_features`].
    pub fn to_feature_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(feature_len(self.n));
        out.push(self.offset);
        out.extend_from_slice(&self.linear);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.push(self.pair(i, j));
            }
        }
        out
    }

    pub fn from_feature_weights(n: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != feature_len(n) {
            return Err(Error::Shape(format!(
                "{} weights for {} features",
                weights.len(),
                feature_len(n)
            )));
        }
        let mut model = Self::zeros(n);
        model.offset = weights[0];
        model.linear.copy_from_slice(&weights[1..=n]);
        let mut idx = 1 + n;
        for i in 0..n {
            for j in (i + 1)..n {
                model.pairwise[i * n + j] = weights[idx];
                idx += 1;
            }
        }
        Ok(model)
    }
}

pub fn predict(model: &QuadraticModel, x: &SpinAssignment) -> f64 {
    assert_eq!(x.len(), model.n, "spin length does not match model");
    let v = x.values();
    let n = model.n;
    let mut acc = model.offset;
    for i in 0..n {
        let xi = f64::from(v[i]);
        acc += model.linear[i] * xi;
        let row = &model.pairwise[i * n..(i + 1) * n];
        let mut inner = 0.0;
        for j in (i + 1)..n {
            inner += row[j] * f64::from(v[j]);
        }
        acc += xi * inner;
    }
    acc
}

/// Conversion of a fitted surrogate into its quadratic form.
pub trait ToQuadratic {
    fn to_quadratic(&self) -> QuadraticModel;
}

pub fn to_quadratic<M: ToQuadratic + ?Sized>(model: &M) -> QuadraticModel {
    model.to_quadratic()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spins(s: &str) -> SpinAssignment {
        SpinAssignment::parse_signs(s, s.len()).unwrap()
    }

    #[test]
    fn hand_expansion() {
        assert_eq!(
            expand_features(&spins("+-+")),
            vec![1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]
        );
        assert!(expand_features(&spins("++++")).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn feature_length_at_24() {
        assert_eq!(feature_len(24), 301);
        assert_eq!(expand_features(&spins(&"+".repeat(24))).len(), 301);
    }

    #[test]
    fn pair_index_is_lexicographic() {
        let n = 5;
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(pair_index(n, i, j), k);
                k += 1;
            }
        }
    }

    #[test]
    fn predict_examples() {
        let zero = QuadraticModel::zeros(3);
        assert_eq!(predict(&zero, &spins("+-+")), 0.0);
        let mut c = QuadraticModel::zeros(3);
        c.offset = 7.0;
        assert_eq!(predict(&c, &spins("--+")), 7.0);
        let mut m = QuadraticModel::zeros(2);
        m.linear = vec![1.0, 2.0];
        m.set_pair(0, 1, 3.0);
        // 0 + 1·1 + 2·(−1) + 3·(1·−1)
        assert_eq!(predict(&m, &spins("+-")), -4.0);
    }

    #[test]
    fn feature_weights_round_trip() {
        let w: Vec<f64> = (0..feature_len(4)).map(|i| i as f64 * 0.5 - 1.0).collect();
        let model = QuadraticModel::from_feature_weights(4, &w).unwrap();
        assert_eq!(model.to_feature_weights(), w);
        assert!(QuadraticModel::from_feature_weights(4, &w[1..]).is_err());
    }

    #[test]
    fn dataset_validates() {
        let mut d = Dataset::new(2);
        assert!(d.push(spins("+-"), 1.0).is_ok());
        assert!(d.push(spins("+-+"), 1.0).is_err());
        assert!(d.push(spins("+-"), f64::NAN).is_err());
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn standardizer_constant_targets() {
        let s = Standardizer::fit(&[3.0, 3.0, 3.0]);
        assert_eq!(s.scale, 1.0);
        assert_eq!(s.apply(3.0), 0.0);
        let m = Standardizer::from_moments(3.0, 9.0, 27.0);
        assert_eq!(m.scale, 1.0);
    }
}
