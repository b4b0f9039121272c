//! Second-order factorization machine trained by plain SGD.
//!
//! `ŷ(x) = w₀ + Σ wᵢxᵢ + Σ_{i<j} ⟨vᵢ, vⱼ⟩ xᵢxⱼ`. With spins `xᵢ² = 1`, so
//! the pairwise term reduces to `½ Σ_f (s_f² − Σᵢ v_if²)` with
//! `s_f = Σᵢ v_if xᵢ`, which is what the training loop evaluates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, QuadraticModel, Standardizer, ToQuadratic};
use crate::error::{Error, Result};

/// Standard deviation of the factor initialization.
const INIT_STD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmConfig {
    pub k_fm: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl FmConfig {
    pub const DEFAULT_EPOCHS: usize = 200;
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;

    pub fn new(k_fm: usize) -> Self {
        Self {
            k_fm,
            epochs: Self::DEFAULT_EPOCHS,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
        }
    }
}

/// Trained model on standardized targets.
///
/// `v` is row-major `n x k_fm`. `loss_history[e]` is the mean squared
/// training error (standardized units) after epoch `e + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub k_fm: usize,
    pub n: usize,
    pub standardizer: Standardizer,
    pub loss_history: Vec<f64>,
}

impl FmModel {
    fn factors(&self, i: usize) -> &[f64] {
        &self.v[i * self.k_fm..(i + 1) * self.k_fm]
    }

    /// Prediction in standardized units.
    pub fn predict_standardized(&self, x: &[i8]) -> f64 {
        let mut s = vec![0.0; self.k_fm];
        predict_into(self, x, &mut s)
    }

    /// Prediction in the units of the training targets.
    pub fn predict(&self, x: &[i8]) -> f64 {
        self.standardizer.invert(self.predict_standardized(x))
    }
}

/// Fills `s` with `s_f` and returns `ŷ`.
fn predict_into(m: &FmModel, x: &[i8], s: &mut [f64]) -> f64 {
    let k = m.k_fm;
    s.iter_mut().for_each(|v| *v = 0.0);
    let mut y = m.w0;
    let mut sq = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let xi = f64::from(xi);
        y += m.w[i] * xi;
        let vi = &m.v[i * k..(i + 1) * k];
        for (sf, &v) in s.iter_mut().zip(vi) {
            *sf += v * xi;
            sq += v * v;
        }
    }
    let s2: f64 = s.iter().map(|v| v * v).sum();
    y + 0.5 * (s2 - sq)
}

impl ToQuadratic for FmModel {
    fn to_quadratic(&self) -> QuadraticModel {
        let mut q = QuadraticModel::zeros(self.n);
        q.offset = self.w0;
        q.linear.copy_from_slice(&self.w);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let dot = self.factors(i).iter().zip(self.factors(j)).map(|(a, b)| a * b).sum();
                q.set_pair(i, j, dot);
            }
        }
        q
    }
}

pub fn fit_fm(data: &Dataset, k_fm: usize, epochs: usize, learning_rate: f64, rng_seed: u64) -> Result<FmModel> {
    fit_fm_with(
        data,
        &FmConfig {
            k_fm,
            epochs,
            learning_rate,
        },
        rng_seed,
    )
}

pub fn fit_fm_with(data: &Dataset, config: &FmConfig, rng_seed: u64) -> Result<FmModel> {
    let FmConfig {
        k_fm,
        epochs,
        learning_rate: lr,
    } = *config;
    if k_fm == 0 || epochs == 0 {
        return Err(Error::InvalidArgument("k_fm and epochs must be >= 1".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty dataset".into()));
    }
    let n = data.n();
    let standardizer = Standardizer::fit(data.ys());
    let ys: Vec<f64> = data.ys().iter().map(|&y| standardizer.apply(y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut model = FmModel {
        w0: 0.0,
        w: vec![0.0; n],
        v: (0..n * k_fm).map(|_| normal.sample(&mut rng)).collect(),
        k_fm,
        n,
        standardizer,
        loss_history: Vec::with_capacity(epochs),
    };

    if ys.iter().all(|&y| y == 0.0) {
        // constant targets: the zero model is an exact minimizer, while SGD
        // only shrinks the random factors at a cubic rate
        model.v.iter_mut().for_each(|v| *v = 0.0);
        model.loss_history.resize(epochs, 0.0);
        return Ok(model);
    }

    let mut order: Vec<usize> = (0..ys.len()).collect();
    let mut s = vec![0.0; k_fm];
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let x = data.xs()[idx].values();
            let e = predict_into(&model, x, &mut s) - ys[idx];
            let g = lr * e;
            model.w0 -= g;
            for (i, &xi) in x.iter().enumerate() {
                let xi = f64::from(xi);
                model.w[i] -= g * xi;
                let vi = &mut model.v[i * k_fm..(i + 1) * k_fm];
                for (v, &sf) in vi.iter_mut().zip(&s) {
                    *v -= g * (xi * sf - *v);
                }
            }
        }
        let mse = data
            .xs()
            .iter()
            .zip(&ys)
            .map(|(x, y)| (predict_into(&model, x.values(), &mut s) - y).powi(2))
            .sum::<f64>()
            / ys.len() as f64;
        if !mse.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "factorization machine diverged (learning rate {lr})"
            )));
        }
        model.loss_history.push(mse);
    }
    Ok(model)
}
