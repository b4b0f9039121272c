//! Bayesian linear regression over the pairwise feature expansion with
//! Thompson-style posterior draws.
//!
//! Fitting works on sufficient statistics of the centered features and the
//! standardized targets, so the data only enters through `XcᵀXc`, `Xcᵀy`
//! and `yᵀy`. The intercept is recovered from the feature means and carries
//! no prior. Three priors are supported:
//!
//! * normal: `α_k ~ N(0, σ²)` with unit noise variance, one exact draw;
//! * normal-gamma `(0, 1, 1, β)`: `σ⁻²` from its gamma marginal, then the
//!   coefficients given `σ²`;
//! * horseshoe: Gibbs sampling with the inverse-gamma auxiliary
//!   representation of the half-Cauchy local and global scales.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{feature_len, write_interaction_features, Dataset, QuadraticModel, Standardizer, ToQuadratic};
use crate::decomposition::SpinAssignment;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Bounds on horseshoe scale parameters; keeps the prior precision finite.
const SCALE_MIN: f64 = 1e-12;
const SCALE_MAX: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Horseshoe,
    Normal { sigma2: f64 },
    NormalGamma { beta: f64 },
}

impl Prior {
    fn validate(&self) -> Result<()> {
        match *self {
            Prior::Normal { sigma2 } if !(sigma2 > 0.0 && sigma2.is_finite()) => Err(
                Error::InvalidArgument(format!("normal prior needs sigma2 > 0, got {sigma2}")),
            ),
            Prior::NormalGamma { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::InvalidArgument(format!("normal-gamma prior needs beta > 0, got {beta}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Running sufficient statistics of `(features(x), y)`.
///
/// Features exclude the constant column; only the upper triangle of the
/// cross-product matrix is accumulated.
#[derive(Clone, Debug)]
pub struct GramStats {
    n: usize,
    q: usize,
    count: usize,
    sum_f: Vec<f64>,
    sum_ff: Vec<f64>,
    sum_fy: Vec<f64>,
    sum_y: f64,
    sum_yy: f64,
    scratch: Vec<f64>,
}

impl GramStats {
    pub fn new(n: usize) -> Self {
        let q = feature_len(n) - 1;
        Self {
            n,
            q,
            count: 0,
            sum_f: vec![0.0; q],
            sum_ff: vec![0.0; q * q],
            sum_fy: vec![0.0; q],
            sum_y: 0.0,
            sum_yy: 0.0,
            scratch: Vec::with_capacity(q),
        }
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let mut stats = Self::new(data.n());
        for (x, &y) in data.xs().iter().zip(data.ys()) {
            stats.push(x, y)?;
        }
        Ok(stats)
    }

    pub fn push(&mut self, x: &SpinAssignment, y: f64) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Shape(format!(
                "observation has {} spins, expected {}",
                x.len(),
                self.n
            )));
        }
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite cost {y}")));
        }
        self.scratch.clear();
        write_interaction_features(x.values(), &mut self.scratch);
        let q = self.q;
        for i in 0..q {
            let fi = self.scratch[i];
            self.sum_f[i] += fi;
            self.sum_fy[i] += fi * y;
            let row = &mut self.sum_ff[i * q..(i + 1) * q];
            for (acc, &fj) in row[i..].iter_mut().zip(&self.scratch[i..]) {
                *acc += fi * fj;
            }
        }
        self.count += 1;
        self.sum_y += y;
        self.sum_yy += y * y;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Centered / standardized quantities: `(XcᵀXc` full symmetric,
    /// `Xcᵀys`, `ysᵀys`, feature means, standardizer`)`.
    fn centered(&self) -> Centered {
        let m = self.count as f64;
        let q = self.q;
        let std = Standardizer::from_moments(m, self.sum_y, self.sum_yy);
        let mean_f: Vec<f64> = self.sum_f.iter().map(|s| s / m).collect();
        let mut gram = vec![0.0; q * q];
        for i in 0..q {
            for j in i..q {
                let v = self.sum_ff[i * q + j] - m * mean_f[i] * mean_f[j];
                gram[i * q + j] = v;
                gram[j * q + i] = v;
            }
        }
        let xty: Vec<f64> = (0..q)
            .map(|i| (self.sum_fy[i] - m * mean_f[i] * std.center) / std.scale)
            .collect();
        let yty = ((self.sum_yy - m * std.center * std.center) / (std.scale * std.scale)).max(0.0);
        Centered {
            gram,
            xty,
            yty,
            mean_f,
            std,
        }
    }
}

struct Centered {
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    mean_f: Vec<f64>,
    std: Standardizer,
}

/// One coefficient vector drawn from the posterior.
///
/// `coefficients` are in standardized-target units, ordered like
/// [`super::expand_features`]: intercept, linear, then pairwise terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlrPosteriorDraw {
    pub coefficients: Vec<f64>,
    pub prior: Prior,
    pub n: usize,
    pub standardizer: Standardizer,
}

impl BlrPosteriorDraw {
    /// Coefficients mapped back to the scale of the observed costs.
    pub fn to_original_units(&self) -> Vec<f64> {
        scale_back(&self.coefficients, &self.standardizer)
    }
}

fn scale_back(coef: &[f64], std: &Standardizer) -> Vec<f64> {
    let mut out: Vec<f64> = coef.iter().map(|c| c * std.scale).collect();
    out[0] += std.center;
    out
}

impl ToQuadratic for BlrPosteriorDraw {
    fn to_quadratic(&self) -> QuadraticModel {
        QuadraticModel::from_feature_weights(self.n, &self.coefficients)
            .expect("coefficient length matches feature expansion")
    }
}

/// A posterior draw together with the posterior mean estimate (exact for
/// the conjugate priors, the chain average over the second half of the
/// Gibbs run for the horseshoe). Both in standardized units.
#[derive(Clone, Debug)]
pub struct BlrFit {
    pub draw: BlrPosteriorDraw,
    pub posterior_mean: Vec<f64>,
}

impl BlrFit {
    pub fn posterior_mean_original(&self) -> Vec<f64> {
        scale_back(&self.posterior_mean, &self.draw.standardizer)
    }
}

/// Fits the posterior on `data` and returns a single draw.
pub fn fit_blr_and_sample(
    data: &Dataset,
    prior: Prior,
    rng_seed: u64,
    gibbs_steps: usize,
) -> Result<BlrPosteriorDraw> {
    let stats = GramStats::from_dataset(data)?;
    Ok(fit_blr(&stats, prior, rng_seed, gibbs_steps)?.draw)
}

pub fn fit_blr(stats: &GramStats, prior: Prior, rng_seed: u64, gibbs_steps: usize) -> Result<BlrFit> {
    if stats.is_empty() {
        return Err(Error::InvalidArgument("cannot fit an empty dataset".into()));
    }
    prior.validate()?;
    if matches!(prior, Prior::Horseshoe) && gibbs_steps == 0 {
        return Err(Error::InvalidArgument(
            "horseshoe sampling needs at least one Gibbs step".into(),
        ));
    }
    let c = stats.centered();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (beta, mean) = match prior {
        Prior::Normal { sigma2 } => sample_normal(&c, 1.0 / sigma2, &mut rng)?,
        Prior::NormalGamma { beta } => sample_normal_gamma(&c, beta, stats.count, &mut rng)?,
        Prior::Horseshoe => sample_horseshoe(&c, stats.count, gibbs_steps, &mut rng)?,
    };
    let with_intercept = |b: &[f64]| {
        let intercept = -c.mean_f.iter().zip(b).map(|(m, v)| m * v).sum::<f64>();
        let mut out = Vec::with_capacity(b.len() + 1);
        out.push(intercept);
        out.extend_from_slice(b);
        out
    };
    Ok(BlrFit {
        draw: BlrPosteriorDraw {
            coefficients: with_intercept(&beta),
            prior,
            n: stats.n,
            standardizer: c.std,
        },
        posterior_mean: with_intercept(&mean),
    })
}

fn standard_normals(q: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..q).map(|_| StandardNormal.sample(rng)).collect()
}

/// Inverse-gamma draw with shape `a` and scale `b`.
fn inv_gamma(a: f64, b: f64, rng: &mut ChaCha8Rng) -> f64 {
    let g: f64 = Gamma::new(a, 1.0 / b)
        .expect("positive gamma parameters")
        .sample(rng);
    1.0 / g
}

/// Factors `gram + diag(prior_precision)` and returns `(L, mean)`.
fn posterior_factor(c: &Centered, prior_precision: &[f64]) -> Result<(Cholesky, Vec<f64>)> {
    let q = c.xty.len();
    let mut a = c.gram.clone();
    for (i, p) in prior_precision.iter().enumerate() {
        a[i * q + i] += p;
    }
    let chol = Cholesky::factor(&a, q)?;
    let mut mean = c.xty.clone();
    chol.solve(&mut mean);
    Ok((chol, mean))
}

/// `mean + scale · L⁻ᵀ z`, a draw from `N(mean, scale² (L Lᵀ)⁻¹)`.
fn gaussian_draw(chol: &Cholesky, mean: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = standard_normals(mean.len(), rng);
    chol.solve_upper(&mut z);
    mean.iter().zip(&z).map(|(m, e)| m + scale * e).collect()
}

fn sample_normal(c: &Centered, precision: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = c.xty.len();
    let (chol, mean) = posterior_factor(c, &vec![precision; q])?;
    Ok((gaussian_draw(&chol, &mean, 1.0, rng), mean))
}

fn sample_normal_gamma(
    c: &Centered,
    beta: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = c.xty.len();
    let (chol, mean) = posterior_factor(c, &vec![1.0; q])?;
    // b_n = β + ½ (yᵀy − μᵀ A μ), with A μ = Xᵀy
    let fit: f64 = mean.iter().zip(&c.xty).map(|(m, b)| m * b).sum();
    let shape = 1.0 + count as f64 / 2.0;
    let rate = beta + 0.5 * (c.yty - fit).max(0.0);
    let sigma2 = inv_gamma(shape, rate, rng);
    Ok((gaussian_draw(&chol, &mean, sigma2.sqrt(), rng), mean))
}

fn sample_horseshoe(
    c: &Centered,
    count: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = c.xty.len();
    let m = count as f64;
    let mut sigma2: f64 = 1.0;
    let mut tau2: f64 = 1.0;
    let mut xi = 1.0;
    let mut lambda2 = vec![1.0; q];
    let mut nu = vec![1.0; q];
    let mut beta = vec![0.0; q];
    let mut mean_acc = vec![0.0; q];
    let burn_in = steps / 2;
    let mut prior_prec = vec![0.0; q];
    let mut gram_beta = vec![0.0; q];

    for step in 0..steps {
        for (p, l) in prior_prec.iter_mut().zip(&lambda2) {
            *p = 1.0 / (tau2 * l);
        }
        // α | σ², τ², λ² ~ N(A⁻¹Xᵀy, σ² A⁻¹)
        let (chol, mean) = posterior_factor(c, &prior_prec)?;
        beta = gaussian_draw(&chol, &mean, sigma2.sqrt(), rng);

        // σ² | rest: residual plus prior quadratic form
        for i in 0..q {
            gram_beta[i] = c.gram[i * q..(i + 1) * q]
                .iter()
                .zip(&beta)
                .map(|(g, b)| g * b)
                .sum();
        }
        let bt_xty: f64 = beta.iter().zip(&c.xty).map(|(b, y)| b * y).sum();
        let bt_g_b: f64 = beta.iter().zip(&gram_beta).map(|(b, g)| b * g).sum();
        let resid_ss = (c.yty - 2.0 * bt_xty + bt_g_b).max(0.0);
        let prior_ss: f64 = beta.iter().zip(&prior_prec).map(|(b, p)| b * b * p).sum();
        sigma2 = inv_gamma((m + q as f64) / 2.0, (resid_ss + prior_ss) / 2.0, rng)
            .clamp(SCALE_MIN, SCALE_MAX);

        // local scales
        for k in 0..q {
            let scale = 1.0 / nu[k] + beta[k] * beta[k] / (2.0 * tau2 * sigma2);
            lambda2[k] = inv_gamma(1.0, scale, rng).clamp(SCALE_MIN, SCALE_MAX);
        }
        // global scale
        let ss: f64 = beta.iter().zip(&lambda2).map(|(b, l)| b * b / l).sum();
        tau2 = inv_gamma((q as f64 + 1.0) / 2.0, 1.0 / xi + ss / (2.0 * sigma2), rng)
            .clamp(SCALE_MIN, SCALE_MAX);
        // auxiliaries
        for k in 0..q {
            nu[k] = inv_gamma(1.0, 1.0 + 1.0 / lambda2[k], rng);
        }
        xi = inv_gamma(1.0, 1.0 + 1.0 / tau2, rng);

        if step >= burn_in {
            mean_acc.iter_mut().zip(&beta).for_each(|(a, b)| *a += b);
        }
    }
    let kept = (steps - burn_in) as f64;
    mean_acc.iter_mut().for_each(|a| *a /= kept);
    Ok((beta, mean_acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{expand_features, predict, to_quadratic};

    fn random_dataset(n: usize, size: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Dataset::new(n);
        for _ in 0..size {
            let x = SpinAssignment::random(n, n, &mut rng);
            let y = f(&expand_features(&x));
            d.push(x, y).unwrap();
        }
        d
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        let d = random_dataset(4, 20, 1, |f| f.iter().sum::<f64>() + f[2] * 3.0);
        for prior in [Prior::Horseshoe, Prior::Normal { sigma2: 0.1 }, Prior::NormalGamma { beta: 1e-3 }] {
            let a = fit_blr_and_sample(&d, prior, 5, 10).unwrap();
            let b = fit_blr_and_sample(&d, prior, 5, 10).unwrap();
            let c = fit_blr_and_sample(&d, prior, 6, 10).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.coefficients, c.coefficients);
            assert_eq!(a.coefficients.len(), feature_len(4));
        }
    }

    #[test]
    fn constant_targets_shrink_to_constant() {
        let d = random_dataset(3, 15, 2, |_| 4.5);
        let stats = GramStats::from_dataset(&d).unwrap();
        let fit = fit_blr(&stats, Prior::Normal { sigma2: 0.1 }, 0, 1).unwrap();
        let mean = fit.posterior_mean_original();
        assert!((mean[0] - 4.5).abs() < 1e-12);
        assert!(mean[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn quadratic_matches_feature_dot_product() {
        let d = random_dataset(5, 30, 3, |f| f[1] - 2.0 * f[7] + 0.5 * f[12]);
        let draw = fit_blr_and_sample(&d, Prior::Normal { sigma2: 1.0 }, 9, 1).unwrap();
        let model = to_quadratic(&draw);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = SpinAssignment::random(5, 5, &mut rng);
            let dot: f64 = expand_features(&x)
                .iter()
                .zip(&draw.coefficients)
                .map(|(a, b)| a * b)
                .sum();
            assert!((predict(&model, &x) - dot).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = Dataset::new(3);
        assert!(fit_blr_and_sample(&empty, Prior::Horseshoe, 0, 5).is_err());
        let d = random_dataset(3, 5, 2, |f| f[1]);
        assert!(fit_blr_and_sample(&d, Prior::Horseshoe, 0, 0).is_err());
        assert!(fit_blr_and_sample(&d, Prior::Normal { sigma2: 0.0 }, 0, 1).is_err());
        assert!(fit_blr_and_sample(&d, Prior::NormalGamma { beta: -1.0 }, 0, 1).is_err());
    }

    #[test]
    fn sufficient_statistics_match_direct_centering() {
        let d = random_dataset(3, 12, 8, |f| f[1] + 0.3 * f[5]);
        let c = GramStats::from_dataset(&d).unwrap().centered();
        let feats: Vec<Vec<f64>> = d.xs().iter().map(|x| expand_features(x)[1..].to_vec()).collect();
        let q = feats[0].len();
        let m = feats.len() as f64;
        let means: Vec<f64> = (0..q).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / m).collect();
        for i in 0..q {
            for j in 0..q {
                let direct: f64 = feats.iter().map(|f| (f[i] - means[i]) * (f[j] - means[j])).sum();
                assert!((c.gram[i * q + j] - direct).abs() < 1e-9);
            }
        }
    }
}
