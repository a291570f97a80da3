//! Zero-mean Gaussian-process regression with the squared-exponential ARD
//! kernel `k(x, x') = σ_s² exp(−Σᵢ (xᵢ − x'ᵢ)² / (2 lᵢ²))`.

use crate::linalg::{
    back_substitute_transpose, cholesky_in_place, forward_substitute, inverse_from_cholesky,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative jitter schedule, as multiples of `σ_s²`, tried in order when the
/// Cholesky factorization of `K + σ_f² I` fails.
pub const JITTER_SCHEDULE: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Kernel and noise hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let h = Hyperparameters {
            signal_variance,
            lengthscales,
            noise_variance,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize, noise_variance: f64) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && !self.lengthscales.is_empty()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.noise_variance >= 0.0
            && self.noise_variance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid hyperparameters {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Number of entries in the log-parameter vector.
    pub fn n_params(&self) -> usize {
        self.lengthscales.len() + 2
    }

    /// `[ln σ_s², ln l₁, …, ln l_d, ln σ_f²]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(log: &[f64]) -> Self {
        let d = log.len() - 2;
        Hyperparameters {
            signal_variance: log[0].exp(),
            lengthscales: log[1..=d].iter().map(|v| v.exp()).collect(),
            noise_variance: log[d + 1].exp(),
        }
    }
}

/// Training inputs (row-major, `len × dim`), observed log-likelihood values
/// and the current upper bound on those values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    inputs: Vec<f64>,
    values: Vec<f64>,
    pub upper_bound: f64,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        TrainingSet {
            dim,
            inputs: Vec::new(),
            values: Vec::new(),
            upper_bound: f64::INFINITY,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut set = TrainingSet::new(dim);
        if rows.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: values.len(),
            });
        }
        for (r, &v) in rows.iter().zip(values) {
            set.push(r, v)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, x: &[f64], value: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!("training value must be finite, got {value}")));
        }
        self.inputs.extend_from_slice(x);
        self.values.push(value);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Root-mean-square of the values, or 1 if all are zero.
    pub fn output_scale(&self) -> f64 {
        if self.values.is_empty() {
            return 1.0;
        }
        let ms = self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64;
        if ms > 0.0 {
            ms.sqrt()
        } else {
            1.0
        }
    }
}

#[inline]
fn weighted_sq_dist(x: &[f64], y: &[f64], inv_two_l2: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(inv_two_l2)
        .map(|((a, b), w)| {
            let d = a - b;
            d * d * w
        })
        .sum()
}

fn inv_two_l2(theta: &Hyperparameters) -> Vec<f64> {
    theta.lengthscales.iter().map(|l| 0.5 / (l * l)).collect()
}

/// Squared-exponential kernel value.
pub fn kernel(x: &[f64], y: &[f64], theta: &Hyperparameters) -> Result<f64> {
    let d = theta.dim();
    for len in [x.len(), y.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, found: len });
        }
    }
    Ok(theta.signal_variance * (-weighted_sq_dist(x, y, &inv_two_l2(theta))).exp())
}

/// Noise-free kernel matrix `K(X, X)`, row-major.
pub fn kernel_matrix(training: &TrainingSet, theta: &Hyperparameters) -> Vec<f64> {
    let n = training.len();
    let w = inv_two_l2(theta);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = theta.signal_variance;
        for j in 0..i {
            let v = theta.signal_variance * (-weighted_sq_dist(training.point(i), training.point(j), &w)).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Predictive mean and variance of the latent function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A GP conditioned on a training set. Immutable; prediction is `&self`.
#[derive(Debug, Clone)]
pub struct FittedGP {
    training: Arc<TrainingSet>,
    hyper: Hyperparameters,
    inv_two_l2: Vec<f64>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Factorizes `K + σ_f² I`, escalating jitter per [`JITTER_SCHEDULE`].
fn factorize(training: &TrainingSet, theta: &Hyperparameters) -> Result<(Vec<f64>, f64)> {
    let n = training.len();
    let base = kernel_matrix(training, theta);
    for rel in JITTER_SCHEDULE {
        let jitter = rel * theta.signal_variance;
        let mut a = base.clone();
        for i in 0..n {
            a[i * n + i] += theta.noise_variance + jitter;
        }
        if cholesky_in_place(&mut a, n) {
            return Ok((a, jitter));
        }
    }
    Err(Error::CholeskyFailure {
        max_jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1] * theta.signal_variance,
    })
}

/// Conditions the GP on `training`.
pub fn fit(training: Arc<TrainingSet>, theta: &Hyperparameters) -> Result<FittedGP> {
    theta.validate()?;
    if training.is_empty() {
        return Err(Error::Domain("cannot fit a GP to an empty training set".into()));
    }
    if training.dim() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            found: training.dim(),
        });
    }
    let n = training.len();
    let (chol, jitter) = factorize(&training, theta)?;
    let mut alpha = training.values().to_vec();
    forward_substitute(&chol, n, &mut alpha);
    back_substitute_transpose(&chol, n, &mut alpha);
    Ok(FittedGP {
        inv_two_l2: inv_two_l2(theta),
        training,
        hyper: theta.clone(),
        chol,
        alpha,
        jitter,
    })
}

impl FittedGP {
    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn training(&self) -> &Arc<TrainingSet> {
        &self.training
    }

    /// Jitter added to the diagonal on top of `σ_f²`.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Weights `α = (K + σ_f² I)⁻¹ f`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Lower Cholesky factor of `K + (σ_f² + jitter) I`, row-major.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.hyper.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hyper.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        let s2 = self.hyper.signal_variance;
        self.training
            .points()
            .map(|p| s2 * (-weighted_sq_dist(x, p, &self.inv_two_l2)).exp())
            .collect()
    }

    /// Predictive mean only; `O(N d)`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let s2 = self.hyper.signal_variance;
        Ok(self
            .training
            .points()
            .zip(&self.alpha)
            .map(|(p, a)| a * s2 * (-weighted_sq_dist(x, p, &self.inv_two_l2)).exp())
            .sum())
    }

    /// Predictive mean and (clamped) variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let mut v = self.cross_kernel(x);
        let mean: f64 = v.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        forward_substitute(&self.chol, self.training.len(), &mut v);
        let reduction: f64 = v.iter().map(|t| t * t).sum();
        let variance = (self.hyper.signal_variance - reduction).max(0.0);
        Ok(Prediction { mean, variance })
    }

    /// `log p(f | X, θ)` of the conditioned training data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.training.len();
        let fit: f64 = self.training.values().iter().zip(&self.alpha).map(|(f, a)| f * a).sum();
        let log_det_half: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - log_det_half - 0.5 * n as f64 * (2.0 * PI).ln()
    }
}

/// `−½ fᵀ(K+σ_f²I)⁻¹f − ½ log|K+σ_f²I| − (N/2) log 2π`.
pub fn log_marginal_likelihood(training: &Arc<TrainingSet>, theta: &Hyperparameters) -> Result<f64> {
    Ok(fit(Arc::clone(training), theta)?.log_marginal_likelihood())
}

/// Log marginal likelihood with its gradient over
/// `[ln σ_s², ln l₁, …, ln l_d, ln σ_f²]`.
pub fn lml_gradient(training: &Arc<TrainingSet>, theta: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
    let gp = fit(Arc::clone(training), theta)?;
    let n = training.len();
    let d = theta.dim();
    let kinv = inverse_from_cholesky(&gp.chol, n);
    let alpha = &gp.alpha;
    let w = &gp.inv_two_l2;
    let mut grad = vec![0.0; d + 2];
    // ½ tr((ααᵀ − K⁻¹) ∂K/∂θ), symmetric so sum the lower triangle twice.
    let mut trace_w = 0.0;
    for i in 0..n {
        let wii = alpha[i] * alpha[i] - kinv[i * n + i];
        trace_w += wii;
        grad[0] += 0.5 * wii * theta.signal_variance;
        let pi = training.point(i);
        for j in 0..i {
            let wij = alpha[i] * alpha[j] - kinv[i * n + j];
            let pj = training.point(j);
            let kse = theta.signal_variance * (-weighted_sq_dist(pi, pj, w)).exp();
            let c = wij * kse;
            grad[0] += c;
            for k in 0..d {
                let diff = pi[k] - pj[k];
                // ∂K/∂ln l_k = K · (Δ²/l²) = K · 2 w_k Δ²
                grad[1 + k] += c * 2.0 * w[k] * diff * diff;
            }
        }
    }
    grad[d + 1] = 0.5 * theta.noise_variance * trace_w;
    Ok((gp.log_marginal_likelihood(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[&[f64]], values: &[f64]) -> Arc<TrainingSet> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Arc::new(TrainingSet::from_rows(&rows, values).unwrap())
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Arc<TrainingSet> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let values: Vec<f64> = rows.iter().map(|r| -r.iter().map(|v| v * v).sum::<f64>() - 0.3).collect();
        Arc::new(TrainingSet::from_rows(&rows, &values).unwrap())
    }

    // Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn kernel_examples() {
        let th = Hyperparameters::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        assert_eq!(kernel(&[0.3], &[0.3], &th).unwrap(), 1.0);
        let v = kernel(&[0.0], &[2f64.sqrt()], &th).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-12);
        assert!((v - 0.367_879_441_2).abs() < 1e-10);
        assert!(kernel(&[0.0], &[1e3], &th).unwrap() < 1e-300);
        assert!(matches!(kernel(&[0.0, 1.0], &[0.0], &th), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_point_fit_and_predict() {
        let d = set(&[&[0.0]], &[-1.0]);
        let th = Hyperparameters::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        let gp = fit(d, &th).unwrap();
        assert!((gp.alpha()[0] + 1.0).abs() < 1e-15);
        let p = gp.predict(&[1.0]).unwrap();
        assert!((p.mean + (-0.5f64).exp()).abs() < 1e-12);
        assert!((p.mean + 0.606_530_659_7).abs() < 1e-10);
        assert!((p.variance - (1.0 - (-1f64).exp())).abs() < 1e-12);
        assert!((p.variance - 0.632_120_558_8).abs() < 1e-10);
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_set(&mut rng, 8, 2);
        let th = Hyperparameters::isotropic(2.0, 0.7, 2, 0.0).unwrap();
        let gp = fit(Arc::clone(&d), &th).unwrap();
        assert_eq!(gp.jitter(), 0.0);
        for i in 0..d.len() {
            let p = gp.predict(d.point(i)).unwrap();
            assert!((p.mean - d.values()[i]).abs() < 1e-8);
            assert!(p.variance < 1e-8);
        }
    }

    #[test]
    fn alpha_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_set(&mut rng, 3, 2);
        let th = Hyperparameters::new(1.5, vec![0.8, 1.3], 0.01).unwrap();
        let gp = fit(Arc::clone(&d), &th).unwrap();
        let a: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| kernel(d.point(i), d.point(j), &th).unwrap() + if i == j { 0.01 } else { 0.0 })
                    .collect()
            })
            .collect();
        let x = dense_solve(a, d.values().to_vec());
        for i in 0..3 {
            assert!((gp.alpha()[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_set(&mut rng, 12, 3);
        let th = Hyperparameters::new(3.0, vec![1.0, 0.5, 2.0], 1e-3).unwrap();
        let gp = fit(Arc::clone(&d), &th).unwrap();
        let n = d.len();
        let l = gp.cholesky_factor();
        let k = kernel_matrix(&d, &th);
        for i in 0..n {
            assert!(l[i * n + i] > 0.0);
            for j in 0..n {
                let r: f64 = (0..n).map(|m| l[i * n + m] * l[j * n + m]).sum();
                let target = k[i * n + j] + if i == j { 1e-3 } else { 0.0 };
                assert!((r - target).abs() <= 1e-8 * target.abs().max(1.0));
            }
        }
    }

    #[test]
    fn far_points_recover_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_set(&mut rng, 10, 2);
        let th = Hyperparameters::isotropic(2.5, 0.3, 2, 1e-6).unwrap();
        let gp = fit(d, &th).unwrap();
        let p = gp.predict(&[20.0 * 0.3 + 2.0, 0.0]).unwrap();
        assert!(p.mean.abs() < 1e-6);
        assert!((p.variance - 2.5).abs() < 1e-6);
    }

    #[test]
    fn duplicate_points_need_jitter_or_fail_loudly() {
        let d = set(&[&[0.0], &[0.0]], &[-1.0, -1.0]);
        let th = Hyperparameters::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        let gp = fit(d, &th).unwrap();
        assert!(gp.jitter() > 0.0);
        assert!(Hyperparameters::isotropic(1.0, 1.0, 1, -0.5).is_err());
    }

    #[test]
    fn lml_examples() {
        let d = set(&[&[0.0]], &[0.0]);
        let th = Hyperparameters::isotropic(1.0, 1.0, 1, 0.0).unwrap();
        let v = log_marginal_likelihood(&d, &th).unwrap();
        assert!((v + 0.918_938_533_2).abs() < 1e-10);

        // 2×2 closed form.
        let d = set(&[&[0.0], &[0.8]], &[-1.0, -2.0]);
        let th = Hyperparameters::isotropic(1.3, 0.9, 1, 0.05).unwrap();
        let k01 = 1.3 * (-0.64f64 / (2.0 * 0.81)).exp();
        let (a, b, c) = (1.35, k01, 1.35);
        let det = a * c - b * b;
        let (f0, f1) = (-1.0, -2.0);
        let quad = (c * f0 * f0 - 2.0 * b * f0 * f1 + a * f1 * f1) / det;
        let expected = -0.5 * quad - 0.5 * det.ln() - (2.0 * PI).ln();
        assert!((log_marginal_likelihood(&d, &th).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_decreases_data_fit_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_set(&mut rng, 6, 1);
        let mut prev = f64::NEG_INFINITY;
        for &noise in &[1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let th = Hyperparameters::isotropic(1.0, 0.5, 1, noise).unwrap();
            let gp = fit(Arc::clone(&d), &th).unwrap();
            let data_fit: f64 = -0.5 * d.values().iter().zip(gp.alpha()).map(|(f, a)| f * a).sum::<f64>();
            assert!(data_fit > prev);
            prev = data_fit;
        }
    }

    fn finite_difference(d: &Arc<TrainingSet>, th: &Hyperparameters) -> Vec<f64> {
        let h = 1e-5;
        let base = th.to_log();
        (0..base.len())
            .map(|i| {
                let mut up = base.clone();
                up[i] += h;
                let mut dn = base.clone();
                dn[i] -= h;
                let fu = log_marginal_likelihood(d, &Hyperparameters::from_log(&up)).unwrap();
                let fd = log_marginal_likelihood(d, &Hyperparameters::from_log(&dn)).unwrap();
                (fu - fd) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let d = random_set(&mut rng, 7, 2);
            let th = Hyperparameters::new(
                rng.random_range(0.5..3.0),
                vec![rng.random_range(0.4..2.0), rng.random_range(0.4..2.0)],
                rng.random_range(0.01..0.2),
            )
            .unwrap();
            let (_, g) = lml_gradient(&d, &th).unwrap();
            let fd = finite_difference(&d, &th);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "{g:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn gradient_scalar_case() {
        // N = 1: lml = −f²/(2v) − ½ ln v − ½ ln 2π with v = σ_s² + σ_f².
        let d = set(&[&[0.4]], &[-1.7]);
        let th = Hyperparameters::isotropic(0.8, 1.1, 1, 0.3).unwrap();
        let (_, g) = lml_gradient(&d, &th).unwrap();
        let v = 1.1f64;
        let dv = 0.5 * 1.7f64.powi(2) / (v * v) - 0.5 / v;
        assert!((g[0] - dv * 0.8).abs() < 1e-12);
        assert!(g[1].abs() < 1e-15);
        assert!((g[2] - dv * 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_data_has_zero_fit_gradient() {
        let d = set(&[&[0.0], &[1.0], &[2.5]], &[0.0, 0.0, 0.0]);
        let th = Hyperparameters::isotropic(1.0, 1.0, 1, 0.1).unwrap();
        let gp = fit(Arc::clone(&d), &th).unwrap();
        assert!(gp.alpha().iter().all(|a| *a == 0.0));
        // Only the log-determinant part remains: ½ tr(−K⁻¹ ∂K).
        let (_, g) = lml_gradient(&d, &th).unwrap();
        let fd = finite_difference(&d, &th);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn variance_within_prior(seed in 0u64..1000, x0 in -4.0f64..4.0, x1 in -4.0f64..4.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = random_set(&mut rng, 6, 2);
                let th = Hyperparameters::new(1.7, vec![0.6, 1.2], 1e-4).unwrap();
                let gp = fit(d, &th).unwrap();
                let p = gp.predict(&[x0, x1]).unwrap();
                prop_assert!(p.variance >= 0.0 && p.variance <= 1.7);
            }

            #[test]
            fn permutation_invariance(seed in 0u64..1000, x0 in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = random_set(&mut rng, 7, 1);
                let th = Hyperparameters::isotropic(1.0, 0.8, 1, 1e-3).unwrap();
                let gp = fit(Arc::clone(&d), &th).unwrap();
                let mut rows: Vec<Vec<f64>> = d.points().map(|p| p.to_vec()).collect();
                let mut vals = d.values().to_vec();
                rows.reverse();
                vals.reverse();
                rows.swap(0, 3);
                vals.swap(0, 3);
                let d2 = Arc::new(TrainingSet::from_rows(&rows, &vals).unwrap());
                let gp2 = fit(d2, &th).unwrap();
                let (a, b) = (gp.predict(&[x0]).unwrap(), gp2.predict(&[x0]).unwrap());
                prop_assert!((a.mean - b.mean).abs() < 1e-10);
                prop_assert!((a.variance - b.variance).abs() < 1e-10);
            }

            #[test]
            fn kernel_matrix_is_psd(seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = random_set(&mut rng, 9, 2);
                let th = Hyperparameters::new(1.0, vec![0.5, 0.9], 0.0).unwrap();
                let k = kernel_matrix(&d, &th);
                let m = nalgebra::DMatrix::from_row_slice(9, 9, &k);
                prop_assert!((m.clone() - m.transpose()).abs().max() == 0.0);
                let eig = m.symmetric_eigenvalues();
                prop_assert!(eig.iter().all(|e| *e >= -1e-10));
            }
        }
    }
}
