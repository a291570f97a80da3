//! Density diagnostics: marginal KDEs, Cauchy–Schwarz divergence and Gaussian KL.

use crate::linalg::{back_substitute_transpose, cholesky_in_place, forward_substitute};
use crate::rng::stream;
use crate::smc::{systematic_resample, ParticleEnsemble};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::f64::consts::PI;

/// Default cap on KDE components.
pub const KDE_MAX_SAMPLES: usize = 5000;

const SUBSET_SEED: u64 = 0x4b44_455f_5355_4253;

/// Equal-weight Gaussian mixture with a shared bandwidth. Means are kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture1D {
    means: Vec<f64>,
    bandwidth: f64,
}

impl GaussianMixture1D {
    pub fn new(mut means: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::DegenerateSamples("mixture needs at least one component".into()));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::DegenerateSamples(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::DegenerateSamples("mixture means must be finite".into()));
        }
        means.sort_by(f64::total_cmp);
        Ok(GaussianMixture1D { means, bandwidth })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * PI).sqrt() * self.means.len() as f64);
        self.means.iter().map(|m| (-0.5 * ((x - m) / h).powi(2)).exp()).sum::<f64>() * norm
    }
}

/// Silverman-bandwidth KDE of `samples`, keeping at most `max_samples`
/// components chosen by a fixed-seed shuffle.
pub fn kde_1d(samples: &[f64], max_samples: usize) -> Result<GaussianMixture1D> {
    if samples.len() < 2 || max_samples < 2 {
        return Err(Error::DegenerateSamples("KDE needs at least two samples".into()));
    }
    let mut kept = samples.to_vec();
    if kept.len() > max_samples {
        kept.shuffle(&mut stream(SUBSET_SEED, &[samples.len() as u64]));
        kept.truncate(max_samples);
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let h = 1.06 * var.sqrt() * n.powf(-0.2);
    if !(h > 0.0) {
        return Err(Error::DegenerateSamples("all samples are identical".into()));
    }
    GaussianMixture1D::new(kept, h)
}

// ∫ p q dx = mean over pairs of N(μᵢ; μⱼ, h_p² + h_q²), skipping pairs whose
// kernel value is below 1e-17 of the peak.
fn overlap(p: &GaussianMixture1D, q: &GaussianMixture1D) -> f64 {
    let var = p.bandwidth.powi(2) + q.bandwidth.powi(2);
    let norm = 1.0 / (2.0 * PI * var).sqrt();
    let reach = (2.0 * var * 39.0).sqrt();
    let qm = &q.means;
    let total: f64 = p
        .means
        .par_iter()
        .map(|&mi| {
            let lo = qm.partition_point(|&m| m < mi - reach);
            let hi = qm.partition_point(|&m| m <= mi + reach);
            qm[lo..hi].iter().map(|mj| (-0.5 * (mi - mj).powi(2) / var).exp()).sum::<f64>()
        })
        .sum();
    total * norm / (p.means.len() as f64 * q.means.len() as f64)
}

fn canonical_order(p: &GaussianMixture1D, q: &GaussianMixture1D) -> Ordering {
    p.bandwidth
        .total_cmp(&q.bandwidth)
        .then(p.means.len().cmp(&q.means.len()))
        .then_with(|| {
            p.means
                .iter()
                .zip(&q.means)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// `−ln(∫pq / √(∫p² ∫q²))`, in closed form.
pub fn cs_divergence(p: &GaussianMixture1D, q: &GaussianMixture1D) -> f64 {
    let cross = match canonical_order(p, q) {
        Ordering::Greater => overlap(q, p),
        _ => overlap(p, q),
    };
    let d = -cross.ln() + 0.5 * (overlap(p, p).ln() + overlap(q, q).ln());
    d.max(0.0)
}

fn equal_weight(e: &ParticleEnsemble) -> ParticleEnsemble {
    let w0 = 1.0 / e.len() as f64;
    if e.weights().iter().all(|w| (w - w0).abs() <= 1e-15) {
        e.clone()
    } else {
        systematic_resample(e, SUBSET_SEED)
    }
}

/// Cauchy–Schwarz divergence between the KDEs of each coordinate.
pub fn marginal_cs(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (a, b) = (equal_weight(a), equal_weight(b));
    (0..a.dim())
        .map(|k| {
            let p = kde_1d(&a.marginal(k), KDE_MAX_SAMPLES)?;
            let q = kde_1d(&b.marginal(k), KDE_MAX_SAMPLES)?;
            Ok(cs_divergence(&p, &q))
        })
        .collect()
}

/// Largest marginal Cauchy–Schwarz divergence between two ensembles.
pub fn max_marginal_cs(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<f64> {
    Ok(marginal_cs(a, b)?.into_iter().fold(0.0, f64::max))
}

/// Mean and covariance of a Gaussian, with the covariance's Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    chol: Vec<f64>,
}

impl GaussianMoments {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let k = mean.len();
        if covariance.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                found: covariance.len(),
            });
        }
        for i in 0..k {
            for j in 0..i {
                let (a, b) = (covariance[i * k + j], covariance[j * k + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotPositiveDefinite(format!("covariance is not symmetric at ({i},{j})")));
                }
            }
        }
        let mut chol = covariance.clone();
        if !cholesky_in_place(&mut chol, k) {
            return Err(Error::NotPositiveDefinite("covariance has no Cholesky factor".into()));
        }
        Ok(GaussianMoments { mean, covariance, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    fn log_det(&self) -> f64 {
        let k = self.dim();
        2.0 * (0..k).map(|i| self.chol[i * k + i].ln()).sum::<f64>()
    }

    fn solve(&self, b: &mut [f64]) {
        forward_substitute(&self.chol, self.dim(), b);
        back_substitute_transpose(&self.chol, self.dim(), b);
    }
}

/// `KL(p ‖ q)` between two Gaussians.
pub fn gaussian_kl(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    let k = p.dim();
    if q.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: q.dim(),
        });
    }
    // tr(Σq⁻¹ Σp) column by column.
    let mut trace = 0.0;
    let mut col = vec![0.0; k];
    for j in 0..k {
        for i in 0..k {
            col[i] = p.covariance[i * k + j];
        }
        q.solve(&mut col);
        trace += col[j];
    }
    let diff: Vec<f64> = q.mean.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
    let mut sol = diff.clone();
    q.solve(&mut sol);
    let maha: f64 = diff.iter().zip(&sol).map(|(a, b)| a * b).sum();
    Ok((0.5 * (trace + maha - k as f64 + q.log_det() - p.log_det())).max(0.0))
}

/// Weighted mean and population covariance, without definiteness checks.
pub fn weighted_moments(e: &ParticleEnsemble) -> (Vec<f64>, Vec<f64>) {
    (e.mean(), e.covariance())
}

/// Moment-matched Gaussian of an ensemble.
pub fn moments_from_ensemble(e: &ParticleEnsemble) -> Result<GaussianMoments> {
    let (mean, cov) = weighted_moments(e);
    GaussianMoments::new(mean, cov)
}
