//! Sequential Monte Carlo with adaptive likelihood tempering.
//!
//! Particles start from the prior and move through bridges
//! `p_β(x) ∝ p(x)·exp(β·ℓ(x))`. Each stage picks the next `β` by bisection so
//! the reweighted ensemble keeps a fixed fraction of its effective sample
//! size, resamples systematically, then applies random-walk Metropolis moves
//! with a proposal scaled from the particle covariance.
//!
//! Every particle draws from its own stream keyed by `(seed, stage, index)`,
//! so results do not depend on the thread count.

use crate::linalg::cholesky_in_place;
use crate::rng::{stream, StreamRng};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Prior density with a sampler.
pub trait Prior: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]);
}

/// Weighted particles, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    particles: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble, normalizing `weights` to sum to one.
    pub fn new(dim: usize, particles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || particles.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * weights.len(),
                found: particles.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::Domain("ensemble needs at least one particle".into()));
        }
        if particles.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("particle coordinates contain NaN".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(ParticleEnsemble { dim, particles, weights })
    }

    pub fn uniform(dim: usize, particles: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { particles.len() / dim };
        Self::new(dim, particles, vec![1.0; n])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("ragged particle rows".into()));
        }
        Self::uniform(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinate `k` of every particle.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        self.particles().map(|p| p[k]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.particles().zip(&self.weights) {
            for (mk, pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Weighted population covariance, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for (p, w) in self.particles().zip(&self.weights) {
            for i in 0..d {
                let di = p[i] - m[i];
                for j in 0..=i {
                    c[i * d + j] += w * di * (p[j] - m[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                c[j * d + i] = c[i * d + j];
            }
        }
        c
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }
}

/// Effective sample size `1 / Σ wᵢ²` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Indices chosen by systematic resampling with offset `u ∈ [0, 1)`.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let target = (i as f64 + u) / n as f64;
        while cumulative < target && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    out
}

/// Equal-weight ensemble drawn by systematic resampling.
pub fn systematic_resample(ensemble: &ParticleEnsemble, seed: u64) -> ParticleEnsemble {
    let u: f64 = stream(seed, &[0x5253]).random();
    resample_with(ensemble, &systematic_indices(&ensemble.weights, u))
}

fn resample_with(ensemble: &ParticleEnsemble, idx: &[usize]) -> ParticleEnsemble {
    let particles = idx.iter().flat_map(|&i| ensemble.particle(i).iter().copied()).collect();
    ParticleEnsemble {
        dim: ensemble.dim,
        particles,
        weights: vec![1.0 / idx.len() as f64; idx.len()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub n_rejuvenation: usize,
    pub ess_threshold: f64,
    pub target_acceptance: f64,
    pub seed: u64,
    pub max_stages: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            n_particles: 2000,
            n_rejuvenation: 25,
            ess_threshold: 0.5,
            target_acceptance: 0.3,
            seed: 0,
            max_stages: 500,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("n_particles must be at least 2".into()));
        }
        if self.n_rejuvenation == 0 {
            return Err(Error::Config("n_rejuvenation must be at least 1".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold < 1.0) {
            return Err(Error::Config("ess_threshold must lie in (0,1)".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0,1)".into()));
        }
        if self.max_stages == 0 {
            return Err(Error::Config("max_stages must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcOutput {
    pub ensemble: ParticleEnsemble,
    /// Tempering exponents after each stage; the last is exactly 1.
    pub betas: Vec<f64>,
    /// Mean Metropolis acceptance per stage.
    pub acceptance_rates: Vec<f64>,
    pub likelihood_calls: usize,
}

// Normalized weights exp(δ·ℓ) and their ESS; −∞ log-likelihoods get zero weight.
fn incremental_weights(loglik: &[f64], delta: f64) -> (Vec<f64>, f64) {
    let max = loglik
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = loglik
        .iter()
        .map(|v| if v.is_finite() { (delta * (v - max)).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let e = ess(&w);
    (w, e)
}

fn next_delta(loglik: &[f64], remaining: f64, target: f64) -> f64 {
    if incremental_weights(loglik, remaining).1 >= target {
        return remaining;
    }
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if incremental_weights(loglik, mid).1 >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    if lo > 0.0 {
        lo
    } else {
        hi
    }
}

struct Walker {
    x: Vec<f64>,
    log_prior: f64,
    loglik: f64,
    accepted: usize,
    calls: usize,
}

/// Runs tempered SMC from the prior to `prior(x)·exp(log_likelihood(x))`.
pub fn run_smc<P, L>(prior: &P, log_likelihood: L, cfg: &SmcConfig) -> Result<SmcOutput>
where
    P: Prior + ?Sized,
    L: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let d = prior.dim();
    let n = cfg.n_particles;
    let eval = |x: &[f64]| -> Result<f64> {
        let v = log_likelihood(x)?;
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::DegenerateEnsemble(format!("log-likelihood returned {v}")));
        }
        Ok(v)
    };
    let mut walkers: Vec<Walker> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, &[0, i as u64]);
            let mut x = vec![0.0; d];
            prior.sample_into(&mut rng, &mut x);
            let loglik = eval(&x)?;
            Ok(Walker {
                log_prior: prior.log_density(&x),
                x,
                loglik,
                accepted: 0,
                calls: 1,
            })
        })
        .collect::<Result<_>>()?;
    let mut calls = n;
    let mut beta = 0.0;
    let mut betas = Vec::new();
    let mut acceptance_rates = Vec::new();
    let mut scale = 1.0;
    let mut stage = 0u64;
    while beta < 1.0 {
        stage += 1;
        if stage as usize > cfg.max_stages {
            return Err(Error::DegenerateEnsemble(format!(
                "tempering did not reach beta = 1 within {} stages (beta = {beta})",
                cfg.max_stages
            )));
        }
        let loglik: Vec<f64> = walkers.iter().map(|w| w.loglik).collect();
        let finite = loglik.iter().filter(|v| v.is_finite()).count();
        if finite < 2 {
            return Err(Error::DegenerateEnsemble(format!(
                "only {finite} particles have finite likelihood at stage {stage}"
            )));
        }
        let delta = next_delta(&loglik, 1.0 - beta, cfg.ess_threshold * finite as f64);
        beta = if delta >= 1.0 - beta { 1.0 } else { beta + delta };
        betas.push(beta);
        let (weights, stage_ess) = incremental_weights(&loglik, delta);
        if stage_ess < 2.0 {
            return Err(Error::DegenerateEnsemble(format!(
                "effective sample size {stage_ess:.3} at stage {stage}"
            )));
        }
        let u: f64 = stream(cfg.seed, &[stage, u64::MAX]).random();
        let idx = systematic_indices(&weights, u);
        let mut resampled: Vec<Walker> = idx
            .iter()
            .map(|&i| Walker {
                x: walkers[i].x.clone(),
                log_prior: walkers[i].log_prior,
                loglik: walkers[i].loglik,
                accepted: 0,
                calls: 0,
            })
            .collect();
        let chol = proposal_factor(&resampled, d, scale)?;
        let b = beta;
        resampled.par_iter_mut().enumerate().try_for_each(|(i, w)| -> Result<()> {
            let mut rng = stream(cfg.seed, &[stage, i as u64]);
            let mut z = vec![0.0; d];
            let mut y = vec![0.0; d];
            for _ in 0..cfg.n_rejuvenation {
                for zk in z.iter_mut() {
                    *zk = rng.sample(StandardNormal);
                }
                for r in 0..d {
                    y[r] = w.x[r] + (0..=r).map(|c| chol[r * d + c] * z[c]).sum::<f64>();
                }
                let lp = prior.log_density(&y);
                let u: f64 = rng.random();
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let ll = eval(&y)?;
                w.calls += 1;
                let log_ratio = lp + b * ll - w.log_prior - b * w.loglik;
                if u.ln() < log_ratio {
                    w.x.copy_from_slice(&y);
                    w.log_prior = lp;
                    w.loglik = ll;
                    w.accepted += 1;
                }
            }
            Ok(())
        })?;
        let accepted: usize = resampled.iter().map(|w| w.accepted).sum();
        calls += resampled.iter().map(|w| w.calls).sum::<usize>();
        let rate = accepted as f64 / (n * cfg.n_rejuvenation) as f64;
        acceptance_rates.push(rate);
        scale = (scale * (2.0 * (rate - cfg.target_acceptance)).exp()).clamp(1e-3, 10.0);
        walkers = resampled;
    }
    let particles = walkers.iter().flat_map(|w| w.x.iter().copied()).collect();
    Ok(SmcOutput {
        ensemble: ParticleEnsemble::uniform(d, particles)?,
        betas,
        acceptance_rates,
        likelihood_calls: calls,
    })
}

// Cholesky factor of (2.38²/d)·scale·Cov, lightly regularized.
fn proposal_factor(walkers: &[Walker], d: usize, scale: f64) -> Result<Vec<f64>> {
    let n = walkers.len() as f64;
    let mut mean = vec![0.0; d];
    for w in walkers {
        for (m, x) in mean.iter_mut().zip(&w.x) {
            *m += x / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for w in walkers {
        for i in 0..d {
            let di = w.x[i] - mean[i];
            for j in 0..=i {
                cov[i * d + j] += di * (w.x[j] - mean[j]) / n;
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::DegenerateEnsemble("particle covariance collapsed".into()));
    }
    let factor = 2.38 * 2.38 / d as f64 * scale;
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            a[i * d + j] = factor * cov[i * d + j];
            a[j * d + i] = a[i * d + j];
        }
        a[i * d + i] += factor * 1e-10 * trace / d as f64;
    }
    if !cholesky_in_place(&mut a, d) {
        return Err(Error::DegenerateEnsemble("proposal covariance is not positive definite".into()));
    }
    Ok(a)
}
