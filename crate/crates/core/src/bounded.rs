//! Bounded likelihood estimators.
//!
//! With Gaussian observation noise the unnormalized log-likelihood is bounded
//! above, and the bound itself is estimated from the χ² law of the residual
//! sum of squares. Conditioning the GP surrogate on that bound at the
//! prediction point gives a truncated-normal predictive for the
//! log-likelihood; the estimators here return a quantile of the implied
//! likelihood distribution, in log-space throughout.

use crate::gp::{FittedGP, Hyperparameters, TrainingSet};
use crate::hyper::{map_estimate, sample_posterior, HyperPrior, MapConfig, MapEstimate, SamplerConfig};
use crate::special::{chi2_quantile, find_root, log_norm_cdf, log_norm_pdf, norm_quantile_from_log, Interval};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Conservative upper bound `b̂` on the log-likelihood: `Pr(b ≤ b̂) = confidence`
/// when `b = −γ/2` with `γ ~ χ²(n_obs)`.
pub fn upper_bound_estimate(n_obs: usize, confidence: f64) -> Result<f64> {
    if n_obs == 0 {
        return Err(Error::Domain("upper bound needs at least one observation".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence must lie in (0,1), got {confidence}")));
    }
    let dof = u32::try_from(n_obs).map_err(|_| Error::Domain("n_obs too large".into()))?;
    Ok(-0.5 * chi2_quantile(1.0 - confidence, dof)?)
}

/// Raises `bound` to the largest observed value when one exceeds it.
pub fn update_bound(bound: f64, values: &[f64]) -> f64 {
    values.iter().copied().fold(bound, f64::max)
}

/// Normal `N(m, s²)` truncated to `(−∞, b]`. `s = 0` is a point mass at `min(m, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    location: f64,
    scale: f64,
    upper: f64,
}

impl TruncatedNormal {
    pub fn new(location: f64, scale: f64, upper: f64) -> Result<Self> {
        if !location.is_finite() || !(scale >= 0.0) || !scale.is_finite() || upper.is_nan() {
            return Err(Error::Domain(format!(
                "truncated normal needs finite m, s ≥ 0 and b, got ({location}, {scale}, {upper})"
            )));
        }
        Ok(TruncatedNormal { location, scale, upper })
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn is_point_mass(&self) -> bool {
        self.scale == 0.0
    }

    fn beta(&self) -> f64 {
        (self.upper - self.location) / self.scale
    }

    // Inverse Mills ratio φ(β)/Φ(β).
    fn mills(&self) -> f64 {
        let b = self.beta();
        (log_norm_pdf(b) - log_norm_cdf(b)).exp()
    }

    pub fn mean(&self) -> f64 {
        if self.is_point_mass() {
            return self.location.min(self.upper);
        }
        if self.upper == f64::INFINITY {
            return self.location;
        }
        (self.location - self.scale * self.mills()).min(self.upper)
    }

    pub fn variance(&self) -> f64 {
        if self.is_point_mass() {
            return 0.0;
        }
        let s2 = self.scale * self.scale;
        if self.upper == f64::INFINITY {
            return s2;
        }
        let b = self.beta();
        let ratio = if b < -35.0 {
            let u = 1.0 / (b * b);
            u * (1.0 - u * (6.0 - u * (50.0 - 518.0 * u)))
        } else {
            let l = self.mills();
            1.0 - b * l - l * l
        };
        (s2 * ratio).clamp(0.0, s2)
    }

    /// `ln Pr(Y ≤ y)`; zero at and above `b`.
    pub fn log_cdf(&self, y: f64) -> f64 {
        if y >= self.upper {
            return 0.0;
        }
        if self.is_point_mass() {
            return if y >= self.location { 0.0 } else { f64::NEG_INFINITY };
        }
        let z = (y - self.location) / self.scale;
        (log_norm_cdf(z) - log_norm_cdf(self.beta())).min(0.0)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.log_cdf(y).exp()
    }

    /// Quantile function on `(0, 1)`, never above `b`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {q}")));
        }
        if self.is_point_mass() {
            return Ok(self.location.min(self.upper));
        }
        let z = norm_quantile_from_log(q.ln() + log_norm_cdf(self.beta()))?;
        Ok((self.location + self.scale * z).min(self.upper))
    }
}

/// Predictive of `log L(x)` conditioned on the single virtual observation
/// `log L(x) ≤ b`.
pub fn constrained_predict(gp: &FittedGP, x: &[f64], bound: f64) -> Result<TruncatedNormal> {
    let p = gp.predict(x)?;
    // Round the scale down so that scale² never exceeds the GP variance.
    let mut scale = p.std_dev();
    if scale * scale > p.variance {
        scale = scale.next_down();
    }
    TruncatedNormal::new(p.mean, scale, bound)
}

/// `ln F_g⁻¹(q)` for a single truncated-normal component.
pub fn inverse_cdf_map(q: f64, m: f64, s: f64, bound: f64) -> Result<f64> {
    TruncatedNormal::new(m, s, bound)?.quantile(q)
}

/// Equal-weight mixture of truncated normals with a common upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMixture {
    components: Vec<TruncatedNormal>,
}

impl TruncatedMixture {
    pub fn new(components: Vec<TruncatedNormal>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        Ok(TruncatedMixture { components })
    }

    pub fn components(&self) -> &[TruncatedNormal] {
        &self.components
    }

    fn upper(&self) -> f64 {
        self.components.iter().map(|c| c.upper()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mixture CDF at `ln g`; domain error above the bound.
    pub fn cdf(&self, log_g: f64) -> Result<f64> {
        if log_g > self.upper() {
            return Err(Error::Domain(format!("ln g = {log_g} exceeds the bound {}", self.upper())));
        }
        let n = self.components.len() as f64;
        Ok(self.components.iter().map(|c| c.cdf(log_g)).sum::<f64>() / n)
    }

    /// Root of `cdf(ln g) = q`, bracketed by the component quantiles.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if self.components.len() == 1 {
            return self.components[0].quantile(q);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.components {
            let v = c.quantile(q)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo <= 1e-10 {
            return Ok(0.5 * (lo + hi));
        }
        let n = self.components.len() as f64;
        let f = |y: f64| self.components.iter().map(|c| c.cdf(y)).sum::<f64>() / n - q;
        find_root(f, Interval::new(lo, hi)?, 1e-10)
    }
}

/// Which summary of the surrogate stands in for the log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorMode {
    /// Unconstrained predictive mean under MAP hyperparameters.
    Gpmap1,
    /// Quantile of the bound-constrained predictive under MAP hyperparameters.
    Cgpmap2 { quantile: f64 },
    /// Quantile of the constrained predictive averaged over `n_theta` posterior draws.
    Cfbgp { quantile: f64, n_theta: usize },
}

impl EstimatorMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorMode::Gpmap1 => Ok(()),
            EstimatorMode::Cgpmap2 { quantile } | EstimatorMode::Cfbgp { quantile, .. }
                if !(quantile > 0.0 && quantile < 1.0) =>
            {
                Err(Error::Config(format!("estimator quantile must lie in (0,1), got {quantile}")))
            }
            EstimatorMode::Cfbgp { n_theta: 0, .. } => Err(Error::Config("n_theta must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::Gpmap1 => "gpmap1",
            EstimatorMode::Cgpmap2 { .. } => "cgpmap2",
            EstimatorMode::Cfbgp { .. } => "cfbgp",
        }
    }

    /// Parses `gpmap1`, `cgpmap2` or `cfbgp` with the given settings.
    pub fn from_name(name: &str, quantile: f64, n_theta: usize) -> Result<Self> {
        let mode = match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gpmap1" | "gpmapi" => EstimatorMode::Gpmap1,
            "cgpmap2" | "cgpmapii" => EstimatorMode::Cgpmap2 { quantile },
            "cfbgp" => EstimatorMode::Cfbgp { quantile, n_theta },
            other => return Err(Error::Config(format!("unknown estimator mode '{other}'"))),
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn uses_bound(&self) -> bool {
        !matches!(self, EstimatorMode::Gpmap1)
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorMode::Gpmap1 => write!(f, "GPMAP-I"),
            EstimatorMode::Cgpmap2 { quantile } => write!(f, "CGPMAP-II(q={quantile})"),
            EstimatorMode::Cfbgp { quantile, n_theta } => write!(f, "CFBGP(q={quantile}, n_theta={n_theta})"),
        }
    }
}

/// Hyperparameter inference settings used by [`LikelihoodEstimator::fit`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub prior: HyperPrior,
    pub map: MapConfig,
    pub sampler: SamplerConfig,
}

/// Hyperparameter summary of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub map: MapEstimate,
    /// Per-component mean of `ln θ` over the GPs in the estimator.
    pub mean_log_hyper: Vec<f64>,
    pub acceptance_rate: Option<f64>,
}

/// Surrogate log-likelihood: one or more fitted GPs sharing a training set,
/// plus the current upper bound. Immutable once built.
#[derive(Debug, Clone)]
pub struct LikelihoodEstimator {
    mode: EstimatorMode,
    gps: Vec<FittedGP>,
    upper_bound: f64,
}

impl LikelihoodEstimator {
    pub fn new(mode: EstimatorMode, gps: Vec<FittedGP>, upper_bound: f64) -> Result<Self> {
        mode.validate()?;
        let expected = match mode {
            EstimatorMode::Cfbgp { n_theta, .. } => n_theta,
            _ => 1,
        };
        if gps.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: gps.len(),
            });
        }
        let training = gps[0].training();
        if gps.iter().any(|g| !Arc::ptr_eq(g.training(), training)) {
            return Err(Error::Domain("all GPs must share one training set".into()));
        }
        if mode.uses_bound() && upper_bound < training.max_value() {
            return Err(Error::Domain(format!(
                "bound {upper_bound} lies below the largest training value {}",
                training.max_value()
            )));
        }
        Ok(LikelihoodEstimator { mode, gps, upper_bound })
    }

    /// MAP fit (and posterior sampling for CFBGP) on `training`, with the
    /// bound taken from `training.upper_bound`.
    pub fn fit(
        mode: EstimatorMode,
        training: Arc<TrainingSet>,
        cfg: &FitConfig,
        seed: u64,
        warm_start: Option<&Hyperparameters>,
    ) -> Result<(Self, FitReport)> {
        mode.validate()?;
        let map_cfg = MapConfig { seed, ..cfg.map.clone() };
        let map = map_estimate(&training, &cfg.prior, &map_cfg, warm_start)?;
        let (draws, acceptance_rate) = match mode {
            EstimatorMode::Cfbgp { n_theta, .. } => {
                let s = sample_posterior(&training, &cfg.prior, n_theta, seed, &cfg.sampler, Some(&map.hyper))?;
                (s.draws, Some(s.acceptance_rate))
            }
            _ => (vec![map.hyper.clone()], None),
        };
        let gps = draws
            .iter()
            .map(|th| crate::gp::fit(Arc::clone(&training), th))
            .collect::<Result<Vec<_>>>()?;
        let n = draws.len() as f64;
        let mut mean_log_hyper = vec![0.0; map.hyper.n_params()];
        for th in &draws {
            for (m, v) in mean_log_hyper.iter_mut().zip(th.to_log()) {
                *m += v / n;
            }
        }
        let bound = update_bound(training.upper_bound, training.values());
        let est = LikelihoodEstimator::new(mode, gps, bound)?;
        Ok((
            est,
            FitReport {
                map,
                mean_log_hyper,
                acceptance_rate,
            },
        ))
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn gps(&self) -> &[FittedGP] {
        &self.gps
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn training(&self) -> &Arc<TrainingSet> {
        self.gps[0].training()
    }

    /// Bound-constrained predictive mixture at `x`.
    pub fn mixture_at(&self, x: &[f64]) -> Result<TruncatedMixture> {
        let components = self
            .gps
            .iter()
            .map(|gp| constrained_predict(gp, x, self.upper_bound))
            .collect::<Result<Vec<_>>>()?;
        TruncatedMixture::new(components)
    }

    /// Surrogate log-likelihood at `x`.
    pub fn estimate(&self, x: &[f64]) -> Result<f64> {
        match self.mode {
            EstimatorMode::Gpmap1 => self.gps[0].predict_mean(x),
            EstimatorMode::Cgpmap2 { quantile } => constrained_predict(&self.gps[0], x, self.upper_bound)?.quantile(quantile),
            EstimatorMode::Cfbgp { quantile, .. } => self.mixture_at(x)?.quantile(quantile),
        }
    }
}

/// Mixture CDF of `ln g` at `x`, averaged over the estimator's GPs.
pub fn cdf_g(log_g: f64, x: &[f64], est: &LikelihoodEstimator) -> Result<f64> {
    est.mixture_at(x)?.cdf(log_g)
}

/// `ln F_g⁻¹(q)` at `x` for the estimator's GP mixture.
pub fn inverse_cdf_mixture(q: f64, x: &[f64], est: &LikelihoodEstimator) -> Result<f64> {
    est.mixture_at(x)?.quantile(q)
}

pub fn estimate_log_likelihood(x: &[f64], est: &LikelihoodEstimator) -> Result<f64> {
    est.estimate(x)
}
