//! Built-in inverse problems.

mod diffusion;
mod kle;

pub use diffusion::{
    diffusion_problem, realize_field, solve_diffusion, solve_diffusion_with, synthesize_observations, write_grid_csv, DiffusionGrid,
    DiffusionModel, DiffusionSetup, Observations,
};
pub use kle::{build_kle, node_coordinates, KLExpansion};

use crate::diagnostics::GaussianMoments;
use crate::rng::{stream, StreamRng};
use crate::smc::Prior;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// An expensive log-likelihood: each call counts as one solver call.
pub trait LogLikelihood: Send + Sync {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind {
    StandardNormal(usize),
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl Prior for PriorKind {
    fn dim(&self) -> usize {
        match self {
            PriorKind::StandardNormal(d) => *d,
            PriorKind::UniformBox { lower, .. } => lower.len(),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            PriorKind::StandardNormal(d) => {
                -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * *d as f64 * (2.0 * PI).ln()
            }
            PriorKind::UniformBox { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| v >= l && v <= u);
                if inside {
                    -lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        match self {
            PriorKind::StandardNormal(_) => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            PriorKind::UniformBox { lower, upper } => {
                for ((v, l), u) in out.iter_mut().zip(lower).zip(upper) {
                    *v = rng.random_range(*l..=*u);
                }
            }
        }
    }
}

/// Prior, expensive log-likelihood and the metadata the estimators need.
#[derive(Clone)]
pub struct InverseProblem {
    pub name: String,
    pub prior: PriorKind,
    model: Arc<dyn LogLikelihood>,
    /// Number of scalar observations in the misfit.
    pub n_obs: usize,
    /// Whether the χ²-based upper bound applies.
    pub bounded: bool,
    pub analytic_posterior: Option<GaussianMoments>,
}

impl fmt::Debug for InverseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseProblem")
            .field("name", &self.name)
            .field("prior", &self.prior)
            .field("n_obs", &self.n_obs)
            .field("bounded", &self.bounded)
            .finish_non_exhaustive()
    }
}

impl InverseProblem {
    pub fn new(name: impl Into<String>, prior: PriorKind, model: Arc<dyn LogLikelihood>, n_obs: usize) -> Result<Self> {
        if model.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                found: model.dim(),
            });
        }
        if n_obs == 0 {
            return Err(Error::Domain("an inverse problem needs at least one observation".into()));
        }
        Ok(InverseProblem {
            name: name.into(),
            prior,
            model,
            n_obs,
            bounded: true,
            analytic_posterior: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        self.model.log_likelihood(x)
    }

    pub fn model(&self) -> &Arc<dyn LogLikelihood> {
        &self.model
    }
}

/// `−‖x − a‖² / (2σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLikelihood {
    pub center: Vec<f64>,
    pub variance: f64,
}

impl LogLikelihood for GaussianLikelihood {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(-x.iter().zip(&self.center).map(|(x, a)| (x - a).powi(2)).sum::<f64>() / (2.0 * self.variance))
    }
}

/// Standard-normal prior with likelihood `N(a, σ²I)` centred on a seeded
/// standard-normal draw `a`; the posterior is `N(a/(1+σ²), σ²/(1+σ²)·I)`.
pub fn gaussian_benchmark(n_x: usize, variance: f64, seed: u64) -> Result<InverseProblem> {
    if n_x == 0 {
        return Err(Error::Domain("benchmark dimension must be positive".into()));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!("likelihood variance must be positive, got {variance}")));
    }
    let mut rng = stream(seed, &[0x4741_5553]);
    let center: Vec<f64> = (0..n_x).map(|_| rng.sample(StandardNormal)).collect();
    let shrink = 1.0 / (1.0 + variance);
    let mut cov = vec![0.0; n_x * n_x];
    for i in 0..n_x {
        cov[i * n_x + i] = variance * shrink;
    }
    let posterior = GaussianMoments::new(center.iter().map(|a| a * shrink).collect(), cov)?;
    let mut p = InverseProblem::new(
        format!("gaussian-{n_x}d"),
        PriorKind::StandardNormal(n_x),
        Arc::new(GaussianLikelihood { center, variance }),
        n_x,
    )?;
    p.analytic_posterior = Some(posterior);
    Ok(p)
}

/// Two-moon ring energy `U(x)`; the likelihood is `exp(−U)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyLikelihood;

impl EnergyLikelihood {
    pub fn energy(x: &[f64]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let ring = 0.5 * ((r - 2.0) / 0.4).powi(2);
        let a = -0.5 * ((x[0] - 2.0) / 0.6).powi(2);
        let b = -0.5 * ((x[0] + 2.0) / 0.6).powi(2);
        let m = a.max(b);
        ring - (m + ((a - m).exp() + (b - m).exp()).ln())
    }
}

impl LogLikelihood for EnergyLikelihood {
    fn dim(&self) -> usize {
        2
    }

    fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(-Self::energy(x))
    }
}

/// Energy target on a uniform `[−5, 5]²` prior, with the upper bound disabled.
pub fn energy_target() -> InverseProblem {
    let mut p = InverseProblem::new(
        "energy",
        PriorKind::UniformBox {
            lower: vec![-5.0; 2],
            upper: vec![5.0; 2],
        },
        Arc::new(EnergyLikelihood),
        1,
    )
    .expect("energy target dimensions are consistent");
    p.bounded = false;
    p
}
