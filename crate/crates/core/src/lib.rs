//! Bounded Gaussian-process surrogates for Bayesian inverse problems.
//!
//! The unnormalized log-likelihood `f(x) = -½‖y_obs − M(x)‖²` of an expensive
//! forward model is replaced by a Gaussian process whose predictive
//! distribution is truncated at a chi-squared based upper bound. Surrogate
//! uncertainty enters the posterior through a quantile of the transformed
//! predictive, and training points are chosen adaptively from Sequential
//! Monte Carlo approximations of the intermediate posteriors.
//!
//! The main entry points are:
//!
//! - [`gp`]: zero-mean squared-exponential GP regression.
//! - [`hyper`]: MAP estimation and HMC sampling of GP hyperparameters.
//! - [`bounded`]: upper-bound estimate, truncated predictive and the
//!   `GPMAP-I` / `CGPMAP-II` / `CFBGP` likelihood estimators.
//! - [`smc`]: adaptive-tempering SMC with Metropolis rejuvenation.
//! - [`diagnostics`]: marginal KDEs, Cauchy–Schwarz and Gaussian KL divergences.
//! - [`models`]: built-in inverse problems (Gaussian benchmark, energy target,
//!   diffusion with a Karhunen–Loève log-normal field).
//! - [`adaptive`]: the adaptive training-point selection loop.
//! - [`experiment`]: configuration-driven runs writing CSV/JSON outputs.
//!
//! ```no_run
//! use bayes_surrogate::adaptive::{run_adaptive, AdaptiveConfig};
//! use bayes_surrogate::bounded::EstimatorMode;
//! use bayes_surrogate::models::gaussian_benchmark;
//!
//! let problem = gaussian_benchmark(2, 1e-2, 7).unwrap();
//! let cfg = AdaptiveConfig { mode: EstimatorMode::Cgpmap2 { quantile: 0.9 }, ..Default::default() };
//! let record = run_adaptive(&problem, &cfg).expect("adaptive run");
//! println!("solver calls: {}", record.solver_calls());
//! ```

pub mod adaptive;
pub mod bounded;
pub mod diagnostics;
mod error;
pub mod experiment;
pub mod gp;
pub mod hyper;
mod linalg;
pub mod models;
pub mod rng;
pub mod smc;
pub mod special;

pub use error::{Error, Result};
