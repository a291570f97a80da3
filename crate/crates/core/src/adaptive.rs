//! Adaptive training of the likelihood surrogate.
//!
//! Starting from forward-model evaluations at prior draws, each iteration fits
//! the surrogate, runs SMC on the surrogate posterior, and spends the next
//! batch of solver calls at points drawn from that posterior. The loop stops
//! once the largest marginal Cauchy–Schwarz divergence between consecutive
//! posterior ensembles falls below `alpha_tol`.

use crate::bounded::{update_bound, upper_bound_estimate, EstimatorMode, FitConfig, LikelihoodEstimator};
use crate::diagnostics::{gaussian_kl, max_marginal_cs, moments_from_ensemble};
use crate::gp::{Hyperparameters, TrainingSet};
use crate::models::InverseProblem;
use crate::rng::{derive_seed, stream};
use crate::smc::{run_smc, ParticleEnsemble, Prior, SmcConfig};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

const INIT_STREAM: u64 = 1;
const FIT_STREAM: u64 = 2;
const SMC_STREAM: u64 = 3;
const SELECT_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    /// Prior draws evaluated before the first fit (`N₀`).
    pub initial_points: usize,
    /// Solver calls per adaptive iteration (`N_ada`).
    pub points_per_iteration: usize,
    pub alpha_tol: f64,
    pub max_iterations: usize,
    pub mode: EstimatorMode,
    pub bound_confidence: f64,
    pub smc: SmcConfig,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            initial_points: 20,
            points_per_iteration: 10,
            alpha_tol: 1e-2,
            max_iterations: 100,
            mode: EstimatorMode::Cgpmap2 { quantile: 0.9 },
            bound_confidence: 0.95,
            smc: SmcConfig::default(),
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_points < 2 {
            return Err(Error::Config("initial_points must be at least 2".into()));
        }
        if self.points_per_iteration == 0 {
            return Err(Error::Config("points_per_iteration must be at least 1".into()));
        }
        if !(self.alpha_tol > 0.0) {
            return Err(Error::Config("alpha_tol must be positive".into()));
        }
        if !(self.bound_confidence > 0.0 && self.bound_confidence < 1.0) {
            return Err(Error::Config("bound_confidence must lie in (0,1)".into()));
        }
        if self.points_per_iteration > self.smc.n_particles {
            return Err(Error::Config("points_per_iteration cannot exceed n_particles".into()));
        }
        self.mode.validate()?;
        self.fit.prior.validate()?;
        self.smc.validate()
    }
}

/// Summary of one fit-and-sample cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub training_size: usize,
    pub solver_calls: usize,
    /// `None` when the problem has no χ² bound.
    pub upper_bound: Option<f64>,
    /// `ln θ_MAP` as `[ln σ_s², ln l₁.., ln σ_f²]`.
    pub map_log_hyper: Vec<f64>,
    pub mean_log_hyper: Vec<f64>,
    pub hyper_acceptance: Option<f64>,
    /// Divergence used by the stopping rule; absent at initialization.
    pub cs_to_previous: Option<f64>,
    /// `KL(true ‖ moment-matched ensemble)` when an analytic posterior exists.
    pub kl_to_truth: Option<f64>,
    pub smc_stages: usize,
    pub surrogate_calls: usize,
    pub new_points: Vec<Vec<f64>>,
    /// Hyperparameter inference share of `wall_seconds`.
    pub fit_seconds: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub problem: String,
    pub mode: EstimatorMode,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    pub training: Arc<TrainingSet>,
    /// Ensemble of the last completed iteration.
    pub final_ensemble: Option<ParticleEnsemble>,
    pub stop: StopReason,
}

impl RunRecord {
    pub fn solver_calls(&self) -> usize {
        self.training.len()
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "problem": self.problem,
            "mode": self.mode,
            "seed": self.seed,
            "stop": self.stop,
            "solver_calls": self.solver_calls(),
            "iterations": self.iterations,
        })
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct AdaptiveFailure {
    pub record: RunRecord,
    pub error: Error,
}

impl fmt::Display for AdaptiveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "adaptive run failed after {} iterations ({} solver calls): {}",
            self.record.iterations.len(),
            self.record.solver_calls(),
            self.error
        )
    }
}

impl std::error::Error for AdaptiveFailure {}

/// Draws `n_new` particles by weight, skipping any within `1e-6` (in
/// lengthscale units) of existing training points or earlier picks. Gives up
/// after `ensemble.len()` draws.
pub fn select_new_points(
    ensemble: &ParticleEnsemble,
    n_new: usize,
    existing: &TrainingSet,
    lengthscales: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = ensemble.dim();
    if lengthscales.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: lengthscales.len(),
        });
    }
    if n_new > ensemble.len() {
        return Err(Error::Config(format!("cannot draw {n_new} points from {} particles", ensemble.len())));
    }
    let mut cumulative = Vec::with_capacity(ensemble.len());
    let mut acc = 0.0;
    for w in ensemble.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let too_close = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            < 1e-12
    };
    let mut rng = stream(seed, &[SELECT_STREAM]);
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(n_new);
    let mut attempts = 0;
    while chosen.len() < n_new {
        if attempts >= ensemble.len() {
            return Err(Error::SelectionExhausted {
                attempts,
                selected: chosen.len(),
                requested: n_new,
            });
        }
        attempts += 1;
        let u: f64 = rng.random::<f64>() * acc;
        let i = cumulative.partition_point(|c| *c <= u).min(ensemble.len() - 1);
        let x = ensemble.particle(i);
        if existing.points().any(|p| too_close(p, x)) || chosen.iter().any(|p| too_close(p, x)) {
            continue;
        }
        chosen.push(x.to_vec());
    }
    Ok(chosen)
}

fn evaluate_batch(problem: &InverseProblem, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.par_iter().map(|x| problem.log_likelihood(x)).collect()
}

fn prior_draws(problem: &InverseProblem, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[INIT_STREAM]);
    (0..count)
        .map(|_| {
            let mut x = vec![0.0; problem.dim()];
            problem.prior.sample_into(&mut rng, &mut x);
            x
        })
        .collect()
}

struct Cycle {
    estimator: LikelihoodEstimator,
    ensemble: ParticleEnsemble,
    record: IterationRecord,
}

// Fit the surrogate on `training` and run SMC on it.
fn fit_and_sample(
    problem: &InverseProblem,
    cfg: &AdaptiveConfig,
    training: &Arc<TrainingSet>,
    iteration: usize,
    warm: Option<&Hyperparameters>,
) -> Result<Cycle> {
    let start = Instant::now();
    let fit_seed = derive_seed(cfg.seed, &[FIT_STREAM, iteration as u64]);
    let (estimator, report) = LikelihoodEstimator::fit(cfg.mode, Arc::clone(training), &cfg.fit, fit_seed, warm)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let smc_cfg = SmcConfig {
        seed: derive_seed(cfg.seed, &[SMC_STREAM, iteration as u64]),
        ..cfg.smc.clone()
    };
    let out = run_smc(&problem.prior, |x| estimator.estimate(x), &smc_cfg)?;
    let kl_to_truth = match &problem.analytic_posterior {
        Some(truth) => Some(match moments_from_ensemble(&out.ensemble) {
            Ok(m) => gaussian_kl(truth, &m)?,
            Err(_) => f64::INFINITY,
        }),
        None => None,
    };
    let record = IterationRecord {
        iteration,
        training_size: training.len(),
        solver_calls: training.len(),
        upper_bound: problem.bounded.then(|| estimator.upper_bound()),
        map_log_hyper: report.map.hyper.to_log(),
        mean_log_hyper: report.mean_log_hyper,
        hyper_acceptance: report.acceptance_rate,
        cs_to_previous: None,
        kl_to_truth,
        smc_stages: out.betas.len(),
        surrogate_calls: out.likelihood_calls,
        new_points: Vec::new(),
        fit_seconds,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Cycle {
        estimator,
        ensemble: out.ensemble,
        record,
    })
}

fn initial_bound(problem: &InverseProblem, cfg: &AdaptiveConfig) -> Result<f64> {
    if problem.bounded {
        upper_bound_estimate(problem.n_obs, cfg.bound_confidence)
    } else {
        Ok(f64::INFINITY)
    }
}

fn build_training(problem: &InverseProblem, points: &[Vec<f64>], values: &[f64], bound: f64) -> Result<TrainingSet> {
    let mut t = TrainingSet::new(problem.dim());
    for (x, v) in points.iter().zip(values) {
        t.push(x, *v)?;
    }
    t.upper_bound = update_bound(bound, values);
    Ok(t)
}

/// Runs the adaptive loop. On failure the partial record travels with the error.
pub fn run_adaptive(problem: &InverseProblem, cfg: &AdaptiveConfig) -> std::result::Result<RunRecord, AdaptiveFailure> {
    run_adaptive_with(problem, cfg, |_| {})
}

/// [`run_adaptive`], calling `on_iteration` after every completed iteration.
pub fn run_adaptive_with(
    problem: &InverseProblem,
    cfg: &AdaptiveConfig,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> std::result::Result<RunRecord, AdaptiveFailure> {
    let mut record = RunRecord {
        problem: problem.name.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        iterations: Vec::new(),
        training: Arc::new(TrainingSet::new(problem.dim())),
        final_ensemble: None,
        stop: StopReason::MaxIterations,
    };
    match adaptive_loop(problem, cfg, &mut record, &mut on_iteration) {
        Ok(()) => Ok(record),
        Err(error) => {
            record.stop = StopReason::Failed(error.to_string());
            Err(AdaptiveFailure { record, error })
        }
    }
}

fn adaptive_loop(
    problem: &InverseProblem,
    cfg: &AdaptiveConfig,
    record: &mut RunRecord,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<()> {
    cfg.validate()?;
    let points = prior_draws(problem, cfg.seed, cfg.initial_points);
    let values = evaluate_batch(problem, &points)?;
    let mut training = build_training(problem, &points, &values, initial_bound(problem, cfg)?)?;
    record.training = Arc::new(training.clone());
    let mut cycle = fit_and_sample(problem, cfg, &record.training, 0, None)?;
    cycle.record.new_points = points;
    on_iteration(&cycle.record);
    record.iterations.push(cycle.record.clone());
    record.final_ensemble = Some(cycle.ensemble.clone());
    for j in 1..=cfg.max_iterations {
        let theta = cycle.estimator.gps()[0].hyperparameters().clone();
        let select_seed = derive_seed(cfg.seed, &[SELECT_STREAM, j as u64]);
        let new = select_new_points(&cycle.ensemble, cfg.points_per_iteration, &training, &theta.lengthscales, select_seed)?;
        let values = evaluate_batch(problem, &new)?;
        for (x, v) in new.iter().zip(&values) {
            training.push(x, *v)?;
        }
        training.upper_bound = update_bound(training.upper_bound, &values);
        record.training = Arc::new(training.clone());
        let warm = Hyperparameters::from_log(&cycle.record.map_log_hyper);
        let next = fit_and_sample(problem, cfg, &record.training, j, Some(&warm))?;
        let cs = max_marginal_cs(&next.ensemble, &cycle.ensemble)?;
        cycle = next;
        cycle.record.cs_to_previous = Some(cs);
        cycle.record.new_points = new;
        on_iteration(&cycle.record);
        record.iterations.push(cycle.record.clone());
        record.final_ensemble = Some(cycle.ensemble.clone());
        if cs <= cfg.alpha_tol {
            record.stop = StopReason::Converged;
            return Ok(());
        }
    }
    record.stop = StopReason::MaxIterations;
    Ok(())
}

/// Surrogate trained only on prior draws, at one solver-call budget.
#[derive(Debug, Clone)]
pub struct BaselinePoint {
    pub solver_calls: usize,
    pub kl_to_truth: Option<f64>,
    pub ensemble: ParticleEnsemble,
}

/// Prior-sampling baseline at each budget in `budgets`. The first
/// `initial_points` draws coincide with the adaptive run's initial design.
pub fn run_prior_baseline(problem: &InverseProblem, cfg: &AdaptiveConfig, budgets: &[usize]) -> Result<Vec<BaselinePoint>> {
    cfg.validate()?;
    let max = budgets.iter().copied().max().unwrap_or(0);
    if budgets.iter().any(|b| *b < 2) {
        return Err(Error::Config("baseline budgets must be at least 2".into()));
    }
    let points = prior_draws(problem, cfg.seed, max.max(cfg.initial_points));
    let values = evaluate_batch(problem, &points[..max])?;
    let bound = initial_bound(problem, cfg)?;
    budgets
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let training = Arc::new(build_training(problem, &points[..b], &values[..b], bound)?);
            let c = fit_and_sample(problem, cfg, &training, 10_000 + i, None)?;
            Ok(BaselinePoint {
                solver_calls: b,
                kl_to_truth: c.record.kl_to_truth,
                ensemble: c.ensemble,
            })
        })
        .collect()
}
