//! GP hyperparameter posterior under independent exponential priors.
//!
//! The exponential rates on `σ_s²` and `σ_f²` act on values measured in units
//! of the squared output scale of the training data (its root-mean-square),
//! so the same default rates regularize log-likelihood surrogates whose raw
//! magnitudes range from 1 to 10⁵. Lengthscale rates act on input units.
//!
//! Optimization and sampling run over `φ = ln θ` inside a fixed box; leaving
//! the box or failing to factorize `K` counts as zero density.

use crate::gp::{lml_gradient, Hyperparameters, TrainingSet};
use crate::rng::stream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Exponential prior rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperPrior {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior {
            signal_variance: 0.1,
            lengthscale: 0.1,
            noise_variance: 1.0,
        }
    }
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        if [self.signal_variance, self.lengthscale, self.noise_variance]
            .iter()
            .all(|r| *r > 0.0 && r.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Config(format!("prior rates must be positive: {self:?}")))
        }
    }

    fn rates(&self, dim: usize) -> Vec<f64> {
        let mut r = vec![self.signal_variance];
        r.extend(std::iter::repeat_n(self.lengthscale, dim));
        r.push(self.noise_variance);
        r
    }
}

// Per-component divisor applied before the exponential prior.
fn prior_units(training: &TrainingSet) -> Vec<f64> {
    let c2 = training.output_scale().powi(2);
    let mut u = vec![c2];
    u.extend(std::iter::repeat_n(1.0, training.dim()));
    u.push(c2);
    u
}

/// Box in log-parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LogBox {
    pub fn for_training(training: &TrainingSet) -> Self {
        let ln_c2 = training.output_scale().powi(2).ln();
        let d = training.dim();
        let mut lower = vec![ln_c2 - 10.0];
        let mut upper = vec![ln_c2 + 10.0];
        lower.extend(std::iter::repeat_n(-6.0, d));
        upper.extend(std::iter::repeat_n(6.0, d));
        lower.push(ln_c2 - 23.0);
        upper.push(ln_c2);
        LogBox { lower, upper }
    }

    pub fn contains(&self, phi: &[f64]) -> bool {
        phi.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(p, (lo, hi))| *p >= *lo && *p <= *hi)
    }

    fn clamp(&self, phi: &mut [f64]) {
        for (p, (lo, hi)) in phi.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *p = p.clamp(*lo, *hi);
        }
    }
}

/// Log prior density of `θ` (in `θ`-space), `−∞` outside the support.
pub fn log_prior(theta: &Hyperparameters, training: &TrainingSet, prior: &HyperPrior) -> f64 {
    let values = {
        let mut v = vec![theta.signal_variance];
        v.extend_from_slice(&theta.lengthscales);
        v.push(theta.noise_variance);
        v
    };
    if values.iter().any(|v| !(*v > 0.0)) || !values.iter().all(|v| v.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let rates = prior.rates(training.dim());
    let units = prior_units(training);
    values
        .iter()
        .zip(rates.iter().zip(&units))
        .map(|(v, (r, u))| (r / u).ln() - r * v / u)
        .sum()
}

/// `log p(D | θ) + log p(θ)` in `θ`-space. Non-positive components give `−∞`.
pub fn log_unnorm_posterior(
    theta: &Hyperparameters,
    training: &Arc<TrainingSet>,
    prior: &HyperPrior,
) -> Result<f64> {
    let lp = log_prior(theta, training, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(crate::gp::log_marginal_likelihood(training, theta)? + lp)
}

/// Value and gradient over `φ = ln θ`. With `jacobian`, the density is that of
/// `φ` (adds `Σ φ`); without it, the objective is the `θ`-space posterior
/// expressed in `φ` coordinates.
pub fn log_posterior_in_log_space(
    phi: &[f64],
    training: &Arc<TrainingSet>,
    prior: &HyperPrior,
    jacobian: bool,
) -> Result<(f64, Vec<f64>)> {
    let theta = Hyperparameters::from_log(phi);
    let (lml, mut grad) = lml_gradient(training, &theta)?;
    let rates = prior.rates(training.dim());
    let units = prior_units(training);
    let mut value = lml;
    for (k, p) in phi.iter().enumerate() {
        let scaled = p.exp() / units[k];
        value += (rates[k] / units[k]).ln() - rates[k] * scaled;
        grad[k] -= rates[k] * scaled;
        if jacobian {
            value += p;
            grad[k] += 1.0;
        }
    }
    Ok((value, grad))
}

/// Settings for [`map_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            restarts: 3,
            max_iterations: 300,
            gradient_tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub hyper: Hyperparameters,
    pub log_posterior: f64,
    /// Infinity norm of the box-projected gradient over `φ` at the optimum.
    pub gradient_norm: f64,
    /// Objective at each restart's starting point (`−∞` if it failed).
    pub initial_objectives: Vec<f64>,
    pub failed_restarts: usize,
}

fn projected_gradient(phi: &[f64], grad: &[f64], bounds: &LogBox) -> Vec<f64> {
    // Gradient of the maximized objective; components pushing out of the box vanish.
    phi.iter()
        .zip(grad)
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|((p, g), (lo, hi))| {
            if (*p <= *lo && *g < 0.0) || (*p >= *hi && *g > 0.0) {
                0.0
            } else {
                *g
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Ascent {
    phi: Vec<f64>,
    value: f64,
    gradient_norm: f64,
}

// Projected L-BFGS ascent with backtracking Armijo line search.
fn lbfgs_ascent<F>(mut objective: F, start: Vec<f64>, bounds: &LogBox, cfg: &MapConfig) -> Option<Ascent>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 10;
    let mut phi = start;
    bounds.clamp(&mut phi);
    let (mut value, mut grad) = objective(&phi)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut stalls = 0;
    for iter in 0..cfg.max_iterations {
        let pg = projected_gradient(&phi, &grad, bounds);
        if inf_norm(&pg) <= cfg.gradient_tolerance {
            break;
        }
        // Two-loop recursion on the ascent direction H·pg.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        for (qi, pgi) in q.iter_mut().zip(&pg) {
            if *pgi == 0.0 {
                *qi = 0.0;
            }
        }
        let mut direction = q;
        if dot(&direction, &pg) <= 0.0 {
            s_hist.clear();
            y_hist.clear();
            direction = pg.clone();
        }
        let mut step = if s_hist.is_empty() {
            (1.0 / inf_norm(&direction)).min(1.0)
        } else {
            1.0
        };
        if iter == 0 {
            step = step.min(0.5);
        }
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = phi.iter().zip(&direction).map(|(p, d)| p + step * d).collect();
            bounds.clamp(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&phi).map(|(t, p)| t - p).collect();
            if inf_norm(&moved) == 0.0 {
                break;
            }
            if let Some((v, g)) = objective(&trial) {
                if v >= value + 1e-4 * dot(&grad, &moved) {
                    accepted = Some((trial, v, g, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, v, g, s)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        // y is the change of the descent gradient (−∇ of the maximized objective).
        let y: Vec<f64> = g.iter().zip(&grad).map(|(gn, go)| go - gn).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        if (v - value).abs() <= 1e-15 * value.abs().max(1.0) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        phi = trial;
        value = v;
        grad = g;
        if stalls >= 5 {
            break;
        }
    }
    let gradient_norm = inf_norm(&projected_gradient(&phi, &grad, bounds));
    Some(Ascent {
        phi,
        value,
        gradient_norm,
    })
}

fn input_spread(training: &TrainingSet) -> Vec<f64> {
    let n = training.len() as f64;
    (0..training.dim())
        .map(|k| {
            let mean = training.points().map(|p| p[k]).sum::<f64>() / n;
            let var = training.points().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Maximum a posteriori hyperparameters from `cfg.restarts` starts. The first
/// start is `warm_start` when given; the others are random.
pub fn map_estimate(
    training: &Arc<TrainingSet>,
    prior: &HyperPrior,
    cfg: &MapConfig,
    warm_start: Option<&Hyperparameters>,
) -> Result<MapEstimate> {
    prior.validate()?;
    if cfg.restarts == 0 {
        return Err(Error::Config("map_estimate needs at least one restart".into()));
    }
    if training.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let bounds = LogBox::for_training(training);
    let spread = input_spread(training);
    // Squared distances grow with dimension; √d keeps typical pairs correlated.
    let ln_dim = 0.5 * (training.dim() as f64).ln();
    let ln_c2 = training.output_scale().powi(2).ln();
    let mut rng = stream(cfg.seed, &[0x4d41_50]);
    let objective = |phi: &[f64]| -> Option<(f64, Vec<f64>)> {
        log_posterior_in_log_space(phi, training, prior, false)
            .ok()
            .filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
    };
    let mut best: Option<Ascent> = None;
    let mut initial_objectives = Vec::with_capacity(cfg.restarts);
    let mut failed = 0;
    for r in 0..cfg.restarts {
        let mut start = match (r, warm_start) {
            (0, Some(w)) if w.dim() == training.dim() => w.to_log(),
            _ => {
                let mut s = vec![ln_c2 + rng.random_range(-1.0..1.0)];
                s.extend(spread.iter().map(|sd| sd.ln() + ln_dim + rng.random_range(-1.0..1.0)));
                s.push(ln_c2 + rng.random_range(-16.0..-8.0));
                s
            }
        };
        bounds.clamp(&mut start);
        initial_objectives.push(objective(&start).map(|(v, _)| v).unwrap_or(f64::NEG_INFINITY));
        match lbfgs_ascent(objective, start, &bounds, cfg) {
            Some(a) if best.as_ref().is_none_or(|b| a.value > b.value) => best = Some(a),
            Some(_) => {}
            None => failed += 1,
        }
    }
    let best = best.ok_or(Error::OptimizationFailed(cfg.restarts))?;
    Ok(MapEstimate {
        hyper: Hyperparameters::from_log(&best.phi),
        log_posterior: best.value,
        gradient_norm: best.gradient_norm,
        initial_objectives,
        failed_restarts: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Hmc,
    RandomWalk,
}

/// Settings for [`sample_posterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub warmup: usize,
    pub thin: usize,
    pub leapfrog_steps: usize,
    /// Target acceptance for step-size adaptation during warmup.
    pub target_acceptance: f64,
    pub initial_step_size: f64,
    /// Indices into the log-parameter vector held fixed at the start value.
    pub frozen: Vec<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Hmc,
            warmup: 200,
            thin: 2,
            leapfrog_steps: 10,
            target_acceptance: 0.8,
            initial_step_size: 0.1,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperPosteriorSamples {
    pub draws: Vec<Hyperparameters>,
    /// Post-warmup acceptance rate of the chain.
    pub acceptance_rate: f64,
    pub step_size: f64,
}

struct Target<'a> {
    training: &'a Arc<TrainingSet>,
    prior: &'a HyperPrior,
    bounds: LogBox,
    free: Vec<bool>,
}

impl Target<'_> {
    fn eval(&self, phi: &[f64]) -> Option<(f64, Vec<f64>)> {
        if !self.bounds.contains(phi) {
            return None;
        }
        let (v, mut g) = log_posterior_in_log_space(phi, self.training, self.prior, true).ok()?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        for (gi, free) in g.iter_mut().zip(&self.free) {
            if !free {
                *gi = 0.0;
            }
        }
        Some((v, g))
    }
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_step_bar: f64,
    target: f64,
    m: f64,
}

impl DualAveraging {
    fn new(step: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * step).ln(),
            h_bar: 0.0,
            log_step_bar: 0.0,
            target,
            m: 0.0,
        }
    }

    // Returns the next step size.
    fn update(&mut self, accept_prob: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.m += 1.0;
        let w = 1.0 / (self.m + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        let log_step = self.mu - self.m.sqrt() / GAMMA * self.h_bar;
        let eta = self.m.powf(-KAPPA);
        self.log_step_bar = eta * log_step + (1.0 - eta) * self.log_step_bar;
        log_step.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

struct State {
    phi: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

fn hmc_step<R: Rng>(target: &Target<'_>, state: &mut State, step: f64, n_leapfrog: usize, rng: &mut R) -> f64 {
    let mut momentum: Vec<f64> = target
        .free
        .iter()
        .map(|f| if *f { rng.sample(StandardNormal) } else { 0.0 })
        .collect();
    let kinetic0 = 0.5 * dot(&momentum, &momentum);
    let mut phi = state.phi.clone();
    let mut grad = state.grad.clone();
    let mut value = state.value;
    for (p, g) in momentum.iter_mut().zip(&grad) {
        *p += 0.5 * step * g;
    }
    for l in 0..n_leapfrog {
        for (x, p) in phi.iter_mut().zip(&momentum) {
            *x += step * p;
        }
        match target.eval(&phi) {
            Some((v, g)) => {
                value = v;
                grad = g;
            }
            None => return 0.0,
        }
        let scale = if l + 1 == n_leapfrog { 0.5 } else { 1.0 };
        for (p, g) in momentum.iter_mut().zip(&grad) {
            *p += scale * step * g;
        }
    }
    let kinetic1 = 0.5 * dot(&momentum, &momentum);
    let log_ratio = value - kinetic1 - state.value + kinetic0;
    let accept = if log_ratio.is_nan() { 0.0 } else { log_ratio.exp().min(1.0) };
    if rng.random::<f64>() < accept {
        *state = State { phi, value, grad };
    }
    accept
}

fn random_walk_step<R: Rng>(target: &Target<'_>, state: &mut State, step: f64, rng: &mut R) -> f64 {
    let proposal: Vec<f64> = state
        .phi
        .iter()
        .zip(&target.free)
        .map(|(x, f)| if *f { x + step * rng.sample::<f64, _>(StandardNormal) } else { *x })
        .collect();
    let Some((v, g)) = target.eval(&proposal) else {
        return 0.0;
    };
    let accept = (v - state.value).exp().min(1.0);
    if rng.random::<f64>() < accept {
        *state = State {
            phi: proposal,
            value: v,
            grad: g,
        };
    }
    accept
}

/// Draws `n_theta` hyperparameter samples from `p(θ | D)` with a single chain
/// started at `start` (or at the MAP estimate when `start` is `None`).
/// Deterministic given `seed`.
pub fn sample_posterior(
    training: &Arc<TrainingSet>,
    prior: &HyperPrior,
    n_theta: usize,
    seed: u64,
    cfg: &SamplerConfig,
    start: Option<&Hyperparameters>,
) -> Result<HyperPosteriorSamples> {
    if n_theta == 0 {
        return Err(Error::Config("n_theta must be at least 1".into()));
    }
    if cfg.thin == 0 || cfg.leapfrog_steps == 0 {
        return Err(Error::Config("thin and leapfrog_steps must be positive".into()));
    }
    let start = match start {
        Some(s) => s.clone(),
        None => {
            map_estimate(
                training,
                prior,
                &MapConfig {
                    seed,
                    ..MapConfig::default()
                },
                None,
            )?
            .hyper
        }
    };
    let n_params = start.n_params();
    let mut bounds = LogBox::for_training(training);
    let mut phi0 = start.to_log();
    bounds.clamp(&mut phi0);
    let mut free = vec![true; n_params];
    for &i in &cfg.frozen {
        if i >= n_params {
            return Err(Error::Config(format!("frozen index {i} out of range")));
        }
        free[i] = false;
        bounds.lower[i] = bounds.lower[i].min(phi0[i]);
        bounds.upper[i] = bounds.upper[i].max(phi0[i]);
    }
    let target = Target {
        training,
        prior,
        bounds,
        free,
    };
    let (value, grad) = target.eval(&phi0).ok_or(Error::CholeskyFailure {
        max_jitter: f64::NAN,
    })?;
    let mut state = State {
        phi: phi0,
        value,
        grad,
    };
    let mut rng = stream(seed, &[0x484d_43]);
    let mut step = cfg.initial_step_size;
    let mut adapt = DualAveraging::new(step, cfg.target_acceptance);
    let do_step = |state: &mut State, step: f64, rng: &mut crate::rng::StreamRng| match cfg.kind {
        SamplerKind::Hmc => hmc_step(&target, state, step, cfg.leapfrog_steps, rng),
        SamplerKind::RandomWalk => random_walk_step(&target, state, step, rng),
    };
    for _ in 0..cfg.warmup {
        let a = do_step(&mut state, step, &mut rng);
        step = adapt.update(a);
    }
    if cfg.warmup > 0 {
        step = adapt.final_step();
    }
    let mut draws = Vec::with_capacity(n_theta);
    let mut accept_sum = 0.0;
    let total = n_theta * cfg.thin;
    for it in 1..=total {
        accept_sum += do_step(&mut state, step, &mut rng);
        if it % cfg.thin == 0 {
            draws.push(Hyperparameters::from_log(&state.phi));
        }
    }
    Ok(HyperPosteriorSamples {
        draws,
        acceptance_rate: accept_sum / total as f64,
        step_size: step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{kernel_matrix, log_marginal_likelihood};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Draw f ~ GP(0, k_θ) at 60 uniform points by Cholesky of K.
    fn synthetic(lengthscale: f64, seed: u64) -> Arc<TrainingSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![10.0 * i as f64 / (n - 1) as f64]).collect();
        let dummy = TrainingSet::from_rows(&rows, &vec![0.0; n]).unwrap();
        let th = Hyperparameters::isotropic(1.0, lengthscale, 1, 0.0).unwrap();
        let mut k = kernel_matrix(&dummy, &th);
        for i in 0..n {
            k[i * n + i] += 1e-6;
        }
        assert!(crate::linalg::cholesky_in_place(&mut k, n));
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let f: Vec<f64> = (0..n).map(|i| (0..=i).map(|j| k[i * n + j] * z[j]).sum()).collect();
        Arc::new(TrainingSet::from_rows(&rows, &f).unwrap())
    }

    #[test]
    fn flat_prior_limit_is_constant_offset() {
        let d = synthetic(1.0, 1);
        let prior = HyperPrior {
            signal_variance: 1e-12,
            lengthscale: 1e-12,
            noise_variance: 1e-12,
        };
        let offsets: Vec<f64> = [(0.5, 0.7, 1e-3), (2.0, 1.5, 1e-2), (1.0, 0.3, 1e-4)]
            .iter()
            .map(|&(s, l, n)| {
                let th = Hyperparameters::isotropic(s, l, 1, n).unwrap();
                log_unnorm_posterior(&th, &d, &prior).unwrap() - log_marginal_likelihood(&d, &th).unwrap()
            })
            .collect();
        for o in &offsets[1..] {
            assert!((o - offsets[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn scalar_posterior_by_hand() {
        let d = Arc::new(TrainingSet::from_rows(&[vec![0.0]], &[-2.0]).unwrap());
        let prior = HyperPrior::default();
        let th = Hyperparameters::isotropic(1.5, 0.8, 1, 0.5).unwrap();
        // c² = 4; v = σ_s² + σ_f² = 2.
        let lml = -0.5 * 4.0 / 2.0 - 0.5 * 2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let lp = (0.1f64 / 4.0).ln() - 0.1 * 1.5 / 4.0 + 0.1f64.ln() - 0.1 * 0.8 + (1.0f64 / 4.0).ln() - 0.5 / 4.0;
        let got = log_unnorm_posterior(&th, &d, &prior).unwrap();
        assert!((got - (lml + lp)).abs() < 1e-12);
    }

    #[test]
    fn zero_component_is_rejected() {
        let d = synthetic(1.0, 2);
        let th = Hyperparameters {
            signal_variance: 1.0,
            lengthscales: vec![1.0],
            noise_variance: 0.0,
        };
        assert_eq!(log_unnorm_posterior(&th, &d, &HyperPrior::default()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_space_gradient_matches_finite_differences() {
        let d = synthetic(1.3, 3);
        let prior = HyperPrior::default();
        let phi = vec![0.2, 0.1, -5.0];
        for jac in [false, true] {
            let (_, g) = log_posterior_in_log_space(&phi, &d, &prior, jac).unwrap();
            for k in 0..3 {
                let h = 1e-5;
                let mut up = phi.clone();
                up[k] += h;
                let mut dn = phi.clone();
                dn[k] -= h;
                let fd = (log_posterior_in_log_space(&up, &d, &prior, jac).unwrap().0
                    - log_posterior_in_log_space(&dn, &d, &prior, jac).unwrap().0)
                    / (2.0 * h);
                assert!((g[k] - fd).abs() < 1e-4 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn map_recovers_lengthscale() {
        let truth = 1.2;
        let d = synthetic(truth, 4);
        let est = map_estimate(&d, &HyperPrior::default(), &MapConfig { restarts: 4, ..Default::default() }, None)
            .unwrap();
        let l = est.hyper.lengthscales[0];
        assert!(l > truth / 2.0 && l < truth * 2.0, "lengthscale {l}");
        assert!(est.gradient_norm <= 1e-5, "gradient norm {}", est.gradient_norm);
        for v in &est.initial_objectives {
            assert!(est.log_posterior >= *v);
        }
    }

    #[test]
    fn warm_start_is_used() {
        let d = synthetic(0.8, 5);
        let first = map_estimate(&d, &HyperPrior::default(), &MapConfig::default(), None).unwrap();
        let again = map_estimate(
            &d,
            &HyperPrior::default(),
            &MapConfig { restarts: 1, ..Default::default() },
            Some(&first.hyper),
        )
        .unwrap();
        assert!((again.log_posterior - first.log_posterior).abs() < 1e-6);
    }

    #[test]
    fn single_draw_near_map() {
        let d = synthetic(1.0, 6);
        let prior = HyperPrior::default();
        let map = map_estimate(&d, &prior, &MapConfig::default(), None).unwrap();
        let s = sample_posterior(&d, &prior, 1, 9, &SamplerConfig::default(), Some(&map.hyper)).unwrap();
        assert_eq!(s.draws.len(), 1);
        let ratio = s.draws[0].lengthscales[0] / map.hyper.lengthscales[0];
        assert!(ratio > 0.5 && ratio < 2.0);
    }

    #[test]
    fn sampling_is_deterministic_and_positive() {
        let d = synthetic(1.0, 7);
        let prior = HyperPrior::default();
        let cfg = SamplerConfig::default();
        let a = sample_posterior(&d, &prior, 20, 11, &cfg, None).unwrap();
        let b = sample_posterior(&d, &prior, 20, 11, &cfg, None).unwrap();
        assert_eq!(a.draws, b.draws);
        for th in &a.draws {
            assert!(th.signal_variance > 0.0 && th.noise_variance > 0.0 && th.lengthscales[0] > 0.0);
        }
        assert!(a.acceptance_rate > 0.1 && a.acceptance_rate < 0.95, "acceptance {}", a.acceptance_rate);
    }

    fn ks_against_grid(samples: &[f64], grid: &[f64], log_density: &[f64]) -> f64 {
        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = log_density.iter().map(|v| (v - max).exp()).collect();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
        }
        let total = cdf[grid.len() - 1];
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, x) in sorted.iter().enumerate() {
            let j = grid.partition_point(|g| g < x).clamp(1, grid.len() - 1);
            let t = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
            let f = (cdf[j - 1] + t * (cdf[j] - cdf[j - 1])) / total;
            ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
        }
        ks
    }

    #[test]
    fn one_dimensional_posterior_matches_quadrature() {
        let d = synthetic(1.0, 8);
        let prior = HyperPrior::default();
        let start = Hyperparameters::isotropic(1.0, 1.0, 1, 1e-4).unwrap();
        for kind in [SamplerKind::Hmc, SamplerKind::RandomWalk] {
            let cfg = SamplerConfig {
                kind,
                frozen: vec![1, 2],
                thin: 3,
                target_acceptance: if kind == SamplerKind::Hmc { 0.8 } else { 0.4 },
                ..Default::default()
            };
            let s = sample_posterior(&d, &prior, 400, 21, &cfg, Some(&start)).unwrap();
            let phis: Vec<f64> = s.draws.iter().map(|t| t.signal_variance.ln()).collect();
            // Density of φ₀ = ln σ_s² with the Jacobian, on a fine grid.
            let grid: Vec<f64> = (0..=2000).map(|i| -4.0 + 8.0 * i as f64 / 2000.0).collect();
            let logd: Vec<f64> = grid
                .iter()
                .map(|g| {
                    let mut phi = start.to_log();
                    phi[0] = *g;
                    log_posterior_in_log_space(&phi, &d, &prior, true).unwrap().0
                })
                .collect();
            let ks = ks_against_grid(&phis, &grid, &logd);
            assert!(ks < 0.1, "{kind:?}: KS distance {ks}");
        }
    }
}
