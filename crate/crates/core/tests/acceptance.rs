//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. `ACCEPTANCE_CRITERIA=3,9` restricts the run to a subset.

use bayes_surrogate::adaptive::{run_adaptive, run_prior_baseline, AdaptiveConfig, RunRecord, StopReason};
use bayes_surrogate::bounded::{
    cdf_g, constrained_predict, inverse_cdf_map, inverse_cdf_mixture, upper_bound_estimate, EstimatorMode,
    LikelihoodEstimator, TruncatedMixture, TruncatedNormal,
};
use bayes_surrogate::diagnostics::{cs_divergence, gaussian_kl, max_marginal_cs, GaussianMixture1D, GaussianMoments};
use bayes_surrogate::gp::{fit, FittedGP, Hyperparameters, TrainingSet};
use bayes_surrogate::models::{
    build_kle, diffusion_problem, gaussian_benchmark, node_coordinates, solve_diffusion_with, DiffusionGrid,
    DiffusionSetup, InverseProblem,
};
use bayes_surrogate::rng::stream;
use bayes_surrogate::smc::{run_smc, ParticleEnsemble, SmcConfig};
use bayes_surrogate::Error;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut failures = 0;
    let mut report = |id: &str, title: &str, outcome: Outcome, secs: f64| {
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failures += 1;
        }
        println!("{} [{id}] {title}: {detail} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" });
    };

    let fast: [(u32, &str, fn() -> Outcome); 4] = [
        (4, "SMC conjugate oracle", criterion_4),
        (6, "KLE fidelity on 20x20, l=0.2", criterion_6),
        (7, "PDE solver order", criterion_7),
        (9, "divergence diagnostics", criterion_9),
    ];
    if wanted(3) {
        for (sub, title, f) in [
            ("3a", "inverse-CDF round trip", criterion_3a as fn() -> Outcome),
            ("3b", "CFBGP with identical draws equals CGPMAP-II", criterion_3b),
            ("3c", "consistency limit", criterion_3c),
            ("3d", "constrained variance shrinks", criterion_3d),
            ("3e", "chi-squared upper bound", criterion_3e),
        ] {
            let t = Instant::now();
            report(sub, title, f(), t.elapsed().as_secs_f64());
        }
    }
    for (id, title, f) in fast {
        if wanted(id) {
            let t = Instant::now();
            report(&id.to_string(), title, f(), t.elapsed().as_secs_f64());
        }
    }
    if wanted(1) || wanted(2) {
        let t = Instant::now();
        match gaussian_runs() {
            Ok(g) => {
                let secs = t.elapsed().as_secs_f64();
                if wanted(1) {
                    report("1", "Gaussian benchmark convergence", Ok(criterion_1(&g)), secs);
                }
                if wanted(2) {
                    report("2", "prior-sampling baseline is worse", Ok(criterion_2(&g)), secs);
                }
            }
            Err(e) => {
                for (id, title) in [("1", "Gaussian benchmark convergence"), ("2", "prior-sampling baseline is worse")] {
                    if wanted(id.parse().unwrap()) {
                        report(id, title, Err(e.to_string().into()), t.elapsed().as_secs_f64());
                    }
                }
            }
        }
    }
    if wanted(5) || wanted(8) {
        let t = Instant::now();
        match diffusion_reference() {
            Ok(reference) => {
                if wanted(5) {
                    let t = Instant::now();
                    report("5", "diffusion desk scale", criterion_5(&reference), t.elapsed().as_secs_f64());
                }
                if wanted(8) {
                    let t = Instant::now();
                    report("8", "GPMAP-I pathology observability", criterion_8(&reference), t.elapsed().as_secs_f64());
                }
            }
            Err(e) => report("5/8", "diffusion reference", Err(e.to_string().into()), t.elapsed().as_secs_f64()),
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

// Roughly quadratic 2D data with a known maximum below the bound.
fn toy_gp(theta: &Hyperparameters) -> FittedGP {
    let mut rng = stream(77, &[]);
    let mut t = TrainingSet::new(2);
    for _ in 0..15 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        t.push(&x, -3.0 * (x[0] - 0.5f64).powi(2) - (x[1] + 0.3f64).powi(2) - 1.0).unwrap();
    }
    fit(Arc::new(t), theta).unwrap()
}

fn criterion_3a() -> Outcome {
    let mut rng = stream(301, &[]);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(-1e3..0.0);
        let s = 10f64.powf(rng.random_range(-3.0..2.0));
        let b = m + s * rng.random_range(-4.0..4.0);
        let q = rng.random_range(0.01..0.99);
        let log_g = inverse_cdf_map(q, m, s, b)?;
        let back = TruncatedMixture::new(vec![TruncatedNormal::new(m, s, b)?])?.cdf(log_g)?;
        worst = worst.max((back - q).abs());
    }
    let gp = toy_gp(&Hyperparameters::isotropic(4.0, 1.0, 2, 1e-8)?);
    let est = LikelihoodEstimator::new(EstimatorMode::Cgpmap2 { quantile: 0.9 }, vec![gp], 0.0)?;
    for _ in 0..200 {
        let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let q = rng.random_range(0.01..0.99);
        let log_g = inverse_cdf_mixture(q, &x, &est)?;
        worst = worst.max((cdf_g(log_g, &x, &est)? - q).abs());
    }
    Ok((worst <= 1e-8, format!("max |F(F⁻¹(q)) − q| = {worst:.2e} over 1200 cases, tol 1e-8")))
}

fn criterion_3b() -> Outcome {
    let gp = toy_gp(&Hyperparameters::new(3.0, vec![0.8, 1.4], 1e-6)?);
    let single = LikelihoodEstimator::new(EstimatorMode::Cgpmap2 { quantile: 0.9 }, vec![gp.clone()], -0.5)?;
    let mixed = LikelihoodEstimator::new(
        EstimatorMode::Cfbgp {
            quantile: 0.9,
            n_theta: 10,
        },
        vec![gp; 10],
        -0.5,
    )?;
    let mut rng = stream(302, &[]);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        worst = worst.max((single.estimate(&x)? - mixed.estimate(&x)?).abs());
    }
    Ok((worst <= 1e-8, format!("max difference {worst:.2e} over 500 points, tol 1e-8")))
}

fn criterion_3c() -> Outcome {
    let m = -5.0;
    let mut detail = Vec::new();
    let mut pass = true;
    for s in [1e-1, 1e-2, 1e-3] {
        for b in [0.0, m + 0.5 * s] {
            let dev = (inverse_cdf_map(0.9, m, s, b)? - m).abs();
            pass &= dev <= 3.0 * s;
            detail.push(format!("s={s:e} b={b}: |est−m|/s={:.3}", dev / s));
        }
    }
    Ok((pass, detail.join("; ")))
}

fn criterion_3d() -> Outcome {
    let mut rng = stream(304, &[]);
    let mut violations = 0;
    for _ in 0..1000 {
        let m = rng.random_range(-1e3..0.0);
        let s = 10f64.powf(rng.random_range(-3.0..2.0));
        let b = m + s * rng.random_range(-40.0..10.0);
        let tn = TruncatedNormal::new(m, s, b)?;
        if !(tn.variance() <= s * s) {
            violations += 1;
        }
    }
    let gp = toy_gp(&Hyperparameters::isotropic(4.0, 1.0, 2, 1e-8)?);
    for _ in 0..1000 {
        let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let b = rng.random_range(-3.0..0.0);
        if !(constrained_predict(&gp, &x, b)?.variance() <= gp.predict(&x)?.variance) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations in 2000 instances")))
}

fn criterion_3e() -> Outcome {
    // −½·χ²₀.₀₅(n), 30-digit root of the regularized lower incomplete gamma.
    let oracle = [
        (1, -0.001966070000009761365654734),
        (10, -1.970149568059530015660535763),
        (361, -158.9842869331240774089200683),
        (7963, -3878.282786201834576902649448),
    ];
    let mut worst = 0.0f64;
    for (n, b) in oracle {
        worst = worst.max((upper_bound_estimate(n, 0.95)? - b).abs());
    }
    Ok((worst <= 1e-8, format!("max abs error {worst:.2e}, tol 1e-8")))
}

fn criterion_4() -> Outcome {
    let variance = 1e-4;
    let mut passes = 0;
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    for seed in 0..20u64 {
        let problem = gaussian_benchmark(2, variance, seed)?;
        let truth = problem.analytic_posterior.clone().expect("analytic posterior");
        let cfg = SmcConfig {
            seed,
            ..SmcConfig::default()
        };
        let out = run_smc(&problem.prior, |x| problem.log_likelihood(x), &cfg)?;
        let e = &out.ensemble;
        let sd = (variance / (1.0 + variance)).sqrt();
        let se = sd / (e.len() as f64).sqrt();
        let mean_dev = e
            .mean()
            .iter()
            .zip(truth.mean())
            .map(|(a, b)| (a - b).abs() / se)
            .fold(0.0, f64::max);
        let cov = e.covariance();
        let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let diff: Vec<f64> = cov.iter().zip(truth.covariance()).map(|(a, b)| a - b).collect();
        let cov_rel = norm(&diff) / norm(truth.covariance());
        worst_mean = worst_mean.max(mean_dev);
        worst_cov = worst_cov.max(cov_rel);
        if mean_dev <= 3.0 && cov_rel <= 0.1 {
            passes += 1;
        }
    }
    Ok((
        passes >= 18,
        format!("{passes}/20 seeds pass (worst mean error {worst_mean:.2} se, worst covariance error {:.1}%)", 100.0 * worst_cov),
    ))
}

fn criterion_6() -> Outcome {
    let kle = build_kle(&node_coordinates(20), 0.2, 0.99)?;
    let k = kle.n_modes();
    Ok((
        (28..=32).contains(&k),
        format!("{k} modes retain {:.4} of the variance, expected 30 ± 2", kle.variance_fraction()),
    ))
}

fn manufactured_error(n: usize) -> Result<f64, Error> {
    let grid = DiffusionGrid::uniform(n, n, 1.0, 1.0, 1.0)?;
    let exact = |x: f64, y: f64| (PI * x).sin() * (2.0 * PI * y).sin() * (1.0 + x * y);
    // ∇·∇u for the field above, by hand.
    let source = |x: f64, y: f64| {
        let (sx, cx) = (PI * x).sin_cos();
        let (sy, cy) = (2.0 * PI * y).sin_cos();
        let p = 1.0 + x * y;
        -PI * PI * sx * sy * p + 2.0 * PI * cx * sy * y - 4.0 * PI * PI * sx * sy * p + 4.0 * PI * sx * cy * x
    };
    let u = solve_diffusion_with(&grid, source)?;
    Ok((0..u.len())
        .map(|p| {
            let (x, y) = grid.interior_node(p);
            (u[p] - exact(x, y)).abs()
        })
        .fold(0.0, f64::max))
}

fn criterion_7() -> Outcome {
    let e = [manufactured_error(16)?, manufactured_error(32)?, manufactured_error(64)?];
    let ratios = [e[0] / e[1], e[1] / e[2]];
    Ok((
        ratios.iter().all(|r| (3.5..=4.5).contains(r)),
        format!("L∞ error ratios {:.3} (h=1/16→1/32), {:.3} (1/32→1/64)", ratios[0], ratios[1]),
    ))
}

// Composite Simpson on a fine grid covering every component.
fn quadrature_cs(p: &GaussianMixture1D, q: &GaussianMixture1D) -> f64 {
    let h = p.bandwidth().min(q.bandwidth());
    let lo = p.means()[0].min(q.means()[0]) - 12.0 * p.bandwidth().max(q.bandwidth());
    let hi = p.means()[p.len() - 1].max(q.means()[q.len() - 1]) + 12.0 * p.bandwidth().max(q.bandwidth());
    let n = (((hi - lo) / h) * 60.0).ceil() as usize * 2;
    let dx = (hi - lo) / n as f64;
    let (mut pq, mut pp, mut qq) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * dx;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let (a, b) = (p.density(x), q.density(x));
        pq += w * a * b;
        pp += w * a * a;
        qq += w * b * b;
    }
    -(pq / (pp * qq).sqrt()).ln()
}

fn criterion_9() -> Outcome {
    let mut rng = stream(309, &[]);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let shift = rng.random_range(0.0..2.0);
        let mut mixture = |shift: f64| {
            let n = rng.random_range(1..30usize);
            let means = (0..n).map(|_| shift + rng.random_range(-2.0..2.0)).collect();
            GaussianMixture1D::new(means, rng.random_range(0.1..1.0)).unwrap()
        };
        let (p, q) = (mixture(0.0), mixture(shift));
        worst = worst.max((cs_divergence(&p, &q) - quadrature_cs(&p, &q)).abs());
    }
    let kl = gaussian_kl(&GaussianMoments::new(vec![0.0], vec![1.0])?, &GaussianMoments::new(vec![1.0], vec![1.0])?)?;
    Ok((
        worst <= 1e-6 && (kl - 0.5).abs() <= 1e-12,
        format!("max |closed form − quadrature| = {worst:.2e} over 50 pairs; KL(N(0,1)‖N(1,1)) − 0.5 = {:.1e}", kl - 0.5),
    ))
}

struct GaussianRuns {
    adaptive: Vec<RunRecord>,
    baseline_kl: Vec<f64>,
}

const GAUSS_SEEDS: u64 = 5;

fn gaussian_runs() -> Result<GaussianRuns, Box<dyn std::error::Error>> {
    let mut adaptive = Vec::new();
    let mut baseline_kl = Vec::new();
    for seed in 0..GAUSS_SEEDS {
        let problem = gaussian_benchmark(10, 1e-4, seed)?;
        // The full 150-call budget: 20 initial points plus 13 batches of 10.
        let cfg = AdaptiveConfig {
            initial_points: 20,
            points_per_iteration: 10,
            max_iterations: 13,
            alpha_tol: 1e-12,
            mode: EstimatorMode::Cgpmap2 { quantile: 0.9 },
            seed,
            ..AdaptiveConfig::default()
        };
        let record = run_adaptive(&problem, &cfg).map_err(|f| f.error)?;
        let baseline = run_prior_baseline(&problem, &cfg, &[150])?;
        baseline_kl.push(baseline[0].kl_to_truth.expect("analytic posterior"));
        adaptive.push(record);
    }
    Ok(GaussianRuns { adaptive, baseline_kl })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn final_kl(r: &RunRecord) -> f64 {
    let last = r.iterations.iter().rfind(|i| i.solver_calls <= 150).expect("at least one iteration");
    last.kl_to_truth.expect("analytic posterior")
}

fn criterion_1(g: &GaussianRuns) -> (bool, String) {
    let init = mean(g.adaptive.iter().map(|r| r.iterations[0].kl_to_truth.expect("analytic posterior")));
    let end = mean(g.adaptive.iter().map(final_kl));
    let calls = g.adaptive.iter().map(|r| r.solver_calls()).max().unwrap_or(0);
    (
        end < 0.05 * init,
        format!(
            "mean KL {init:.4e} at 20 calls → {end:.4e} at ≤{calls} calls, ratio {:.2e}, tol 5e-2",
            end / init
        ),
    )
}

fn criterion_2(g: &GaussianRuns) -> (bool, String) {
    let adaptive = mean(g.adaptive.iter().map(final_kl));
    let baseline = mean(g.baseline_kl.iter().copied());
    (
        adaptive < baseline,
        format!("mean KL at 150 calls: adaptive {adaptive:.4e}, prior-only {baseline:.4e}"),
    )
}

fn desk_setup() -> DiffusionSetup {
    DiffusionSetup::default()
}

fn diffusion_problem_desk() -> Result<InverseProblem, Error> {
    Ok(diffusion_problem(&desk_setup())?.0)
}

fn diffusion_reference() -> Result<ParticleEnsemble, Box<dyn std::error::Error>> {
    let problem = diffusion_problem_desk()?;
    let cfg = SmcConfig {
        n_particles: 500,
        n_rejuvenation: 15,
        seed: 5000,
        ..SmcConfig::default()
    };
    Ok(run_smc(&problem.prior, |x| problem.log_likelihood(x), &cfg)?.ensemble)
}

const DESK_CAP: usize = 600;

fn desk_config(mode: EstimatorMode) -> AdaptiveConfig {
    AdaptiveConfig {
        initial_points: 40,
        points_per_iteration: 20,
        alpha_tol: 1e-2,
        max_iterations: (DESK_CAP - 40) / 20,
        mode,
        smc: SmcConfig {
            n_particles: 500,
            n_rejuvenation: 15,
            ..SmcConfig::default()
        },
        seed: 0,
        ..AdaptiveConfig::default()
    }
}

fn criterion_5(reference: &ParticleEnsemble) -> Outcome {
    let problem = diffusion_problem_desk()?;
    let record = run_adaptive(&problem, &desk_config(EstimatorMode::Cgpmap2 { quantile: 0.9 })).map_err(|f| f.error)?;
    let calls = record.solver_calls();
    let Some(e) = &record.final_ensemble else {
        return Ok((false, "no final ensemble".into()));
    };
    let cs = max_marginal_cs(e, reference)?;
    Ok((
        record.converged() && calls <= DESK_CAP && cs <= 0.2,
        format!("stop {:?} after {calls} solver calls, D_CS to reference {cs:.4}, tol 0.2", record.stop),
    ))
}

fn criterion_8(reference: &ParticleEnsemble) -> Outcome {
    let problem = diffusion_problem_desk()?;
    let (record, error) = match run_adaptive(&problem, &desk_config(EstimatorMode::Gpmap1)) {
        Ok(r) => (r, None),
        Err(f) => (f.record, Some(f.error)),
    };
    let calls = record.solver_calls();
    if let Some(e) = error {
        let surfaced = matches!(e, Error::DegenerateEnsemble(_) | Error::CholeskyFailure { .. });
        return Ok((surfaced, format!("failed after {calls} solver calls with: {e}")));
    }
    match (&record.stop, &record.final_ensemble) {
        (StopReason::Converged, Some(e)) => {
            let cs = max_marginal_cs(e, reference)?;
            Ok((cs <= 1.0, format!("converged after {calls} calls with D_CS to reference {cs:.4}, tol 1.0")))
        }
        (StopReason::Converged, None) => Ok((false, "converged without a final ensemble".into())),
        (stop, _) => Ok((calls >= DESK_CAP, format!("stop {stop:?} after {calls} solver calls without meeting α_tol"))),
    }
}
