use bayes_surrogate::adaptive::{run_adaptive, AdaptiveConfig};
use bayes_surrogate::bounded::EstimatorMode;
use bayes_surrogate::diagnostics::max_marginal_cs;
use bayes_surrogate::experiment::reference_ensemble;
use bayes_surrogate::models::{gaussian_benchmark, InverseProblem, LogLikelihood, PriorKind};
use bayes_surrogate::smc::SmcConfig;
use bayes_surrogate::Result;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

fn small_smc(seed: u64) -> SmcConfig {
    SmcConfig {
        n_particles: 400,
        n_rejuvenation: 10,
        seed,
        ..SmcConfig::default()
    }
}

#[test]
fn reference_matches_analytic_posterior_and_is_reproducible() {
    let problem = gaussian_benchmark(3, 1e-2, 8).unwrap();
    let truth = problem.analytic_posterior.clone().unwrap();
    let (a, calls) = reference_ensemble(&problem, &small_smc(1)).unwrap();
    let (b, _) = reference_ensemble(&problem, &small_smc(1)).unwrap();
    assert_eq!(a, b);
    assert!(calls > 400);
    let sd = (1e-2f64 / 1.01).sqrt();
    for (m, t) in a.mean().iter().zip(truth.mean()) {
        // 400 correlated particles: allow five naive standard errors.
        assert!((m - t).abs() < 5.0 * sd / 20.0, "{m} vs {t}");
    }
}

struct Counting {
    inner: Arc<dyn LogLikelihood>,
    calls: AtomicUsize,
}

impl LogLikelihood for Counting {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.log_likelihood(x)
    }
}

#[test]
fn adaptive_budget_and_nesting() {
    let base = gaussian_benchmark(2, 1e-2, 4).unwrap();
    let counting = Arc::new(Counting {
        inner: Arc::clone(base.model()),
        calls: AtomicUsize::new(0),
    });
    let mut problem = InverseProblem::new("counted", PriorKind::StandardNormal(2), counting.clone(), 2).unwrap();
    problem.analytic_posterior = base.analytic_posterior.clone();
    let cfg = AdaptiveConfig {
        initial_points: 10,
        points_per_iteration: 5,
        max_iterations: 4,
        alpha_tol: 1e-12,
        mode: EstimatorMode::Cgpmap2 { quantile: 0.9 },
        smc: small_smc(0),
        seed: 2,
        ..AdaptiveConfig::default()
    };
    let record = run_adaptive(&problem, &cfg).unwrap();
    assert_eq!(counting.calls.load(Ordering::Relaxed), record.solver_calls());
    assert_eq!(record.solver_calls(), 10 + 4 * 5);
    let mut seen = 0;
    for it in &record.iterations {
        // Each iteration's points extend the training set in order.
        for p in &it.new_points {
            assert_eq!(record.training.point(seen), p.as_slice());
            seen += 1;
        }
        assert_eq!(it.training_size, seen);
    }
    let first = record.iterations[0].kl_to_truth.unwrap();
    let last = record.iterations.last().unwrap().kl_to_truth.unwrap();
    assert!(last < first, "KL {first} → {last}");
}

#[test]
fn surrogate_posterior_approaches_reference() {
    let problem = gaussian_benchmark(2, 1e-2, 6).unwrap();
    let (reference, _) = reference_ensemble(&problem, &small_smc(9)).unwrap();
    let cfg = AdaptiveConfig {
        initial_points: 10,
        points_per_iteration: 5,
        max_iterations: 5,
        alpha_tol: 1e-12,
        smc: small_smc(0),
        seed: 6,
        ..AdaptiveConfig::default()
    };
    let record = run_adaptive(&problem, &cfg).unwrap();
    let cs = max_marginal_cs(record.final_ensemble.as_ref().unwrap(), &reference).unwrap();
    assert!(cs < 0.2, "final D_CS {cs}");
}
