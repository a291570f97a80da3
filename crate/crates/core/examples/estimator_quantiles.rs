//! The three likelihood estimators on a 1D Gaussian likelihood N(0.5, 0.02)
//! learned from five training points: the unconstrained GP mean, the bounded
//! q = 0.9 quantile, and the same quantile marginalised over hyperparameter draws.
//! Five points leave the hyperparameter posterior broad, so the CFBGP column is
//! nearly flat.
//!
//! cargo run --release --example estimator_quantiles

use bayes_surrogate::bounded::{constrained_predict, upper_bound_estimate, EstimatorMode, FitConfig, LikelihoodEstimator};
use bayes_surrogate::gp::TrainingSet;
use std::sync::Arc;

fn log_likelihood(x: f64) -> f64 {
    -(x - 0.5).powi(2) / (2.0 * 0.02)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut training = TrainingSet::new(1);
    for x in [0.05, 0.3, 0.45, 0.7, 0.95] {
        training.push(&[x], log_likelihood(x))?;
    }
    training.upper_bound = upper_bound_estimate(1, 0.95)?;
    let training = Arc::new(training);
    let cfg = FitConfig::default();

    let (gpmap1, report) = LikelihoodEstimator::fit(EstimatorMode::Gpmap1, Arc::clone(&training), &cfg, 1, None)?;
    let (cgpmap2, _) =
        LikelihoodEstimator::fit(EstimatorMode::Cgpmap2 { quantile: 0.9 }, Arc::clone(&training), &cfg, 1, None)?;
    let (cfbgp, _) = LikelihoodEstimator::fit(
        EstimatorMode::Cfbgp {
            quantile: 0.9,
            n_theta: 20,
        },
        Arc::clone(&training),
        &cfg,
        1,
        None,
    )?;
    let b = cgpmap2.upper_bound();
    println!("upper bound b = {b:.6}, MAP ln θ = {:?}", report.map.hyper.to_log());
    println!("    x   true f      GPMAP-I     CGPMAP-II   CFBGP      sd(GP)   sd(bounded)");
    for i in 0..=20 {
        let x = [i as f64 / 20.0];
        let gp = &gpmap1.gps()[0];
        let p = gp.predict(&x)?;
        let tn = constrained_predict(gp, &x, b)?;
        println!(
            "{:5.2}  {:>10.3}  {:>10.3}  {:>10.3}  {:>10.3}  {:>8.3}  {:>8.3}",
            x[0],
            log_likelihood(x[0]),
            gpmap1.estimate(&x)?,
            cgpmap2.estimate(&x)?,
            cfbgp.estimate(&x)?,
            p.variance.sqrt(),
            tn.variance().sqrt()
        );
    }
    Ok(())
}
