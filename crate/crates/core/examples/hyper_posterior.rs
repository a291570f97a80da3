//! MAP hyperparameters and HMC posterior draws for data generated from a
//! known squared-exponential GP.
//!
//! cargo run --release --example hyper_posterior -- [true_lengthscale]

use bayes_surrogate::gp::{fit, Hyperparameters, TrainingSet};
use bayes_surrogate::hyper::{map_estimate, sample_posterior, HyperPrior, MapConfig, SamplerConfig};
use bayes_surrogate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.8);
    let n = 60;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![10.0 * i as f64 / (n - 1) as f64]).collect();

    // Draw the data from the prior of a GP with the true hyperparameters,
    // conditioning step by step on the values drawn so far.
    let theta = Hyperparameters::isotropic(1.0, truth, 1, 1e-6)?;
    let mut rng = stream(3, &[]);
    let mut values = Vec::with_capacity(n);
    for (i, r) in rows.iter().enumerate() {
        let v = if i == 0 {
            rng.sample::<f64, _>(StandardNormal)
        } else {
            let sofar = Arc::new(TrainingSet::from_rows(&rows[..i], &values)?);
            let p = fit(sofar, &theta)?.predict(r)?;
            p.mean + p.variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
        };
        values.push(v);
    }
    let d = Arc::new(TrainingSet::from_rows(&rows, &values)?);

    let prior = HyperPrior::default();
    let map = map_estimate(&d, &prior, &MapConfig::default(), None)?;
    println!(
        "MAP: σ_s² = {:.3}, l = {:.3} (true {truth}), σ_f² = {:.2e}, |∇| = {:.1e}",
        map.hyper.signal_variance, map.hyper.lengthscales[0], map.hyper.noise_variance, map.gradient_norm
    );
    let draws = sample_posterior(&d, &prior, 200, 5, &SamplerConfig::default(), Some(&map.hyper))?;
    let mut ls: Vec<f64> = draws.draws.iter().map(|t| t.lengthscales[0]).collect();
    ls.sort_by(f64::total_cmp);
    println!(
        "HMC: acceptance {:.2}, step {:.3}; lengthscale 5/50/95 % = {:.3} / {:.3} / {:.3}",
        draws.acceptance_rate,
        draws.step_size,
        ls[10],
        ls[100],
        ls[190]
    );
    Ok(())
}
