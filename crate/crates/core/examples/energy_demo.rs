//! Adaptive training-point selection on a two-dimensional ring-shaped target:
//! prints where each batch of solver calls lands.
//!
//! cargo run --release --example energy_demo -- [seed]

use bayes_surrogate::adaptive::{run_adaptive, AdaptiveConfig};
use bayes_surrogate::bounded::EstimatorMode;
use bayes_surrogate::models::{energy_target, EnergyLikelihood};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let problem = energy_target();
    let cfg = AdaptiveConfig {
        initial_points: 10,
        points_per_iteration: 5,
        max_iterations: 6,
        alpha_tol: 1e-3,
        mode: EstimatorMode::Cgpmap2 { quantile: 0.9 },
        seed,
        ..AdaptiveConfig::default()
    };
    let record = run_adaptive(&problem, &cfg).map_err(|f| f.error)?;
    for it in &record.iterations {
        let mean_energy = it.new_points.iter().map(|p| EnergyLikelihood::energy(p)).sum::<f64>() / it.new_points.len() as f64;
        println!(
            "iteration {} ({} calls, cs {}): mean energy of new points {:.2}",
            it.iteration,
            it.solver_calls,
            it.cs_to_previous.map_or("-".into(), |c| format!("{c:.3e}")),
            mean_energy
        );
        for p in &it.new_points {
            println!("    ({:+.3}, {:+.3})  r = {:.3}", p[0], p[1], p[0].hypot(p[1]));
        }
    }
    println!("stop: {:?}", record.stop);
    Ok(())
}
