//! Adaptive surrogate training on the 10-dimensional Gaussian benchmark,
//! printing the KL divergence to the analytic posterior per iteration.
//!
//! cargo run --release --example gaussian_benchmark -- [seed] [mode]

use bayes_surrogate::adaptive::{run_adaptive, AdaptiveConfig};
use bayes_surrogate::bounded::EstimatorMode;
use bayes_surrogate::models::gaussian_benchmark;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mode = EstimatorMode::from_name(&args.next().unwrap_or_else(|| "cgpmap2".into()), 0.9, 10)?;
    let problem = gaussian_benchmark(10, 1e-4, seed)?;
    let cfg = AdaptiveConfig {
        max_iterations: 13,
        alpha_tol: 1e-9,
        mode,
        seed,
        ..AdaptiveConfig::default()
    };
    let record = match run_adaptive(&problem, &cfg) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("{f}");
            f.record
        }
    };
    println!("calls  kl_to_truth        cs_to_previous  stages  seconds");
    for it in &record.iterations {
        println!(
            "{:>5}  {:<17.6e}  {:<14}  {:>6}  {:>7.2}",
            it.solver_calls,
            it.kl_to_truth.unwrap_or(f64::NAN),
            it.cs_to_previous.map_or("-".into(), |c| format!("{c:.4e}")),
            it.smc_stages,
            it.wall_seconds
        );
    }
    Ok(())
}
