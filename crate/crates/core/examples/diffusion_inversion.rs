//! Desk-scale diffusion inversion on a 10×10 grid: a surrogate-free SMC
//! reference, then adaptive surrogate training, reporting the marginal CS
//! divergence between the two.
//!
//! cargo run --release --example diffusion_inversion -- [seed] [mode] [particles] [rejuvenation]

use bayes_surrogate::adaptive::{run_adaptive_with, AdaptiveConfig};
use bayes_surrogate::bounded::EstimatorMode;
use bayes_surrogate::diagnostics::max_marginal_cs;
use bayes_surrogate::models::{diffusion_problem, DiffusionSetup};
use bayes_surrogate::smc::{run_smc, SmcConfig};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mode = EstimatorMode::from_name(&args.next().unwrap_or_else(|| "cgpmap2".into()), 0.9, 10)?;
    let particles: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let rejuvenation: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(15);

    let (problem, model) = diffusion_problem(&DiffusionSetup::default())?;
    println!("{}: {} KLE modes, {} observations", problem.name, model.kle().n_modes(), problem.n_obs);

    let start = Instant::now();
    let reference = run_smc(
        &problem.prior,
        |x| problem.log_likelihood(x),
        &SmcConfig {
            n_particles: 500,
            n_rejuvenation: 15,
            seed: seed + 1000,
            ..SmcConfig::default()
        },
    )?;
    println!(
        "reference: {} stages, {} solver calls, {:.1} s",
        reference.betas.len(),
        reference.likelihood_calls,
        start.elapsed().as_secs_f64()
    );

    let cfg = AdaptiveConfig {
        initial_points: 40,
        points_per_iteration: 20,
        alpha_tol: 1e-2,
        max_iterations: 28,
        mode,
        smc: SmcConfig {
            n_particles: particles,
            n_rejuvenation: rejuvenation,
            ..SmcConfig::default()
        },
        seed,
        ..AdaptiveConfig::default()
    };
    println!("calls  cs_to_previous  stages  fit s  total s");
    let progress = |it: &bayes_surrogate::adaptive::IterationRecord| {
        println!(
            "{:>5}  {:<14}  {:>6}  {:>5.1}  {:>7.1}",
            it.solver_calls,
            it.cs_to_previous.map_or("-".into(), |c| format!("{c:.4e}")),
            it.smc_stages,
            it.fit_seconds,
            it.wall_seconds
        );
    };
    let record = match run_adaptive_with(&problem, &cfg, progress) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("stopped: {}", f.error);
            f.record
        }
    };
    println!("stop: {:?}", record.stop);
    if let Some(e) = &record.final_ensemble {
        println!("max marginal CS to reference: {:.4e}", max_marginal_cs(e, &reference.ensemble)?);
    }
    Ok(())
}
