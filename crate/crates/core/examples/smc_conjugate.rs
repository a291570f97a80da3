//! Tempered SMC on the true likelihood of a conjugate Gaussian problem,
//! compared with the closed-form posterior.
//!
//! cargo run --release --example smc_conjugate -- [dimension] [seed]

use bayes_surrogate::diagnostics::{gaussian_kl, moments_from_ensemble};
use bayes_surrogate::models::gaussian_benchmark;
use bayes_surrogate::smc::{run_smc, SmcConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dim: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let problem = gaussian_benchmark(dim, 1e-4, seed)?;
    let truth = problem.analytic_posterior.clone().expect("benchmark has a closed-form posterior");

    let out = run_smc(
        &problem.prior,
        |x| problem.log_likelihood(x),
        &SmcConfig {
            seed,
            ..SmcConfig::default()
        },
    )?;
    let e = &out.ensemble;
    println!(
        "{} stages, {} likelihood calls, final ESS {:.0} of {}",
        out.betas.len(),
        out.likelihood_calls,
        e.ess(),
        e.len()
    );
    println!("tempering: {:?}", out.betas.iter().map(|b| format!("{b:.2e}")).collect::<Vec<_>>());
    let cov = e.covariance();
    for k in 0..dim {
        println!(
            "x{k}: mean {:+.6} (exact {:+.6}), sd {:.3e} (exact {:.3e})",
            e.mean()[k],
            truth.mean()[k],
            cov[k * dim + k].sqrt(),
            truth.covariance()[k * dim + k].sqrt()
        );
    }
    println!("KL(exact ‖ moment-matched) = {:.4e}", gaussian_kl(&truth, &moments_from_ensemble(e)?)?);
    Ok(())
}
