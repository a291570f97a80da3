//! Karhunen–Loève discretisation of a log-normal diffusivity field and one
//! forward solve, written as plot-ready CSV grids.
//!
//! cargo run --release --example kle_field -- [cells] [lengthscale] [out_dir]

use bayes_surrogate::models::{
    build_kle, node_coordinates, realize_field, solve_diffusion, write_grid_csv, DiffusionGrid,
};
use bayes_surrogate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cells: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let lengthscale: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "kle_field_out".into()));

    let kle = build_kle(&node_coordinates(cells), lengthscale, 0.99)?;
    let ev = kle.eigenvalues();
    let total: f64 = ev.iter().sum();
    println!(
        "{0}×{0} cells, l = {lengthscale}: {1} modes keep {2:.4} of the variance",
        cells,
        kle.n_modes(),
        kle.variance_fraction()
    );
    let mut cumulative = 0.0;
    for (i, l) in ev.iter().take(kle.n_modes() + 3).enumerate() {
        cumulative += l;
        println!("  λ{:<3} {:>10.4}  cumulative {:.4}", i + 1, l, cumulative / total);
    }

    let mut rng = stream(7, &[]);
    let x: Vec<f64> = (0..kle.n_modes()).map(|_| rng.sample(StandardNormal)).collect();
    let field = realize_field(&kle, &x)?;
    let grid = DiffusionGrid::from_field(&kle, &x)?;
    let u = grid.full_nodes(&solve_diffusion(&grid, 10.0)?)?;
    std::fs::create_dir_all(&out)?;
    let h = 1.0 / cells as f64;
    write_grid_csv(BufWriter::new(File::create(out.join("diffusivity.csv"))?), cells, cells, (h, h), (0.5 * h, 0.5 * h), &field)?;
    write_grid_csv(BufWriter::new(File::create(out.join("solution.csv"))?), cells + 1, cells + 1, (h, h), (0.0, 0.0), &u)?;
    println!("wrote {}/diffusivity.csv and {}/solution.csv", out.display(), out.display());
    Ok(())
}
