//! Stationary diffusion `∇·(D ∇u) = s` with `u = 0` on the boundary of a
//! rectangle, discretized by 5-point finite differences on a node grid.

use super::kle::{build_kle, node_coordinates, KLExpansion};
use super::{InverseProblem, LogLikelihood, PriorKind};
use crate::rng::stream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

/// Cell-wise diffusivity on an `nx × ny`-cell grid over `[0, width] × [0, height]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionGrid {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    /// Row-major in `y`, `ny × nx`.
    diffusivity: Vec<f64>,
}

impl DiffusionGrid {
    pub fn new(nx: usize, ny: usize, width: f64, height: f64, diffusivity: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Domain("grid needs at least two cells per side".into()));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::Domain("grid extent must be positive".into()));
        }
        if diffusivity.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                expected: nx * ny,
                found: diffusivity.len(),
            });
        }
        if diffusivity.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain("diffusivity must be positive and finite".into()));
        }
        Ok(DiffusionGrid {
            nx,
            ny,
            width,
            height,
            diffusivity,
        })
    }

    pub fn uniform(nx: usize, ny: usize, width: f64, height: f64, value: f64) -> Result<Self> {
        Self::new(nx, ny, width, height, vec![value; nx * ny])
    }

    /// Unit square with cell diffusivity `exp(G)` from a KLE built on its nodes.
    pub fn from_field(kle: &KLExpansion, x: &[f64]) -> Result<Self> {
        let cells = cells_of(kle)?;
        Self::new(cells, cells, 1.0, 1.0, realize_field(kle, x)?)
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn diffusivity(&self) -> &[f64] {
        &self.diffusivity
    }

    pub fn n_interior(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    fn spacing(&self) -> (f64, f64) {
        (self.width / self.nx as f64, self.height / self.ny as f64)
    }

    fn cell(&self, i: usize, j: usize) -> f64 {
        self.diffusivity[j * self.nx + i]
    }

    /// Coordinates of interior node `p`.
    pub fn interior_node(&self, p: usize) -> (f64, f64) {
        let (hx, hy) = self.spacing();
        let i = p % (self.nx - 1) + 1;
        let j = p / (self.nx - 1) + 1;
        (i as f64 * hx, j as f64 * hy)
    }

    /// Node values with the Dirichlet zeros restored, `(ny+1) × (nx+1)`.
    pub fn full_nodes(&self, interior: &[f64]) -> Result<Vec<f64>> {
        if interior.len() != self.n_interior() {
            return Err(Error::DimensionMismatch {
                expected: self.n_interior(),
                found: interior.len(),
            });
        }
        let w = self.nx + 1;
        let mut out = vec![0.0; w * (self.ny + 1)];
        for (p, v) in interior.iter().enumerate() {
            let i = p % (self.nx - 1) + 1;
            let j = p / (self.nx - 1) + 1;
            out[j * w + i] = *v;
        }
        Ok(out)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn cells_of(kle: &KLExpansion) -> Result<usize> {
    let n = kle.points().len();
    let side = (n as f64).sqrt().round() as usize;
    if side < 3 || side * side != n {
        return Err(Error::Domain("KLE points do not form a square node grid".into()));
    }
    Ok(side - 1)
}

/// Cell diffusivity `exp(G)` with `G` at each cell centre taken as the mean of
/// its four corner nodes.
pub fn realize_field(kle: &KLExpansion, x: &[f64]) -> Result<Vec<f64>> {
    let cells = cells_of(kle)?;
    let g = kle.log_field(x)?;
    let w = cells + 1;
    Ok((0..cells)
        .flat_map(|j| (0..cells).map(move |i| (i, j)))
        .map(|(i, j)| (0.25 * (g[j * w + i] + g[j * w + i + 1] + g[(j + 1) * w + i] + g[(j + 1) * w + i + 1])).exp())
        .collect())
}

/// Solves with a constant source. Returns `u` at interior nodes, row-major in `y`.
pub fn solve_diffusion(grid: &DiffusionGrid, source: f64) -> Result<Vec<f64>> {
    solve_diffusion_with(grid, |_, _| source)
}

/// Solves with a pointwise source `s(x, y)` by Jacobi-preconditioned CG to a
/// relative residual of 1e-10.
pub fn solve_diffusion_with<F: Fn(f64, f64) -> f64>(grid: &DiffusionGrid, source: F) -> Result<Vec<f64>> {
    let (mx, my) = (grid.nx - 1, grid.ny - 1);
    let n = mx * my;
    let (hx, hy) = grid.spacing();
    // Edge conductances of −∇·(D∇·): east and north of each node, indexed by node (i, j).
    let w = grid.nx + 1;
    let mut east = vec![0.0; w * (grid.ny + 1)];
    let mut north = vec![0.0; w * (grid.ny + 1)];
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            east[j * w + i] = harmonic(grid.cell(i, j - 1), grid.cell(i, j)) / (hx * hx);
        }
    }
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            north[j * w + i] = harmonic(grid.cell(i - 1, j), grid.cell(i, j)) / (hy * hy);
        }
    }
    let idx = |i: usize, j: usize| (j - 1) * mx + (i - 1);
    let mut diag = vec![0.0; n];
    for j in 1..=my {
        for i in 1..=mx {
            diag[idx(i, j)] = east[j * w + i] + east[j * w + i - 1] + north[j * w + i] + north[(j - 1) * w + i];
        }
    }
    let apply = |u: &[f64], out: &mut [f64]| {
        for j in 1..=my {
            for i in 1..=mx {
                let p = idx(i, j);
                let mut v = diag[p] * u[p];
                if i > 1 {
                    v -= east[j * w + i - 1] * u[idx(i - 1, j)];
                }
                if i < mx {
                    v -= east[j * w + i] * u[idx(i + 1, j)];
                }
                if j > 1 {
                    v -= north[(j - 1) * w + i] * u[idx(i, j - 1)];
                }
                if j < my {
                    v -= north[j * w + i] * u[idx(i, j + 1)];
                }
                out[p] = v;
            }
        }
    };
    let b: Vec<f64> = (0..n)
        .map(|p| {
            let (x, y) = grid.interior_node(p);
            -source(x, y)
        })
        .collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(u);
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..10 * n + 100 {
        apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..n {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 * b_norm {
            return Ok(u);
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NonConvergence("conjugate gradients did not reach the residual tolerance".into()))
}

/// Synthetic data `y = M(x*) + ε` together with the generating `x*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub y: Vec<f64>,
    pub true_x: Vec<f64>,
    pub noise_variance: f64,
}

/// Adds seeded `N(0, noise_variance)` noise to the clean forward output `clean = M(true_x)`.
pub fn synthesize_observations(clean: &[f64], true_x: &[f64], noise_variance: f64, seed: u64) -> Result<Observations> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::Domain(format!("noise variance must be non-negative, got {noise_variance}")));
    }
    let mut rng = stream(seed, &[0x4e4f_4953]);
    let sd = noise_variance.sqrt();
    let y = clean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(Observations {
        y,
        true_x: true_x.to_vec(),
        noise_variance,
    })
}

/// KLE coefficients to interior-node solution, and the Gaussian misfit against data.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    kle: KLExpansion,
    source: f64,
    observations: Observations,
}

impl DiffusionModel {
    pub fn kle(&self) -> &KLExpansion {
        &self.kle
    }

    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn source(&self) -> f64 {
        self.source
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        solve_diffusion(&DiffusionGrid::from_field(&self.kle, x)?, self.source)
    }
}

impl LogLikelihood for DiffusionModel {
    fn dim(&self) -> usize {
        self.kle.n_modes()
    }

    fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        let u = self.forward(x)?;
        let ss: f64 = u.iter().zip(&self.observations.y).map(|(u, y)| (u - y).powi(2)).sum();
        Ok(-0.5 * ss / self.observations.noise_variance)
    }
}

/// Settings of the synthetic diffusion problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSetup {
    pub cells: usize,
    pub lengthscale: f64,
    pub variance_target: f64,
    pub noise_variance: f64,
    pub source: f64,
    /// Seed of the ground-truth coefficients and observation noise.
    pub truth_seed: u64,
}

impl Default for DiffusionSetup {
    fn default() -> Self {
        DiffusionSetup {
            cells: 10,
            lengthscale: 0.3,
            variance_target: 0.99,
            noise_variance: 1e-4,
            source: 10.0,
            truth_seed: 0,
        }
    }
}

/// Standard-normal prior on KLE coefficients, observations at every interior node.
pub fn diffusion_problem(setup: &DiffusionSetup) -> Result<(InverseProblem, Arc<DiffusionModel>)> {
    if !(setup.noise_variance > 0.0) {
        return Err(Error::Config("diffusion noise variance must be positive".into()));
    }
    let kle = build_kle(&node_coordinates(setup.cells), setup.lengthscale, setup.variance_target)?;
    let k = kle.n_modes();
    let mut rng = stream(setup.truth_seed, &[0x5452_5545]);
    let true_x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let clean = solve_diffusion(&DiffusionGrid::from_field(&kle, &true_x)?, setup.source)?;
    let observations = synthesize_observations(&clean, &true_x, setup.noise_variance, setup.truth_seed)?;
    let n_obs = observations.y.len();
    let model = Arc::new(DiffusionModel {
        kle,
        source: setup.source,
        observations,
    });
    let problem = InverseProblem::new(
        format!("diffusion-{0}x{0}", setup.cells),
        PriorKind::StandardNormal(k),
        model.clone(),
        n_obs,
    )?;
    Ok((problem, model))
}

/// Writes `x,y,value` rows for values on a regular `nx × ny` lattice with the
/// given spacing and origin offset.
pub fn write_grid_csv<W: Write>(
    mut out: W,
    nx: usize,
    ny: usize,
    spacing: (f64, f64),
    offset: (f64, f64),
    values: &[f64],
) -> Result<()> {
    if values.len() != nx * ny {
        return Err(Error::DimensionMismatch {
            expected: nx * ny,
            found: values.len(),
        });
    }
    writeln!(out, "x,y,value")?;
    for j in 0..ny {
        for i in 0..nx {
            let x = offset.0 + i as f64 * spacing.0;
            let y = offset.1 + j as f64 * spacing.1;
            writeln!(out, "{x:.16e},{y:.16e},{:.16e}", values[j * nx + i])?;
        }
    }
    Ok(())
}
