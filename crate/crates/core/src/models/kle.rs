use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes of an `n × n`-cell grid on the unit square, row-major in `y`.
pub fn node_coordinates(cells: usize) -> Vec<[f64; 2]> {
    let h = 1.0 / cells as f64;
    (0..=cells)
        .flat_map(|j| (0..=cells).map(move |i| [i as f64 * h, j as f64 * h]))
        .collect()
}

/// Truncated Karhunen–Loève expansion of a unit-variance squared-exponential
/// Gaussian field, evaluated at a fixed set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct KLExpansion {
    points: Vec<[f64; 2]>,
    /// All eigenvalues, descending.
    eigenvalues: Vec<f64>,
    /// Retained modes scaled by `√λᵢ`, one row per point (`points × k`).
    modes: Vec<f64>,
    k: usize,
    variance_fraction: f64,
    lengthscale: f64,
}

impl KLExpansion {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_modes(&self) -> usize {
        self.k
    }

    pub fn variance_fraction(&self) -> f64 {
        self.variance_fraction
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// `√λᵢ φᵢ(cₚ)`.
    pub fn mode(&self, point: usize, i: usize) -> f64 {
        self.modes[point * self.k + i]
    }

    /// `G(c) = Σᵢ xᵢ √λᵢ φᵢ(c)` at every point.
    pub fn log_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: x.len(),
            });
        }
        Ok(self
            .modes
            .chunks_exact(self.k)
            .map(|row| row.iter().zip(x).map(|(m, c)| m * c).sum())
            .collect())
    }
}

/// Eigendecomposition of `exp(−‖c − c'‖² / (2 l²))` over `points`, keeping the
/// fewest modes whose eigenvalues reach `variance_target` of the trace.
pub fn build_kle(points: &[[f64; 2]], lengthscale: f64, variance_target: f64) -> Result<KLExpansion> {
    if points.len() < 2 {
        return Err(Error::Domain("KLE needs at least two points".into()));
    }
    if !(lengthscale > 0.0) || !lengthscale.is_finite() {
        return Err(Error::Domain(format!("field lengthscale must be positive, got {lengthscale}")));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Domain(format!("variance target must lie in (0,1], got {variance_target}")));
    }
    let n = points.len();
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let d2 = (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
        (-d2 * inv).exp()
    });
    let eig = SymmetricEigen::try_new(cov, 1e-14, 10_000)
        .ok_or_else(|| Error::NonConvergence("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let trace = n as f64;
    let mut cumulative = 0.0;
    let mut k = 0;
    while k < n && cumulative / trace < variance_target {
        cumulative += eigenvalues[k];
        k += 1;
    }
    let mut modes = vec![0.0; n * k];
    for (col, &src) in order.iter().take(k).enumerate() {
        let s = eigenvalues[col].sqrt();
        let v = eig.eigenvectors.column(src);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for p in 0..n {
            modes[p * k + col] = sign * s * v[p];
        }
    }
    Ok(KLExpansion {
        points: points.to_vec(),
        eigenvalues,
        modes,
        k,
        variance_fraction: cumulative / trace,
        lengthscale,
    })
}
