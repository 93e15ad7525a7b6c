use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::covariance::LimitCovariance;
use crate::error::{Error, Result};
use crate::numerics::symmetric_eigenvalues;

/// Largest diagonal jitter the sampler may add to factor a Gram matrix.
pub const JITTER_CAP: f64 = 1e-10;

/// Gaussian paths on a grid, one row per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPaths {
    pub grid: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    /// Diagonal jitter added before factorization (zero if none was needed).
    pub jitter: f64,
}

/// Row-major Gram matrix cov(t_i, t_j).
pub fn gram_matrix(model: &LimitCovariance, grid: &[f64]) -> Vec<f64> {
    let k = grid.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let c = model.cov(grid[i], grid[j]);
            g[i * k + j] = c;
            g[j * k + i] = c;
        }
    }
    g
}

pub fn min_eigenvalue(model: &LimitCovariance, grid: &[f64]) -> f64 {
    symmetric_eigenvalues(grid.len(), &gram_matrix(model, grid))[0]
}

/// Draws `n_paths` centred Gaussian vectors with the model's Gram matrix on
/// `grid` by Cholesky factorization. If the matrix does not factor, diagonal
/// jitter is added in decades from 1e-16 up to [`JITTER_CAP`] and reported.
pub fn sample_paths<R: Rng + ?Sized>(
    model: &LimitCovariance,
    grid: &[f64],
    n_paths: usize,
    rng: &mut R,
) -> Result<SampledPaths> {
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DomainError("sampling grid must be positive and strictly increasing".into()));
    }
    let k = grid.len();
    let gram = DMatrix::from_row_slice(k, k, &gram_matrix(model, grid));
    let mut jitter = 0.0;
    let chol = loop {
        let m = &gram + DMatrix::identity(k, k) * jitter;
        if let Some(c) = Cholesky::new(m) {
            break c;
        }
        jitter = if jitter == 0.0 { 1e-16 } else { jitter * 10.0 };
        if jitter > JITTER_CAP * (1.0 + 1e-9) {
            return Err(Error::NotPsd { jitter, cap: JITTER_CAP });
        }
    };
    let l = chol.l();
    let mut z = vec![0.0; k];
    let paths = (0..n_paths)
        .map(|_| {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            (0..k).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect()
        })
        .collect();
    Ok(SampledPaths {
        grid: grid.to_vec(),
        paths,
        jitter,
    })
}
