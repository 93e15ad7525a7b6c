use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry a(0, z) of the jump law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub offset: Vec<i64>,
    pub prob: f64,
}

/// Symmetric, irreducible, finite-range jump law a(0, .) on Z^d with
/// total jump rate 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkKernel {
    dim: usize,
    jumps: Vec<Jump>,
    name: String,
}

/// Restriction of an axis-aligned kernel to one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AxisKernel {
    pub axis: usize,
    /// Total probability of jumps along this axis.
    pub weight: f64,
    /// Conditional one-dimensional jump law.
    pub jumps: Vec<(i64, f64)>,
}

const SYMMETRY_RTOL: f64 = 1e-12;

impl WalkKernel {
    /// Validates and normalizes a list of `(offset, weight)` pairs.
    ///
    /// Duplicate offsets are merged; weights are normalized to sum to one.
    pub fn build(name: impl Into<String>, spec: &[(Vec<i64>, f64)]) -> Result<Self> {
        let first = spec
            .first()
            .ok_or_else(|| Error::InvalidKernel("empty jump list".into()))?;
        let dim = first.0.len();
        if dim == 0 {
            return Err(Error::InvalidKernel("offsets must have dimension >= 1".into()));
        }
        let mut merged: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (offset, weight) in spec {
            if offset.len() != dim {
                return Err(Error::InvalidKernel(format!(
                    "offset {offset:?} has dimension {} but the first has {dim}",
                    offset.len()
                )));
            }
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "weight of {offset:?} must be finite and > 0, got {weight}"
                )));
            }
            if offset.iter().all(|&c| c == 0) {
                return Err(Error::ZeroOffsetPresent);
            }
            *merged.entry(offset.clone()).or_insert(0.0) += weight;
        }
        for (offset, &w) in &merged {
            let mirror: Vec<i64> = offset.iter().map(|c| -c).collect();
            match merged.get(&mirror) {
                Some(&wm) if (w - wm).abs() <= SYMMETRY_RTOL * w.max(wm) => {}
                _ => {
                    return Err(Error::AsymmetricKernel {
                        offset: offset.clone(),
                    })
                }
            }
        }
        let offsets: Vec<Vec<i64>> = merged.keys().cloned().collect();
        let index = lattice_index(dim, &offsets);
        if index != 1 {
            return Err(Error::NotIrreducible { dim, index });
        }
        let total: f64 = merged.values().sum();
        let jumps = merged
            .into_iter()
            .map(|(offset, w)| Jump {
                offset,
                prob: w / total,
            })
            .collect();
        Ok(Self {
            dim,
            jumps,
            name: name.into(),
        })
    }

    /// Nearest-neighbour simple random walk on Z^d.
    pub fn simple(dim: usize) -> Self {
        let mut spec = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [-1, 1] {
                let mut z = vec![0; dim];
                z[i] = s;
                spec.push((z, 1.0));
            }
        }
        Self::build(format!("srw-z{dim}"), &spec).expect("simple random walk is a valid kernel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Largest sup-norm of an offset in the support.
    pub fn range(&self) -> i64 {
        self.jumps
            .iter()
            .flat_map(|j| j.offset.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Q_ij = sum_z a(0,z) z_i z_j.
    pub fn covariance(&self) -> Result<CovMatrix> {
        let d = self.dim;
        let mut q = vec![0.0; d * d];
        for jump in &self.jumps {
            for i in 0..d {
                for j in 0..d {
                    q[i * d + j] += jump.prob * (jump.offset[i] * jump.offset[j]) as f64;
                }
            }
        }
        CovMatrix::from_entries(d, q)
    }

    /// Splits the kernel into independent coordinate walks when every jump
    /// moves along a single axis.
    pub(crate) fn axis_decomposition(&self) -> Option<Vec<AxisKernel>> {
        let mut axes: Vec<AxisKernel> = (0..self.dim)
            .map(|axis| AxisKernel {
                axis,
                weight: 0.0,
                jumps: Vec::new(),
            })
            .collect();
        for jump in &self.jumps {
            let mut moving = jump.offset.iter().enumerate().filter(|(_, &c)| c != 0);
            let (axis, &step) = moving.next()?;
            if moving.next().is_some() {
                return None;
            }
            axes[axis].weight += jump.prob;
            axes[axis].jumps.push((step, jump.prob));
        }
        for ax in &mut axes {
            let w = ax.weight;
            for (_, p) in &mut ax.jumps {
                *p /= w;
            }
        }
        Some(axes)
    }
}

/// Index of the sublattice of Z^d spanned by `vectors` (0 when rank < d),
/// via integer row reduction to triangular form.
fn lattice_index(dim: usize, vectors: &[Vec<i64>]) -> u128 {
    let mut rows: Vec<Vec<i128>> = vectors
        .iter()
        .map(|v| v.iter().map(|&c| c as i128).collect())
        .collect();
    let mut index: u128 = 1;
    let mut pivot_row = 0;
    for col in 0..dim {
        loop {
            // Row (at or below the pivot) with the smallest nonzero entry in this column.
            let best = (pivot_row..rows.len())
                .filter(|&r| rows[r][col] != 0)
                .min_by_key(|&r| rows[r][col].unsigned_abs());
            let Some(best) = best else {
                return 0;
            };
            rows.swap(pivot_row, best);
            let p = rows[pivot_row][col];
            let mut done = true;
            for r in (pivot_row + 1)..rows.len() {
                let q = rows[r][col] / p;
                if q != 0 {
                    for c in col..dim {
                        rows[r][c] -= q * rows[pivot_row][c];
                    }
                }
                if rows[r][col] != 0 {
                    done = false;
                }
            }
            if done {
                index = index.saturating_mul(p.unsigned_abs());
                break;
            }
        }
        pivot_row += 1;
    }
    index
}

/// The covariance matrix Q of the jump law with its determinant and inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    dim: usize,
    entries: Vec<f64>,
    det: f64,
    inverse: Vec<f64>,
}

impl CovMatrix {
    /// Builds Q from row-major entries; fails unless Q is symmetric positive definite.
    pub fn from_entries(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "covariance needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = nalgebra::DMatrix::from_row_slice(dim, dim, &entries);
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::SingularQ);
        }
        let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::SingularQ)?;
        let det: f64 = chol.l().diagonal().iter().map(|x| x * x).product();
        if !(det > 1e-13 * m.amax().powi(dim as i32)) {
            return Err(Error::SingularQ);
        }
        let inv = chol.inverse();
        let inverse = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect();
        Ok(Self {
            dim,
            entries,
            det,
            inverse,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut e = vec![0.0; dim * dim];
        for i in 0..dim {
            e[i * dim + i] = 1.0;
        }
        Self::from_entries(dim, e).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inverse_entry(&self, i: usize, j: usize) -> f64 {
        self.inverse[i * self.dim + j]
    }

    /// x^T Q^{-1} x.
    pub fn inverse_quadratic(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += x[i] * self.inverse[i * d + j] * x[j];
            }
        }
        acc
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *crate::numerics::symmetric_eigenvalues(self.dim, &self.entries)
            .last()
            .expect("dimension >= 1")
    }
}
