use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::WalkKernel;

/// Largest torus volume the simulator accepts (sites are stored as u32).
pub const MAX_VOLUME: usize = 1 << 28;

/// The periodic box (Z / side Z)^d standing in for Z^d. Site 0 is the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Torus {
    dim: usize,
    side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("torus dimension must be >= 1".into()));
        }
        if side < 3 || side % 2 == 0 {
            return Err(Error::InvalidParams(format!("torus side must be odd and >= 3, got {side}")));
        }
        let volume = (side as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if volume > MAX_VOLUME as u128 {
            return Err(Error::InvalidParams(format!(
                "torus {side}^{dim} exceeds the volume limit of {MAX_VOLUME} sites"
            )));
        }
        Ok(Self { dim, side })
    }

    /// Smallest odd side 2 ceil(m sqrt(lambda_max(Q) t_total)) + 1, and never
    /// less than the kernel diameter plus one.
    pub fn min_side(kernel: &WalkKernel, t_total: f64, multiplier: f64) -> Result<usize> {
        let lambda = kernel.covariance()?.max_eigenvalue();
        let half = (multiplier * (lambda * t_total.max(0.0)).sqrt()).ceil() as usize;
        let half = half.max(kernel.range() as usize).max(1);
        Ok(2 * half + 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Flat index of the site x, wrapped onto the torus.
    pub fn index(&self, x: &[i64]) -> usize {
        let l = self.side as i64;
        x.iter().fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(l) as usize)
    }

    /// Representative of a flat index with coordinates in [-(side-1)/2, (side-1)/2].
    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let half = (self.side / 2) as i64;
        let mut x = vec![0; self.dim];
        for c in x.iter_mut().rev() {
            let r = (idx % self.side) as i64;
            *c = if r > half { r - self.side as i64 } else { r };
            idx /= self.side;
        }
        x
    }

    /// Row-major table: entry `site * offsets.len() + j` is site + offsets[j].
    pub(crate) fn neighbor_table(&self, offsets: &[Vec<i64>]) -> Vec<u32> {
        let n = self.volume();
        let mut table = Vec::with_capacity(n * offsets.len());
        for site in 0..n {
            let x = self.coords(site);
            for z in offsets {
                let y: Vec<i64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
                table.push(self.index(&y) as u32);
            }
        }
        table
    }
}

/// Occupation counts on a torus, stored sparsely (zero sites omitted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    torus: Torus,
    counts: BTreeMap<u32, u32>,
    total: u64,
}

impl Configuration {
    pub fn empty(torus: Torus) -> Self {
        Self {
            torus,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub(crate) fn from_dense(torus: Torus, dense: &[u32]) -> Self {
        let counts: BTreeMap<u32, u32> = dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
            .collect();
        let total = counts.values().map(|&c| c as u64).sum();
        Self { torus, counts, total }
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count at the site with the given coordinates (wrapped).
    pub fn get(&self, x: &[i64]) -> u32 {
        self.count_at(self.torus.index(x))
    }

    pub fn count_at(&self, index: usize) -> u32 {
        self.counts.get(&(index as u32)).copied().unwrap_or(0)
    }

    /// Sets the count at a site, keeping the sparse and cached invariants.
    pub fn set(&mut self, x: &[i64], count: u32) {
        let idx = self.torus.index(x) as u32;
        let old = self.counts.remove(&idx).unwrap_or(0);
        if count > 0 {
            self.counts.insert(idx, count);
        }
        self.total = self.total - old as u64 + count as u64;
    }

    /// Occupied sites as `(flat index, count)` in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i as usize, c))
    }
}
