//! Convolution powers a^{(k)}(0, x) of discrete jump laws.
//!
//! Both engines keep the current k-step distribution and extend the series
//! of every tracked site together, so repeated queries at growing times only
//! pay for the new steps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Values below this are flushed to zero to keep subnormals out of the loops.
const FLUSH: f64 = 1e-290;

/// One-dimensional convolution powers of a finite symmetric law.
#[derive(Debug, Clone)]
pub(crate) struct AxisEngine {
    jumps: Vec<(i64, f64)>,
    range: i64,
    steps: usize,
    /// Distribution after `steps` steps on [-steps*range, steps*range].
    current: Vec<f64>,
    lo: usize,
    hi: usize,
    tracked: BTreeMap<i64, Vec<f64>>,
}

impl AxisEngine {
    pub fn new(jumps: Vec<(i64, f64)>) -> Self {
        let range = jumps.iter().map(|(z, _)| z.abs()).max().unwrap_or(1);
        let mut engine = Self {
            jumps,
            range,
            steps: 0,
            current: vec![1.0],
            lo: 0,
            hi: 1,
            tracked: BTreeMap::new(),
        };
        engine.tracked.insert(0, vec![1.0]);
        engine
    }

    pub fn range(&self) -> i64 {
        self.range
    }

    fn reset(&mut self) {
        self.steps = 0;
        self.current = vec![1.0];
        self.lo = 0;
        self.hi = 1;
        for (x, series) in self.tracked.iter_mut() {
            series.clear();
            series.push(if *x == 0 { 1.0 } else { 0.0 });
        }
    }

    fn value_at(&self, x: i64) -> f64 {
        let idx = x + self.steps as i64 * self.range;
        if idx < self.lo as i64 || idx >= self.hi as i64 {
            0.0
        } else {
            self.current[idx as usize]
        }
    }

    fn step(&mut self) {
        let r = self.range as usize;
        let mut next = vec![0.0; self.current.len() + 2 * r];
        for i in self.lo..self.hi {
            let v = self.current[i];
            if v == 0.0 {
                continue;
            }
            for &(z, p) in &self.jumps {
                next[(i as i64 + self.range + z) as usize] += v * p;
            }
        }
        let mut lo = self.lo;
        let mut hi = self.hi + 2 * r;
        while lo < hi && next[lo] < FLUSH {
            next[lo] = 0.0;
            lo += 1;
        }
        while hi > lo && next[hi - 1] < FLUSH {
            next[hi - 1] = 0.0;
            hi -= 1;
        }
        self.current = next;
        self.lo = lo;
        self.hi = hi;
        self.steps += 1;
        let tracked: Vec<i64> = self.tracked.keys().copied().collect();
        for x in tracked {
            let v = self.value_at(x);
            self.tracked.get_mut(&x).expect("tracked").push(v);
        }
    }

    /// Ensures p_k(x) is available for k < `len`.
    pub fn prepare(&mut self, x: i64, len: usize) {
        if !self.tracked.contains_key(&x) {
            let target = self.steps;
            self.tracked.insert(x, Vec::new());
            self.reset();
            for _ in 0..target {
                self.step();
            }
        }
        while self.steps + 1 < len {
            self.step();
        }
    }

    /// p_k(x) for k below the prepared length.
    pub fn series(&self, x: i64) -> &[f64] {
        &self.tracked[&x]
    }

    /// Full distribution sum_k w_k p_k(.) over the window, on [-radius, radius].
    pub fn mixture(&self, start: usize, weights: &[f64]) -> (i64, Vec<f64>) {
        let end = start + weights.len();
        let radius = (end.saturating_sub(1)) as i64 * self.range;
        let mut out = vec![0.0; 2 * radius as usize + 1];
        let mut scratch = Self::new(self.jumps.clone());
        scratch.tracked.clear();
        for k in 0..end {
            if k >= start {
                let w = weights[k - start];
                let offset = radius - k as i64 * self.range;
                for i in scratch.lo..scratch.hi {
                    out[(i as i64 + offset) as usize] += w * scratch.current[i];
                }
            }
            if k + 1 < end {
                scratch.step();
            }
        }
        (radius, out)
    }
}

/// Dense box representation of a function on Z^d supported in the cube
/// [-radius, radius]^d.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    dim: usize,
    radius: i64,
    values: Vec<f64>,
}

impl LatticeField {
    pub(crate) fn zeros(dim: usize, radius: i64) -> Self {
        let side = (2 * radius + 1) as usize;
        Self {
            dim,
            radius,
            values: vec![0.0; side.pow(dim as u32)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn side(&self) -> i64 {
        2 * self.radius + 1
    }

    fn index(&self, x: &[i64]) -> Option<usize> {
        let mut idx = 0i64;
        for &c in x {
            if c.abs() > self.radius {
                return None;
            }
            idx = idx * self.side() + (c + self.radius);
        }
        Some(idx as usize)
    }

    /// Site of a flat index.
    pub fn site(&self, mut idx: usize) -> Vec<i64> {
        let side = self.side() as usize;
        let mut x = vec![0; self.dim];
        for c in x.iter_mut().rev() {
            *c = (idx % side) as i64 - self.radius;
            idx /= side;
        }
        x
    }

    /// Value at `x`; zero outside the box.
    pub fn get(&self, x: &[i64]) -> f64 {
        self.index(x).map_or(0.0, |i| self.values[i])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Iterator over `(site, value)` for nonzero entries.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (self.site(i), v))
    }

    /// Outer product of one-dimensional fields (each `(radius, values)`).
    pub(crate) fn outer(parts: &[(i64, Vec<f64>)]) -> Self {
        let radius = parts.iter().map(|(r, _)| *r).max().unwrap_or(0);
        let mut field = Self::zeros(parts.len(), radius);
        let n = field.values.len();
        for idx in 0..n {
            let x = field.site(idx);
            let mut v = 1.0;
            for (c, (r, vals)) in x.iter().zip(parts) {
                if c.abs() > *r {
                    v = 0.0;
                    break;
                }
                v *= vals[(c + r) as usize];
            }
            field.values[idx] = v;
        }
        field
    }
}

/// d-dimensional convolution powers on a growing dense box.
#[derive(Debug, Clone)]
pub(crate) struct GridEngine {
    dim: usize,
    jumps: Vec<(Vec<i64>, f64)>,
    range: i64,
    max_cells: usize,
    steps: usize,
    current: LatticeField,
    tracked: BTreeMap<Vec<i64>, Vec<f64>>,
}

impl GridEngine {
    pub fn new(dim: usize, jumps: Vec<(Vec<i64>, f64)>, max_cells: usize) -> Self {
        let range = jumps
            .iter()
            .flat_map(|(z, _)| z.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(1);
        let mut current = LatticeField::zeros(dim, 0);
        current.values[0] = 1.0;
        let mut tracked = BTreeMap::new();
        tracked.insert(vec![0; dim], vec![1.0]);
        Self {
            dim,
            jumps,
            range,
            max_cells,
            steps: 0,
            current,
            tracked,
        }
    }

    fn cells_for(&self, steps: usize) -> usize {
        let side = 2 * steps as u128 * self.range as u128 + 1;
        side.saturating_pow(self.dim as u32).min(usize::MAX as u128) as usize
    }

    fn check_budget(&self, steps: usize) -> Result<()> {
        let cells = self.cells_for(steps);
        if cells > self.max_cells {
            return Err(Error::ToleranceNotReached {
                what: "transition probability",
                tol: 0.0,
                detail: format!(
                    "{steps} convolution steps need {cells} cells, over the budget of {}",
                    self.max_cells
                ),
            });
        }
        Ok(())
    }

    fn step(&mut self) {
        let next_radius = self.current.radius + self.range;
        let mut next = LatticeField::zeros(self.dim, next_radius);
        let side_old = self.current.side();
        let side_new = next.side();
        // Flat offset of each jump in the new box.
        let jump_offsets: Vec<(i64, f64)> = self
            .jumps
            .iter()
            .map(|(z, p)| (z.iter().fold(0i64, |acc, &c| acc * side_new + c), *p))
            .collect();
        let shift = self.range;
        for (i, &v) in self.current.values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            // Re-embed the old index into the larger box.
            let mut rem = i as i64;
            let mut base = 0i64;
            let mut mult = 1i64;
            for _ in 0..self.dim {
                let c = rem % side_old;
                rem /= side_old;
                base += (c + shift) * mult;
                mult *= side_new;
            }
            for &(off, p) in &jump_offsets {
                next.values[(base + off) as usize] += v * p;
            }
        }
        for v in next.values.iter_mut() {
            if *v < FLUSH {
                *v = 0.0;
            }
        }
        self.current = next;
        self.steps += 1;
        let keys: Vec<Vec<i64>> = self.tracked.keys().cloned().collect();
        for x in keys {
            let v = self.current.get(&x);
            self.tracked.get_mut(&x).expect("tracked").push(v);
        }
    }

    fn reset(&mut self) {
        self.steps = 0;
        self.current = LatticeField::zeros(self.dim, 0);
        self.current.values[0] = 1.0;
        for (x, series) in self.tracked.iter_mut() {
            series.clear();
            series.push(if x.iter().all(|&c| c == 0) { 1.0 } else { 0.0 });
        }
    }

    pub fn prepare(&mut self, x: &[i64], len: usize) -> Result<()> {
        self.check_budget(len.saturating_sub(1))?;
        if !self.tracked.contains_key(x) {
            let target = self.steps;
            self.tracked.insert(x.to_vec(), Vec::new());
            self.reset();
            for _ in 0..target {
                self.step();
            }
        }
        while self.steps + 1 < len {
            self.step();
        }
        Ok(())
    }

    pub fn series(&self, x: &[i64]) -> &[f64] {
        &self.tracked[x]
    }

    /// sum_k w_k a^{(k)}(0, .) over k in `start..start + weights.len()`.
    pub fn mixture(&self, start: usize, weights: &[f64]) -> Result<LatticeField> {
        let end = start + weights.len();
        self.check_budget(end.saturating_sub(1))?;
        let mut scratch = Self::new(self.dim, self.jumps.clone(), self.max_cells);
        scratch.tracked.clear();
        let radius = end.saturating_sub(1) as i64 * self.range;
        let mut out = LatticeField::zeros(self.dim, radius);
        for k in 0..end {
            if k >= start {
                let w = weights[k - start];
                for (x, v) in scratch.current.iter_nonzero() {
                    let idx = out.index(&x).expect("inside the output box");
                    out.values[idx] += w * v;
                }
            }
            if k + 1 < end {
                scratch.step();
            }
        }
        Ok(out)
    }
}
