use serde::{Deserialize, Serialize};

use super::rate::BranchingRate;
use super::sim::{InitSpec, SimParams, Simulator};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, stream};

const SIGMA_EQ_LABEL: u64 = 0x5eed_0001;
const SIGMA_CURVE_LABEL: u64 = 0x5eed_0002;

/// Replicate mean of the origin time average of sigma after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEqEstimate {
    pub mean: f64,
    pub se: f64,
    pub replicates: usize,
    pub t_burn: f64,
    pub t_avg: f64,
    pub torus_side: usize,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates sigma_eq = E[sigma(xi(0))] under the equilibrium by
/// (1/t_avg) int_0^{t_avg} sigma(xi_s(0)) ds after a burn-in of `t_burn`,
/// averaged over independent replicates. The torus is refitted to
/// `t_burn + t_avg`; `params.seed` is the master seed.
pub fn estimate_sigma_eq(
    params: &SimParams,
    t_burn: f64,
    t_avg: f64,
    replicates: usize,
    workers: usize,
) -> Result<SigmaEqEstimate> {
    if params.kernel.dim() < 3 {
        return Err(Error::InvalidParams(format!(
            "the equilibrium needs d >= 3, got d = {}",
            params.kernel.dim()
        )));
    }
    if !(t_burn.is_finite() && t_burn >= 0.0 && t_avg.is_finite() && t_avg > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need t_burn >= 0 and t_avg > 0, got {t_burn} and {t_avg}"
        )));
    }
    if replicates < 2 {
        return Err(Error::TooFewReplicates { got: replicates, need: 2 });
    }
    let mut p = params.clone();
    p.init = InitSpec::Burnin { t_burn: Some(t_burn) };
    p.horizon = t_avg;
    p.record_grid = vec![t_avg];
    p.fit_torus()?;
    p.torus_side = p.torus_side.max(params.torus_side);
    let proto = Simulator::new(p.clone())?;
    let master = derive_seed(params.seed, SIGMA_EQ_LABEL);
    let rate = p.rate.clone();
    let samples = map_indexed(
        replicates,
        workers,
        || proto.clone(),
        |sim, i| -> Result<f64> {
            let mut rng = stream(master, i as u64);
            sim.seed_equilibrium(&mut rng)?;
            let traj = sim.run(&mut rng)?;
            Ok(traj.counters(t_avg, Some(&rate))?.integrated_sigma_at_origin / t_avg)
        },
    )
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_and_se(&samples);
    Ok(SigmaEqEstimate {
        mean,
        se,
        replicates,
        t_burn,
        t_avg,
        torus_side: p.torus_side,
    })
}

/// r -> E[sigma(xi_r(0))] from a Poisson start on a grid, linearly
/// interpolated and held constant beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard errors of the estimated values (zero where exact).
    pub se: Vec<f64>,
}

impl SigmaCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, se: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times.len() != se.len() {
            return Err(Error::InvalidInput("sigma curve needs matching nonempty grids".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times[0] < 0.0 {
            return Err(Error::InvalidInput("sigma curve times must be increasing and >= 0".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("sigma curve values must be finite and >= 0".into()));
        }
        Ok(Self { times, values, se })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
            se: vec![0.0],
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let i = self.times.partition_point(|&t| t <= r);
        if i == 0 {
            return self.values[0];
        }
        if i == self.times.len() {
            return self.values[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (r - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }

    /// Kinks of the interpolant.
    pub fn knots(&self) -> &[f64] {
        &self.times
    }
}

/// E[sigma(xi)] for xi ~ Poisson(theta), the exact curve value at r = 0.
pub fn poisson_mean_sigma(rate: &BranchingRate, theta: f64) -> f64 {
    if rate.is_independent() || theta == 0.0 {
        return rate.sigma(1) * theta;
    }
    let mut p = (-theta).exp();
    let mut sum = 0.0;
    let mut mass = p;
    let mut k = 0u32;
    while 1.0 - mass > 1e-16 || (k as f64) < theta {
        k += 1;
        p *= theta / k as f64;
        mass += p;
        sum += p * rate.sigma(k);
        if k > 100_000 {
            break;
        }
    }
    sum
}

/// Pilot estimate of r -> E[sigma(xi_r(0))] from a Poisson start.
///
/// Each replicate evolves one Poisson field through `grid` and records the
/// spatial mean of sigma over the torus, which has the same expectation as
/// the origin value by translation invariance and much smaller variance.
/// A grid point at r = 0 gets the exact Poisson value.
pub fn estimate_sigma_curve(
    params: &SimParams,
    grid: &[f64],
    replicates: usize,
    workers: usize,
) -> Result<SigmaCurve> {
    if replicates < 2 {
        return Err(Error::TooFewReplicates { got: replicates, need: 2 });
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] < 0.0 {
        return Err(Error::InvalidInput("curve grid must be nonempty, increasing and >= 0".into()));
    }
    let mut p = params.clone();
    p.init = InitSpec::Poisson;
    p.horizon = *grid.last().expect("nonempty grid");
    p.record_grid = vec![p.horizon];
    p.fit_torus()?;
    p.torus_side = p.torus_side.max(params.torus_side);
    let proto = Simulator::new(p.clone())?;
    let master = derive_seed(params.seed, SIGMA_CURVE_LABEL);
    let rows = map_indexed(
        replicates,
        workers,
        || proto.clone(),
        |sim, i| -> Result<Vec<f64>> {
            let mut rng = stream(master, i as u64);
            sim.seed_poisson(&mut rng);
            let mut now = 0.0;
            let mut row = Vec::with_capacity(grid.len());
            for &r in grid {
                sim.advance(r - now, &mut rng)?;
                now = r;
                row.push(sim.mean_site_sigma());
            }
            Ok(row)
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let exact0 = poisson_mean_sigma(&p.rate, p.theta);
    let mut values = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for (j, &r) in grid.iter().enumerate() {
        if r == 0.0 {
            values.push(exact0);
            se.push(0.0);
        } else {
            let col: Vec<f64> = rows.iter().map(|row| row[j]).collect();
            let (m, s) = mean_and_se(&col);
            values.push(m);
            se.push(s);
        }
    }
    SigmaCurve::new(grid.to_vec(), values, se)
}
