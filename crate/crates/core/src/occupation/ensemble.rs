use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::path::renormalize;
use crate::brw::{EventCounters, InitSpec, SimParams, Simulator};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, stream};
use crate::walk::InitialLaw;

/// Ensembles with a larger fraction of failed replicates are marked invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// One successful replicate at one rung of the N ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: u64,
    pub n: f64,
    /// int_0^{N t_i} xi_s(0) ds.
    pub raw: Vec<f64>,
    /// X^N_{t_i}.
    pub values: Vec<f64>,
    /// Origin counters over [0, N t_max].
    pub counters: EventCounters,
    pub events: u64,
    pub final_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: u64,
    pub n: f64,
    pub error: String,
}

pub type ReplicateOutcome = std::result::Result<ReplicateRecord, ReplicateFailure>;

/// Sample moments of replicate vectors with jackknife standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub cov_se: Vec<Vec<f64>>,
    /// m4 / m2^2 per coordinate; `None` for a constant coordinate.
    pub standardized_fourth: Vec<Option<f64>>,
}

/// Mean, unbiased covariance and standardized fourth moments of `rows`.
///
/// Covariance SEs are the jackknife over rows, using the closed form of the
/// leave-one-out estimate: removing row k changes the centred cross-product
/// sum S by -n/(n-1) dx_k dy_k.
pub fn sample_moments(rows: &[Vec<f64>]) -> Result<SampleMoments> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewReplicates { got: n, need: 2 });
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::GridMismatch("replicate vectors differ in length".into()));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; k];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let dev: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = dev.iter().map(|d| d[i] * d[j]).sum();
            let c = s / (nf - 1.0);
            let se = if n >= 3 {
                let loo: Vec<f64> = dev
                    .iter()
                    .map(|d| (s - nf / (nf - 1.0) * d[i] * d[j]) / (nf - 2.0))
                    .collect();
                let bar = loo.iter().sum::<f64>() / nf;
                ((nf - 1.0) / nf * loo.iter().map(|l| (l - bar).powi(2)).sum::<f64>()).sqrt()
            } else {
                0.0
            };
            cov[i][j] = c;
            cov[j][i] = c;
            cov_se[i][j] = se;
            cov_se[j][i] = se;
        }
    }
    let mean_se = (0..k).map(|i| (cov[i][i] / nf).sqrt()).collect();
    let standardized_fourth = (0..k)
        .map(|i| {
            let m2 = dev.iter().map(|d| d[i].powi(2)).sum::<f64>() / nf;
            let m4 = dev.iter().map(|d| d[i].powi(4)).sum::<f64>() / nf;
            (m2 > 0.0).then(|| m4 / (m2 * m2))
        })
        .collect();
    Ok(SampleMoments {
        count: n,
        mean,
        mean_se,
        cov,
        cov_se,
        standardized_fourth,
    })
}

/// Per-N summary of an ensemble of renormalized paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub params_hash: String,
    pub n: f64,
    pub grid: Vec<f64>,
    pub dim: usize,
    pub theta: f64,
    pub init: InitialLaw,
    pub torus_side: usize,
    pub requested: usize,
    pub failures: Vec<ReplicateFailure>,
    pub excluded_fraction: f64,
    pub valid: bool,
    pub moments: SampleMoments,
}

/// An ensemble summary with the replicate records it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub summary: EnsembleSummary,
    pub records: Vec<ReplicateRecord>,
}

impl EnsembleRun {
    pub fn paths(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.values.clone()).collect()
    }
}

/// Hex SHA-256 of the canonical JSON form of `value` (object keys sorted).
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("serializable").to_string();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn initial_law(params: &SimParams) -> InitialLaw {
    match params.init {
        InitSpec::Poisson => InitialLaw::Poisson,
        InitSpec::Burnin { .. } => InitialLaw::Equilibrium,
    }
}

/// Parameters for one rung: horizon N t_max, record grid N t_i, torus refitted.
pub fn rung_params(base: &SimParams, n: f64, grid: &[f64]) -> Result<SimParams> {
    check_grid(grid)?;
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidParams(format!("N must be finite and > 0, got {n}")));
    }
    let mut p = base.clone();
    p.record_grid = grid.iter().map(|t| n * t).collect();
    p.horizon = *p.record_grid.last().expect("nonempty grid");
    p.fit_torus()?;
    p.seed = derive_seed(base.seed, n.to_bits());
    p.validate()?;
    Ok(p)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) || !(grid[0] >= 0.0) {
        return Err(Error::GridMismatch("grid must be nonempty, increasing and >= 0".into()));
    }
    Ok(())
}

/// Runs replicate `index` of a rung prepared by [`rung_params`]. Simulation
/// errors become failure records.
pub fn run_replicate(sim: &mut Simulator, index: u64, n: f64, grid: &[f64]) -> ReplicateOutcome {
    let fail = |e: Error| ReplicateFailure {
        index,
        n,
        error: e.to_string(),
    };
    let p = sim.params().clone();
    let mut rng = stream(p.seed, index);
    sim.seed_initial(&mut rng).map_err(fail)?;
    let traj = sim.run(&mut rng).map_err(fail)?;
    let raw = traj.occupation_integrals(&p.record_grid).map_err(fail)?;
    let path = renormalize(&p.record_grid, &raw, grid, n, p.theta, p.kernel.dim()).map_err(fail)?;
    let counters = traj.counters(p.horizon, Some(&p.rate)).map_err(fail)?;
    Ok(ReplicateRecord {
        index,
        n,
        raw,
        values: path.values,
        counters,
        events: traj.events,
        final_total: traj.final_total,
    })
}

/// Summarizes the outcomes of one rung; order of `outcomes` is the index order.
pub fn summarize(params: &SimParams, n: f64, grid: &[f64], outcomes: &[ReplicateOutcome]) -> Result<EnsembleSummary> {
    let records: Vec<&ReplicateRecord> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures: Vec<ReplicateFailure> = outcomes.iter().filter_map(|o| o.as_ref().err().cloned()).collect();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.values.clone()).collect();
    let moments = sample_moments(&rows)?;
    let excluded_fraction = failures.len() as f64 / outcomes.len() as f64;
    Ok(EnsembleSummary {
        params_hash: content_hash(params),
        n,
        grid: grid.to_vec(),
        dim: params.kernel.dim(),
        theta: params.theta,
        init: initial_law(params),
        torus_side: params.torus_side,
        requested: outcomes.len(),
        failures,
        excluded_fraction,
        valid: excluded_fraction <= MAX_FAILURE_FRACTION,
        moments,
    })
}

/// Builds one ensemble per N in `ladder`, running replicates on `workers`
/// threads. Replicate i of rung N draws from stream i of a seed derived from
/// (params.seed, N), so results do not depend on the worker count.
pub fn build_ensemble(
    params: &SimParams,
    ladder: &[f64],
    grid: &[f64],
    replicates: usize,
    workers: usize,
) -> Result<Vec<EnsembleRun>> {
    if replicates < 2 {
        return Err(Error::TooFewReplicates { got: replicates, need: 2 });
    }
    ladder
        .iter()
        .map(|&n| {
            let p = rung_params(params, n, grid)?;
            let proto = Simulator::new(p.clone())?;
            let outcomes = map_indexed(replicates, workers, || proto.clone(), |sim, i| {
                run_replicate(sim, i as u64, n, grid)
            });
            let summary = summarize(&p, n, grid, &outcomes)?;
            let records = outcomes.into_iter().filter_map(|o| o.ok()).collect();
            Ok(EnsembleRun { summary, records })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_closed_form_matches_brute_force() {
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let x = (i as f64 * 1.7).sin();
                vec![x, x * x + 0.3 * (i as f64).cos()]
            })
            .collect();
        let m = sample_moments(&rows).unwrap();
        let n = rows.len() as f64;
        let cov01 = |rs: &[Vec<f64>]| {
            let k = rs.len() as f64;
            let a = rs.iter().map(|r| r[0]).sum::<f64>() / k;
            let b = rs.iter().map(|r| r[1]).sum::<f64>() / k;
            rs.iter().map(|r| (r[0] - a) * (r[1] - b)).sum::<f64>() / (k - 1.0)
        };
        let loo: Vec<f64> = (0..rows.len())
            .map(|k| {
                let rest: Vec<Vec<f64>> =
                    rows.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, r)| r.clone()).collect();
                cov01(&rest)
            })
            .collect();
        let bar = loo.iter().sum::<f64>() / n;
        let se = ((n - 1.0) / n * loo.iter().map(|l| (l - bar).powi(2)).sum::<f64>()).sqrt();
        assert!((m.cov[0][1] - cov01(&rows)).abs() < 1e-15);
        assert!((m.cov_se[0][1] - se).abs() < 1e-14);
    }

    #[test]
    fn hash_ignores_key_order_in_json() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"b": [1, 2], "a": 1}"#).unwrap();
        assert_eq!(content_hash(&a), content_hash(&b));
    }
}
