use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupation::EnsembleSummary;
use crate::walk::InitialLaw;

/// Default z-score gate.
pub const DEFAULT_GATE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonTarget {
    PrelimitExact,
    LimitModel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonMeta {
    pub n: Option<f64>,
    pub replicates: Option<usize>,
    pub init: Option<InitialLaw>,
    pub dim: Option<usize>,
}

/// Entrywise z-scores of an estimated matrix against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub target: ComparisonTarget,
    pub grid: Vec<f64>,
    pub estimate: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub max_abs_z: f64,
    pub gate: f64,
    pub pass: bool,
    pub meta: ComparisonMeta,
}

fn check_square(name: &str, m: &[Vec<f64>], k: usize) -> Result<()> {
    if m.len() != k || m.iter().any(|r| r.len() != k) {
        return Err(Error::GridMismatch(format!("{name} is not {k}x{k}")));
    }
    Ok(())
}

/// z = (estimate - reference) / se entrywise, gated at `gate`.
///
/// A zero SE is only accepted where estimate and reference agree exactly.
pub fn compare(
    target: ComparisonTarget,
    grid: &[f64],
    estimate: &[Vec<f64>],
    reference: &[Vec<f64>],
    se: &[Vec<f64>],
    gate: f64,
    meta: ComparisonMeta,
) -> Result<ComparisonReport> {
    let k = grid.len();
    check_square("estimate", estimate, k)?;
    check_square("reference", reference, k)?;
    check_square("standard errors", se, k)?;
    let mut z = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let diff = estimate[i][j] - reference[i][j];
            let s = se[i][j];
            z[i][j] = if diff == 0.0 {
                0.0
            } else if s > 0.0 {
                diff / s
            } else {
                return Err(Error::InvalidInput(format!("zero standard error at ({i}, {j}) with a nonzero difference")));
            };
            if !z[i][j].is_finite() {
                return Err(Error::InvalidInput(format!("non-finite z-score at ({i}, {j})")));
            }
        }
    }
    let max_abs_z = z.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ComparisonReport {
        target,
        grid: grid.to_vec(),
        estimate: estimate.to_vec(),
        reference: reference.to_vec(),
        se: se.to_vec(),
        z,
        max_abs_z,
        gate,
        pass: max_abs_z <= gate,
        meta,
    })
}

/// Compares an ensemble's covariance matrix with `reference` using its jackknife SEs.
pub fn compare_ensemble(
    summary: &EnsembleSummary,
    reference: &[Vec<f64>],
    target: ComparisonTarget,
    gate: f64,
) -> Result<ComparisonReport> {
    let meta = ComparisonMeta {
        n: Some(summary.n),
        replicates: Some(summary.moments.count),
        init: Some(summary.init),
        dim: Some(summary.dim),
    };
    compare(
        target,
        &summary.grid,
        &summary.moments.cov,
        reference,
        &summary.moments.cov_se,
        gate,
        meta,
    )
}
