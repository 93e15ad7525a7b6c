use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::{norming, InitialLaw};

/// X^N on a time grid: (int_0^{N t} xi_s(0) ds - theta N t) / h_d(N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationPath {
    pub n: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub init: Option<InitialLaw>,
    pub dim: usize,
    pub seed: Option<u64>,
}

/// Renormalizes occupation integrals `raw` recorded at `raw_times`, which
/// must equal N t_i for the grid points t_i.
pub fn renormalize(
    raw_times: &[f64],
    raw: &[f64],
    grid: &[f64],
    n: f64,
    theta: f64,
    dim: usize,
) -> Result<OccupationPath> {
    if raw.len() != grid.len() || raw_times.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} raw values at {} times for a grid of {} points",
            raw.len(),
            raw_times.len(),
            grid.len()
        )));
    }
    for (&s, &t) in raw_times.iter().zip(grid) {
        let target = n * t;
        if (s - target).abs() > 1e-9 * target.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("raw time {s} is not N t = {target}")));
        }
    }
    let h = norming(dim, n)?;
    let values = raw
        .iter()
        .zip(raw_times)
        .map(|(&i, &s)| if s == 0.0 { 0.0 } else { (i - theta * s) / h })
        .collect::<Vec<f64>>();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite occupation integral".into()));
    }
    Ok(OccupationPath {
        n,
        grid: grid.to_vec(),
        values,
        init: None,
        dim,
        seed: None,
    })
}
