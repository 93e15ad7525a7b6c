use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Site branching rate sigma(k) as a function of the local particle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchingRate {
    /// sigma(k) = rho k: every particle branches independently at rate rho.
    Independent { rho: f64 },
    /// sigma(k) = values[k] for k < len, continued affinely with `slope`.
    Tabulated { values: Vec<f64>, slope: f64 },
}

impl BranchingRate {
    pub fn independent(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidRate(format!(
                "rho must be finite and > 0 (sigma must not vanish), got {rho}"
            )));
        }
        Ok(Self::Independent { rho })
    }

    /// Table sigma(0..len); the default slope past the table is the last
    /// increment clamped at zero, so a trailing plateau stays flat.
    pub fn tabulated(values: Vec<f64>, slope: Option<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidRate("table needs sigma(0) and sigma(1) at least".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidRate(format!("sigma(0) must be 0, got {}", values[0])));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidRate(format!("table entries must be finite and >= 0, got {v}")));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidRate("sigma is identically zero".into()));
        }
        let n = values.len();
        let slope = slope.unwrap_or((values[n - 1] - values[n - 2]).max(0.0));
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::InvalidRate(format!("slope must be finite and >= 0, got {slope}")));
        }
        Ok(Self::Tabulated { values, slope })
    }

    /// Checks the invariants of a deserialized rate.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Independent { rho } => Self::independent(*rho).map(|_| ()),
            Self::Tabulated { values, slope } => {
                Self::tabulated(values.clone(), Some(*slope)).map(|_| ())
            }
        }
    }

    pub fn sigma(&self, k: u32) -> f64 {
        match self {
            Self::Independent { rho } => rho * k as f64,
            Self::Tabulated { values, slope } => {
                let k = k as usize;
                match values.get(k) {
                    Some(&v) => v,
                    None => {
                        let last = values.len() - 1;
                        values[last] + slope * (k - last) as f64
                    }
                }
            }
        }
    }

    /// Smallest c with |sigma(m) - sigma(n)| <= c |m - n|.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Independent { rho } => *rho,
            Self::Tabulated { values, slope } => values
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(*slope, f64::max),
        }
    }

    /// Smallest c2 with sigma(k) <= c2 k for all k >= 1.
    pub fn linear_bound(&self) -> f64 {
        match self {
            Self::Independent { rho } => *rho,
            Self::Tabulated { values, slope } => values
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, v)| v / k as f64)
                .fold(*slope, f64::max),
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, Self::Independent { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_table() {
        let r = BranchingRate::tabulated((0..=6).map(|k: u32| k.min(5) as f64).collect(), None).unwrap();
        assert_eq!(r.sigma(3), 3.0);
        assert_eq!(r.sigma(5), 5.0);
        assert_eq!(r.sigma(40), 5.0);
        assert_eq!(r.lipschitz(), 1.0);
        assert_eq!(r.linear_bound(), 1.0);
    }

    #[test]
    fn affine_extension() {
        let r = BranchingRate::tabulated(vec![0.0, 2.0, 3.0], None).unwrap();
        assert_eq!(r.sigma(4), 5.0);
        assert_eq!(r.lipschitz(), 2.0);
        assert_eq!(r.linear_bound(), 2.0);
        let flat = BranchingRate::tabulated(vec![0.0, 2.0, 1.0], None).unwrap();
        assert_eq!(flat.sigma(10), 1.0);
    }

    #[test]
    fn invalid_rates() {
        assert!(BranchingRate::independent(0.0).is_err());
        assert!(BranchingRate::independent(f64::NAN).is_err());
        assert!(BranchingRate::tabulated(vec![1.0, 2.0], None).is_err());
        assert!(BranchingRate::tabulated(vec![0.0, 0.0, 0.0], None).is_err());
        assert!(BranchingRate::tabulated(vec![0.0, -1.0], None).is_err());
        assert!(BranchingRate::tabulated(vec![0.0, 1.0], Some(-1.0)).is_err());
    }

    #[test]
    fn independent_is_linear() {
        let r = BranchingRate::independent(0.5).unwrap();
        assert_eq!(r.sigma(4), 2.0);
        assert_eq!(r.linear_bound(), 0.5);
    }
}
