use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::{CovMatrix, InitialLaw, WalkIntegrals};

/// Branching input of the limit coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateDescriptor {
    /// sigma(k) = rho k, so sigma_eq = rho theta.
    Independent { rho: f64 },
    /// Estimated sigma_eq of a state-dependent rate.
    StateDependent { sigma_eq: f64 },
}

impl RateDescriptor {
    pub fn sigma_eq(&self, theta: f64) -> f64 {
        match *self {
            Self::Independent { rho } => rho * theta,
            Self::StateDependent { sigma_eq } => sigma_eq,
        }
    }
}

/// Shape of the limit covariance with its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitModel {
    /// K [t^{3/2} + s^{3/2} - |t-s|^{3/2}].
    Fbm34 { k: f64 },
    /// K [t^{3/2} + s^{3/2} - |t-s|^{3/2}/2 - (t+s)^{3/2}/2].
    SubFbm34 { k: f64 },
    /// D (s ^ t).
    Bm { d: f64 },
}

/// Inputs the coefficient was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dim: usize,
    pub theta: f64,
    pub init: InitialLaw,
    pub rate: RateDescriptor,
    pub sigma_eq: f64,
    pub det_q: f64,
    pub walk_integrals: Option<WalkIntegrals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCovariance {
    pub model: LimitModel,
    pub provenance: Option<Provenance>,
}

impl LimitCovariance {
    pub fn fbm34(k: f64) -> Self {
        Self {
            model: LimitModel::Fbm34 { k },
            provenance: None,
        }
    }

    pub fn subfbm34(k: f64) -> Self {
        Self {
            model: LimitModel::SubFbm34 { k },
            provenance: None,
        }
    }

    pub fn bm(d: f64) -> Self {
        Self {
            model: LimitModel::Bm { d },
            provenance: None,
        }
    }

    pub fn coefficient(&self) -> f64 {
        match self.model {
            LimitModel::Fbm34 { k } | LimitModel::SubFbm34 { k } => k,
            LimitModel::Bm { d } => d,
        }
    }

    /// Self-similarity index: cov(as, at) = a^H2 cov(s, t).
    pub fn scaling_index(&self) -> f64 {
        match self.model {
            LimitModel::Bm { .. } => 1.0,
            _ => 1.5,
        }
    }

    /// Cov(X_s, X_t).
    ///
    /// # Panics
    /// If `s` or `t` is negative or NaN.
    pub fn cov(&self, s: f64, t: f64) -> f64 {
        assert!(s >= 0.0 && t >= 0.0, "limit covariance needs s, t >= 0, got {s}, {t}");
        let p = |x: f64| x * x.sqrt();
        match self.model {
            LimitModel::Fbm34 { k } => k * (p(t) + p(s) - p((t - s).abs())),
            LimitModel::SubFbm34 { k } => k * (p(t) + p(s) - 0.5 * p((t - s).abs()) - 0.5 * p(t + s)),
            LimitModel::Bm { d } => d * s.min(t),
        }
    }
}

/// The limit covariance for dimension `dim`, intensity `theta` and start `init`.
///
/// d = 3: K = c sqrt(2) / (3 pi^{3/2}) (det Q)^{-1/2} sigma_eq with c = 1 from
/// the equilibrium (fBM) and c = 2 from a Poisson start (sub-fBM).
/// d = 4: D = (2 pi)^{-2} (det Q)^{-1/2} sigma_eq.
/// d >= 5: D = 2 theta int a_u(0,0) du + sigma_eq int u a_u(0,0) du.
pub fn limit_coefficient(
    dim: usize,
    theta: f64,
    rate: RateDescriptor,
    init: InitialLaw,
    q: &CovMatrix,
    walk_integrals: Option<&WalkIntegrals>,
) -> Result<LimitCovariance> {
    if dim <= 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if q.dim() != dim {
        return Err(Error::InvalidInput(format!("Q is {0}x{0} but d = {dim}", q.dim())));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::DomainError(format!("theta must be finite and > 0, got {theta}")));
    }
    let sigma_eq = rate.sigma_eq(theta);
    if !(sigma_eq.is_finite() && sigma_eq > 0.0) {
        return Err(Error::DomainError(format!("sigma_eq must be finite and > 0, got {sigma_eq}")));
    }
    let det_q = q.det();
    let base = 2f64.sqrt() / (3.0 * PI.powf(1.5)) / det_q.sqrt() * sigma_eq;
    let model = match (dim, init) {
        (3, InitialLaw::Equilibrium) => LimitModel::Fbm34 { k: base },
        (3, InitialLaw::Poisson) => LimitModel::SubFbm34 { k: 2.0 * base },
        (4, _) => LimitModel::Bm {
            d: (2.0 * PI).powi(-2) / det_q.sqrt() * sigma_eq,
        },
        _ => {
            let w = walk_integrals.ok_or_else(|| {
                Error::InvalidInput("d >= 5 needs the walk integrals int a_u du and int u a_u du".into())
            })?;
            LimitModel::Bm {
                d: 2.0 * theta * w.green.value + sigma_eq * w.first_moment.value,
            }
        }
    };
    Ok(LimitCovariance {
        model,
        provenance: Some(Provenance {
            dim,
            theta,
            init,
            rate,
            sigma_eq,
            det_q,
            walk_integrals: if dim >= 5 { walk_integrals.copied() } else { None },
        }),
    })
}

/// max over grid pairs of |subfbm(s,t) - (1/2)[c(s,t) + c(-s,-t) + c(s,-t) + c(-s,t)]|,
/// where c(s,t) = (K/2)(|s|^a + |t|^a - |t-s|^a) is a two-sided fBM covariance
/// whose positive-time scale matches `FBM34` with coefficient K/2, and the
/// sub-fBM side always uses the exponent 3/2. With a = 3/2 this vanishes.
pub fn representation_discrepancy(grid: &[f64], k: f64, fbm_exponent: f64) -> f64 {
    let sub = LimitCovariance::subfbm34(k);
    let c = |s: f64, t: f64| 0.5 * k * (s.abs().powf(fbm_exponent) + t.abs().powf(fbm_exponent) - (t - s).abs().powf(fbm_exponent));
    let mut worst: f64 = 0.0;
    for &s in grid {
        for &t in grid {
            let rhs = 0.5 * (c(s, t) + c(-s, -t) + c(s, -t) + c(-s, t));
            worst = worst.max((sub.cov(s, t) - rhs).abs());
        }
    }
    worst
}

/// The representation identity X_t = (B_t + B_{-t}) / sqrt(2) at the level of
/// covariances, for K = 1.
pub fn subfbm_representation_check(grid: &[f64]) -> f64 {
    representation_discrepancy(grid, 1.0, 1.5)
}
