use serde::{Deserialize, Serialize};

use super::equilibrium::SigmaCurve;
use super::rate::BranchingRate;
use crate::error::{Error, Result};
use crate::numerics::{geometric_breaks, integrate_breaks, Bounded, Tolerance};
use crate::walk::{InitialLaw, WalkAnalytics};

/// Model quantities the second-moment formulas consume besides the walk.
///
/// For independent branching both sigma inputs are exact (rho theta); for a
/// state-dependent rate they must be estimated and supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentInputs {
    pub theta: f64,
    pub rate: BranchingRate,
    pub sigma_eq: Option<f64>,
    pub sigma_curve: Option<SigmaCurve>,
}

/// E[sigma(xi_r(0))] under a Poisson start, as consumed by the integrals.
#[derive(Debug, Clone, Copy)]
pub enum SigmaProfile<'a> {
    Constant(f64),
    Curve(&'a SigmaCurve),
}

impl SigmaProfile<'_> {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Curve(c) => c.eval(r),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Curve(c) => c.values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Kinks of the profile.
    pub fn knots(&self) -> &[f64] {
        match self {
            Self::Constant(_) => &[],
            Self::Curve(c) => c.knots(),
        }
    }
}

impl MomentInputs {
    pub fn new(theta: f64, rate: BranchingRate) -> Result<Self> {
        rate.validate()?;
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::InvalidParams(format!("theta must be finite and >= 0, got {theta}")));
        }
        Ok(Self {
            theta,
            rate,
            sigma_eq: None,
            sigma_curve: None,
        })
    }

    pub fn independent(theta: f64, rho: f64) -> Result<Self> {
        Self::new(theta, BranchingRate::independent(rho)?)
    }

    pub fn with_sigma_eq(mut self, sigma_eq: f64) -> Self {
        self.sigma_eq = Some(sigma_eq);
        self
    }

    pub fn with_sigma_curve(mut self, curve: SigmaCurve) -> Self {
        self.sigma_curve = Some(curve);
        self
    }

    /// sigma_eq: rho theta for independent branching, else the supplied estimate.
    pub fn sigma_eq(&self) -> Result<f64> {
        if self.rate.is_independent() {
            return Ok(self.rate.sigma(1) * self.theta);
        }
        self.sigma_eq.ok_or(Error::MissingSigmaEq)
    }

    pub fn poisson_profile(&self) -> Result<SigmaProfile<'_>> {
        if self.rate.is_independent() {
            return Ok(SigmaProfile::Constant(self.rate.sigma(1) * self.theta));
        }
        self.sigma_curve.as_ref().map(SigmaProfile::Curve).ok_or(Error::MissingSigmaCurve)
    }
}

/// Cov(xi_u(x), xi_v(y)) for u <= v (the arguments are swapped otherwise).
///
/// Poisson start:  theta a_{v-u}(x,y) + int_0^u a_{v-u+2r}(x,y) E[sigma(xi_{u-r}(0))] dr.
/// Equilibrium:    theta a_{v-u}(x,y) + (sigma_eq / 2) int_{v-u}^inf a_r(x,y) dr.
pub fn moment_formula_cov(
    walk: &WalkAnalytics,
    u: f64,
    v: f64,
    x: &[i64],
    y: &[i64],
    init: InitialLaw,
    inputs: &MomentInputs,
    tol: f64,
) -> Result<Bounded> {
    if !(u >= 0.0 && v >= 0.0) {
        return Err(Error::DomainError(format!("times must be >= 0, got {u} and {v}")));
    }
    if x.len() != walk.dim() || y.len() != walk.dim() {
        return Err(Error::DomainError("sites do not match the walk dimension".into()));
    }
    let (u, v) = if u <= v { (u, v) } else { (v, u) };
    let z: Vec<i64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let theta = inputs.theta;
    let lag = v - u;
    let diag = walk.transition_probability(lag, &z, 0.25 * tol)?.scale(theta);
    match init {
        InitialLaw::Poisson => {
            let profile = inputs.poisson_profile()?;
            if u == 0.0 {
                return Ok(diag);
            }
            let smax = profile.max();
            let eval_tol = (0.25 * tol / ((1.0 + u) * (1.0 + smax))).min(1e-13);
            let mut f = |r: f64| -> Result<f64> {
                Ok(walk.transition_probability(lag + 2.0 * r, &z, eval_tol)?.value * profile.eval(u - r))
            };
            let kinks: Vec<f64> = profile.knots().iter().map(|k| u - k).collect();
            let breaks = geometric_breaks(0.0, u, &kinks);
            let q = integrate_breaks(&mut f, &breaks, Tolerance::new(0.25 * tol, 0.0))?;
            Ok(diag + Bounded::new(q.value, q.error + eval_tol * u * smax))
        }
        InitialLaw::Equilibrium => {
            if walk.dim() <= 2 {
                return Err(Error::RecurrentCase { dim: walk.dim() });
            }
            let sigma = inputs.sigma_eq()?;
            let g = if z.iter().all(|&c| c == 0) {
                walk.green_at_origin(0.25 * tol / (1.0 + sigma))?
            } else {
                let gv = walk.green_values(&z, 0.0, 64.0, 0.25 * tol / (1.0 + sigma))?;
                Bounded::new(gv.value, gv.error)
            };
            let killed = walk.killed_green(&z, lag, 0.25 * tol / (1.0 + sigma))?;
            Ok(diag + (g - killed).scale(0.5 * sigma))
        }
    }
}
