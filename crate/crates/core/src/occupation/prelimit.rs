//! Exact finite-N covariance of the renormalized occupation time.
//!
//! With A(w) = a_w(0,0), S = N s <= T = N t and h = h_d(N), integrating the
//! second-moment formulas over [0,S] x [0,T] leaves one-dimensional integrals
//! of A against piecewise polynomial area weights:
//!
//! - theta term: theta int_0^T A(w) m(w) dw, m the density of |v - u|;
//! - Poisson start, constant E sigma = c:
//!   (c/2) int_0^{S+T} A(w) |{|v-u| <= w <= u+v}| dw;
//! - Poisson start, curve f: int_0^S f(q) F(S-q, T-q) dq with
//!   F(a, b) = int int_{[0,a]x[0,b]} A(u+v), itself one integral of A;
//! - equilibrium: (sigma_eq/2) [g S T - int_0^T A(w) |{|v-u| > w}| dw].

use crate::brw::{MomentInputs, SigmaProfile};
use crate::error::{Error, Result};
use crate::numerics::{geometric_breaks, integrate_breaks, Bounded, Tolerance};
use crate::walk::{norming, InitialLaw, WalkAnalytics};

/// int_0^len clamp(x + offset, 0, hi) dx, exactly.
fn clamp_integral(len: f64, offset: f64, hi: f64) -> f64 {
    let prim = |y: f64| {
        if y <= 0.0 {
            0.0
        } else if y <= hi {
            0.5 * y * y
        } else {
            0.5 * hi * hi + hi * (y - hi)
        }
    };
    prim(len + offset) - prim(offset)
}

/// Area of {(u, v) in [0,S]x[0,T] : |v - u| <= w}.
fn band_area(s: f64, t: f64, w: f64) -> f64 {
    clamp_integral(s, w, t) - clamp_integral(s, -w, t)
}

/// Area of {(u, v) in [0,S]x[0,T] : u + v < w}.
fn corner_area(s: f64, t: f64, w: f64) -> f64 {
    clamp_integral(s, w - s, t)
}

/// Density of |v - u| on [0,S]x[0,T] for S <= T.
fn lag_density(s: f64, t: f64, w: f64) -> f64 {
    s.min(t - w).max(0.0) + (s - w).max(0.0)
}

/// Length of {u in [0,a] : w - u in [0,b]}.
fn sum_density(a: f64, b: f64, w: f64) -> f64 {
    (a.min(w) - (w - b).max(0.0)).max(0.0)
}

struct Ctx<'a> {
    walk: &'a WalkAnalytics,
    eval_tol: f64,
}

impl Ctx<'_> {
    fn a(&self, w: f64) -> Result<f64> {
        self.walk.return_probability(w, self.eval_tol)
    }

    /// int A(w) weight(w) dw over [0, hi], splitting at the weight's kinks.
    fn weighted(&self, hi: f64, kinks: &[f64], tol: f64, weight: impl Fn(f64) -> f64) -> Result<Bounded> {
        let mut f = |w: f64| -> Result<f64> {
            let k = weight(w);
            if k == 0.0 {
                return Ok(0.0);
            }
            Ok(k * self.a(w)?)
        };
        integrate_breaks(&mut f, &geometric_breaks(0.0, hi, kinks), Tolerance::new(tol, 0.0))
    }
}

/// E[X^N_s X^N_t] from the exact second-moment formulas, with an error bound.
pub fn exact_prelimit_cov(
    walk: &WalkAnalytics,
    n: f64,
    s: f64,
    t: f64,
    init: InitialLaw,
    inputs: &MomentInputs,
    tol: f64,
) -> Result<Bounded> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::DomainError(format!("times must be >= 0, got {s} and {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::DomainError(format!("tolerance must be > 0, got {tol}")));
    }
    let h = norming(walk.dim(), n)?;
    let h2 = h * h;
    let (sn, tn) = (n * s.min(t), n * s.max(t));
    if sn == 0.0 {
        return Ok(Bounded::exact(0.0));
    }
    let theta = inputs.theta;
    // Quadrature tolerances in unnormalized units.
    let budget = 0.25 * tol * h2;
    let area = sn * tn;
    let sigma_scale = match init {
        InitialLaw::Poisson => inputs.poisson_profile()?.max(),
        InitialLaw::Equilibrium => inputs.sigma_eq()?,
    };
    let eval_tol = (0.5 * budget / (area * (1.0 + theta + sigma_scale))).min(1e-13);
    let ctx = Ctx { walk, eval_tol };
    let eval_err = eval_tol * area * (theta + sigma_scale);
    let kinks = [sn, tn - sn, tn];

    let first = ctx
        .weighted(tn, &kinks, budget, |w| lag_density(sn, tn, w))?
        .scale(theta);
    let second = match init {
        InitialLaw::Poisson => match inputs.poisson_profile()? {
            SigmaProfile::Constant(c) => ctx
                .weighted(sn + tn, &kinks, budget, |w| {
                    (band_area(sn, tn, w) - corner_area(sn, tn, w)).max(0.0)
                })?
                .scale(0.5 * c),
            profile @ SigmaProfile::Curve(_) => curve_term(&ctx, sn, tn, profile, budget)?,
        },
        InitialLaw::Equilibrium => {
            if walk.dim() <= 2 {
                return Err(Error::RecurrentCase { dim: walk.dim() });
            }
            let sigma = inputs.sigma_eq()?;
            let g = walk.green_at_origin(budget / (1.0 + 0.5 * sigma * area))?;
            let tail = ctx.weighted(tn, &kinks, budget, |w| (area - band_area(sn, tn, w)).max(0.0))?;
            (g.scale(area) - tail).scale(0.5 * sigma)
        }
    };
    let total = first + second + Bounded::new(0.0, eval_err);
    Ok(total.scale(1.0 / h2))
}

/// int_0^S f(q) F(S - q, T - q) dq by nested quadrature.
fn curve_term(ctx: &Ctx<'_>, sn: f64, tn: f64, profile: SigmaProfile<'_>, budget: f64) -> Result<Bounded> {
    let fmax = profile.max().max(1e-300);
    let inner_tol = 0.5 * budget / (sn * fmax);
    let mut inner_err: f64 = 0.0;
    let mut f = |q: f64| -> Result<f64> {
        let fq = profile.eval(q);
        if fq == 0.0 {
            return Ok(0.0);
        }
        let (a, b) = (sn - q, tn - q);
        if a <= 0.0 {
            return Ok(0.0);
        }
        let inner = ctx.weighted(a + b, &[a, b], inner_tol, |w| sum_density(a, b, w))?;
        inner_err = inner_err.max(inner.error);
        Ok(fq * inner.value)
    };
    let knots: Vec<f64> = profile.knots().to_vec();
    let outer = integrate_breaks(&mut f, &geometric_breaks(0.0, sn, &knots), Tolerance::new(0.5 * budget, 0.0))?;
    Ok(Bounded::new(outer.value, outer.error + inner_err * sn * fmax))
}

/// E[(X^N_t - X^N_s)^2] from three covariance evaluations.
pub fn increment_second_moment(
    walk: &WalkAnalytics,
    n: f64,
    s: f64,
    t: f64,
    init: InitialLaw,
    inputs: &MomentInputs,
    tol: f64,
) -> Result<Bounded> {
    let tt = exact_prelimit_cov(walk, n, t, t, init, inputs, tol / 4.0)?;
    let ss = exact_prelimit_cov(walk, n, s, s, init, inputs, tol / 4.0)?;
    let st = exact_prelimit_cov(walk, n, s, t, init, inputs, tol / 4.0)?;
    Ok(tt + ss - st.scale(2.0))
}
