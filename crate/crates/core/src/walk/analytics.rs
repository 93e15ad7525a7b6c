use std::f64::consts::PI;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::kernel::{CovMatrix, WalkKernel};
use super::lattice::{AxisEngine, GridEngine, LatticeField};
use crate::error::{Error, Result};
use crate::numerics::{
    geometric_breaks, integrate, integrate_breaks, poisson_survival, poisson_window, Bounded,
    Tolerance,
};

/// Default cell budget of the dense d-dimensional engine (about 100 MB per buffer).
pub const DEFAULT_MAX_CELLS: usize = 12_000_000;

/// Largest time accepted by the transition-probability engines.
pub const MAX_TIME: f64 = 2.0e6;

/// Starting law of the branching system, which selects the moment formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    Poisson,
    Equilibrium,
}

/// Result of a Green-function evaluation with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    pub error: f64,
    /// Cutoff separating the quadrature part from the Gaussian tail.
    pub t_cut: f64,
    pub quadrature: Bounded,
    pub tail: f64,
    /// Relative deviation from the local-CLT density at the cutoff.
    pub tail_rel_dev: f64,
}

/// The two integrals entering the d >= 5 limit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkIntegrals {
    /// int_0^inf a_u(0,0) du
    pub green: Bounded,
    /// int_0^inf u a_u(0,0) du
    pub first_moment: Bounded,
}

enum Engine {
    /// Coordinate walks; identical one-dimensional laws share an engine.
    Factorized {
        engines: Vec<AxisEngine>,
        parts: Vec<AxisPart>,
    },
    Generic(GridEngine),
}

struct AxisPart {
    weight: f64,
    engine: usize,
}

/// Transition probabilities and derived integrals of the continuous-time walk
/// with jump law a(0, .) and rate 1.
pub struct WalkAnalytics {
    kernel: WalkKernel,
    cov: CovMatrix,
    engine: Mutex<Engine>,
    max_cells: usize,
    origin_green: Mutex<Option<GreenValue>>,
}

impl std::fmt::Debug for WalkAnalytics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WalkAnalytics")
            .field("kernel", &self.kernel)
            .field("cov", &self.cov)
            .finish_non_exhaustive()
    }
}

impl WalkAnalytics {
    pub fn new(kernel: WalkKernel) -> Result<Self> {
        Self::with_cell_budget(kernel, DEFAULT_MAX_CELLS)
    }

    pub fn with_cell_budget(kernel: WalkKernel, max_cells: usize) -> Result<Self> {
        Self::build(kernel, max_cells, true)
    }

    /// Always uses the dense d-dimensional engine, even for axis-aligned kernels.
    pub fn without_factorization(kernel: WalkKernel, max_cells: usize) -> Result<Self> {
        Self::build(kernel, max_cells, false)
    }

    fn build(kernel: WalkKernel, max_cells: usize, factorize: bool) -> Result<Self> {
        let cov = kernel.covariance()?;
        let axes = if factorize { kernel.axis_decomposition() } else { None };
        let engine = match axes {
            Some(axes) => {
                let mut laws: Vec<Vec<(i64, f64)>> = Vec::new();
                let mut parts = Vec::with_capacity(axes.len());
                for ax in axes {
                    let engine = match laws.iter().position(|l| *l == ax.jumps) {
                        Some(i) => i,
                        None => {
                            laws.push(ax.jumps);
                            laws.len() - 1
                        }
                    };
                    parts.push(AxisPart {
                        weight: ax.weight,
                        engine,
                    });
                }
                Engine::Factorized {
                    engines: laws.into_iter().map(AxisEngine::new).collect(),
                    parts,
                }
            }
            None => Engine::Generic(GridEngine::new(
                kernel.dim(),
                kernel
                    .jumps()
                    .iter()
                    .map(|j| (j.offset.clone(), j.prob))
                    .collect(),
                max_cells,
            )),
        };
        Ok(Self {
            kernel,
            cov,
            engine: Mutex::new(engine),
            max_cells,
            origin_green: Mutex::new(None),
        })
    }

    pub fn kernel(&self) -> &WalkKernel {
        &self.kernel
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// True when the kernel splits into independent coordinate walks.
    pub fn is_factorized(&self) -> bool {
        matches!(*self.engine.lock().expect("engine lock"), Engine::Factorized { .. })
    }

    fn check_args(&self, t: f64, x: &[i64], tol: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DomainError(format!(
                "site {x:?} does not have dimension {}",
                self.dim()
            )));
        }
        if !(t >= 0.0 && t <= MAX_TIME) {
            return Err(Error::DomainError(format!("time must lie in [0, {MAX_TIME}], got {t}")));
        }
        if !(tol > 0.0) {
            return Err(Error::DomainError(format!("tolerance must be > 0, got {tol}")));
        }
        Ok(())
    }

    /// a_t(0, x) by uniformization; the returned error bounds the truncated mass.
    pub fn transition_probability(&self, t: f64, x: &[i64], tol: f64) -> Result<Bounded> {
        self.check_args(t, x, tol)?;
        let mut engine = self.engine.lock().expect("engine lock");
        match &mut *engine {
            Engine::Factorized { engines, parts } => {
                let d = parts.len() as f64;
                let mut value = 1.0;
                let mut error = 0.0;
                for (part, &xi) in parts.iter().zip(x) {
                    let b = axis_value(&mut engines[part.engine], part.weight * t, xi, tol / d)?;
                    value *= b.value;
                    error += b.error;
                }
                Ok(Bounded::new(value, error))
            }
            Engine::Generic(grid) => {
                let w = poisson_window(t, tol)?;
                grid.prepare(x, w.end())?;
                let series = grid.series(x);
                let value = w.iter().map(|(k, p)| p * series[k]).sum();
                Ok(Bounded::new(value, w.excluded_mass))
            }
        }
    }

    /// a_t(0, 0), the quantity every covariance integral is built from.
    pub fn return_probability(&self, t: f64, tol: f64) -> Result<f64> {
        let origin = vec![0; self.dim()];
        Ok(self.transition_probability(t, &origin, tol)?.value)
    }

    /// The whole law a_t(0, .) on a box carrying all but `tol` of its mass.
    pub fn transition_distribution(&self, t: f64, tol: f64) -> Result<LatticeField> {
        self.check_args(t, &vec![0; self.dim()], tol)?;
        let engine = self.engine.lock().expect("engine lock");
        match &*engine {
            Engine::Factorized { engines, parts } => {
                let d = parts.len() as f64;
                let mut pieces = Vec::with_capacity(parts.len());
                let mut cells = 1usize;
                for part in parts {
                    let w = poisson_window(part.weight * t, tol / d)?;
                    cells = cells.saturating_mul(2 * w.end() * engines[part.engine].range() as usize + 1);
                    if cells > self.max_cells {
                        return Err(Error::ToleranceNotReached {
                            what: "transition distribution",
                            tol,
                            detail: format!("box over the budget of {} cells", self.max_cells),
                        });
                    }
                    pieces.push(engines[part.engine].mixture(w.start, &w.weights));
                }
                Ok(LatticeField::outer(&pieces))
            }
            Engine::Generic(grid) => {
                let w = poisson_window(t, tol)?;
                grid.mixture(w.start, &w.weights)
            }
        }
    }

    /// Local-CLT density (2 pi t)^{-d/2} det(Q)^{-1/2} exp(-x Q^{-1} x / (2t)).
    pub fn gaussian_approx(&self, t: f64, x: &[f64]) -> f64 {
        gaussian_density(&self.cov, t, x)
    }

    /// g_lambda(0, x) = int_0^inf e^{-lambda t} a_t(0, x) dt.
    ///
    /// Quadrature up to `t_cut`, then the local-CLT tail corrected by the
    /// expansion a_t / p_t - 1 = c1 / t + c2 / t^2 + ..., with c1, c2 fitted
    /// at t_cut / 2 and t_cut. Twice the c2 contribution is charged as the
    /// tail error. The cutoff doubles until the error fits.
    pub fn green_values(&self, x: &[i64], lambda: f64, t_cut: f64, tol: f64) -> Result<GreenValue> {
        let d = self.dim();
        self.check_args(0.0, x, tol)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::DomainError(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if lambda == 0.0 && d <= 2 {
            return Err(Error::RecurrentCase { dim: d });
        }
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        let q = self.cov.inverse_quadratic(&xf);
        let mut t_cut = t_cut.max(1.0);
        let eval_tol = (tol / (8.0 * MAX_TIME)).max(1e-16).min(1e-13);
        let mut f = |t: f64| -> Result<f64> {
            Ok((-lambda * t).exp() * self.transition_probability(t, x, eval_tol)?.value)
        };
        // Each doubling of the cutoff only integrates the new stretch.
        let mut quad = integrate_breaks(
            &mut f,
            &geometric_breaks(0.0, t_cut, &[]),
            Tolerance::new(0.125 * tol, 0.0),
        )?;
        let mut budget = 0.125 * tol;
        loop {
            let quad_total = Bounded::new(quad.value, quad.error + eval_tol * t_cut);
            let rel_at = |t: f64| -> Result<f64> {
                let p = gaussian_density(&self.cov, t, &xf);
                Ok(if p > 0.0 { self.transition_probability(t, x, eval_tol)?.value / p - 1.0 } else { f64::INFINITY })
            };
            let rel = rel_at(t_cut)?;
            let rel_half = rel_at(0.5 * t_cut)?;
            // alpha = c1 / t_cut, beta = c2 / t_cut^2.
            let beta = 0.5 * (rel_half - 2.0 * rel);
            let alpha = rel - beta;
            let moment = |k: i32| gaussian_tail(&self.cov, d, lambda, q, t_cut, k, 1e-4 * tol);
            let (t0, t1, t2) = (moment(0)?, moment(1)?, moment(2)?);
            let last = beta * t_cut * t_cut * t2;
            let tail = t0 + alpha * t_cut * t1 + last;
            let tail_err = if tail.is_finite() { 2.0 * last.abs() + 1e-3 * tol } else { f64::INFINITY };
            let error = quad_total.error + tail_err;
            if error <= tol {
                return Ok(GreenValue {
                    value: quad_total.value + tail,
                    error,
                    t_cut,
                    quadrature: quad_total,
                    tail,
                    tail_rel_dev: rel.abs(),
                });
            }
            if 2.0 * t_cut > MAX_TIME {
                return Err(Error::ToleranceNotReached {
                    what: "green function",
                    tol,
                    detail: format!("tail error {tail_err:e} at the largest cutoff"),
                });
            }
            budget *= 0.5;
            quad = quad + integrate(&mut f, t_cut, 2.0 * t_cut, Tolerance::new(budget, 0.0))?;
            t_cut *= 2.0;
        }
    }

    /// g(0, 0) = int_0^inf a_t(0, 0) dt, cached across calls at the finest
    /// tolerance requested so far.
    pub fn green_at_origin(&self, tol: f64) -> Result<Bounded> {
        if let Some(g) = *self.origin_green.lock().expect("green lock") {
            if g.error <= tol {
                return Ok(Bounded::new(g.value, g.error));
            }
        }
        let g = self.green_values(&vec![0; self.dim()], 0.0, 64.0, tol)?;
        *self.origin_green.lock().expect("green lock") = Some(g);
        Ok(Bounded::new(g.value, g.error))
    }

    /// int_0^t a_s(0, x) ds.
    pub fn killed_green(&self, x: &[i64], t: f64, tol: f64) -> Result<Bounded> {
        self.check_args(t, x, tol)?;
        let eval_tol = (tol / (8.0 * t.max(1.0))).min(1e-13);
        let mut f = |s: f64| -> Result<f64> { Ok(self.transition_probability(s, x, eval_tol)?.value) };
        let breaks = geometric_breaks(0.0, t, &[]);
        let q = integrate_breaks(&mut f, &breaks, Tolerance::new(0.5 * tol, 0.0))?;
        Ok(Bounded::new(q.value, q.error + eval_tol * t))
    }

    /// The field u_t(.) = int_0^t a_s(0, .) ds, from the closed form
    /// sum_k P(Pois(t) > k) a^{(k)}(0, .).
    pub fn killed_green_field(&self, t: f64, tol: f64) -> Result<LatticeField> {
        self.check_args(t, &vec![0; self.dim()], tol)?;
        // Truncate once sum_{k >= K} P(Pois(t) > k) = E(Pois(t) - K)^+ < tol.
        let cap = crate::numerics::uniformization_cap(t) + 64;
        let surv = poisson_survival(t, cap);
        let mut tail: f64 = surv.iter().sum();
        let mut len = 0;
        while len < cap && tail >= tol {
            tail -= surv[len];
            len += 1;
        }
        if tail >= tol {
            return Err(Error::ToleranceNotReached {
                what: "killed green field",
                tol,
                detail: format!("series in t = {t} needs more than {cap} terms"),
            });
        }
        let jumps: Vec<(Vec<i64>, f64)> = self
            .kernel
            .jumps()
            .iter()
            .map(|j| (j.offset.clone(), j.prob))
            .collect();
        let grid = GridEngine::new(self.dim(), jumps, self.max_cells);
        grid.mixture(0, &surv[..len.max(1)])
    }

    /// h_d(t): t^{3/4} for d = 3, sqrt(t ln t) for d = 4, sqrt(t) for d >= 5.
    pub fn norming(&self, t: f64) -> Result<f64> {
        norming(self.dim(), t)
    }

    /// Second moment of the occupation time at the origin generated by a
    /// single clan: the time-t pair integral weighted by A(.) = a_.(0,0).
    ///
    /// Poisson start: (1/2) int_0^{2t} a_z [ (2t - z)^+ - 2 (t - z)^+ ] dz.
    /// Equilibrium:   (1/2) [ int_0^t z a_z dz + t int_t^inf a_z dz ].
    pub fn clan_contribution(&self, t: f64, init: InitialLaw, tol: f64) -> Result<Bounded> {
        if !(t > 0.0) {
            return Err(Error::DomainError(format!("time must be > 0, got {t}")));
        }
        let eval_tol = (tol / (8.0 * t * t.max(1.0))).min(1e-13);
        let a = |z: f64| self.return_probability(z, eval_tol);
        match init {
            InitialLaw::Poisson => {
                let mut f = |z: f64| -> Result<f64> {
                    let w = (2.0 * t - z).max(0.0) - 2.0 * (t - z).max(0.0);
                    Ok(0.5 * w * a(z)?)
                };
                let breaks = geometric_breaks(0.0, 2.0 * t, &[t]);
                let q = integrate_breaks(&mut f, &breaks, Tolerance::new(tol, 0.0))?;
                Ok(Bounded::new(q.value, q.error + 2.0 * t * t * eval_tol))
            }
            InitialLaw::Equilibrium => {
                if self.dim() <= 2 {
                    return Err(Error::DivergentIntegral {
                        dim: self.dim(),
                        detail: "int a_z dz diverges for a recurrent walk",
                    });
                }
                let mut f = |z: f64| -> Result<f64> { Ok(0.5 * z * a(z)?) };
                let head = integrate_breaks(&mut f, &geometric_breaks(0.0, t, &[]), Tolerance::new(0.5 * tol, 0.0))?;
                let full = self.green_at_origin(0.5 * tol / t)?;
                let killed = self.killed_green(&vec![0; self.dim()], t, 0.5 * tol / t)?;
                let tail = full - killed;
                Ok(head + tail.scale(0.5 * t))
            }
        }
    }

    /// int_0^inf a_u du and int_0^inf u a_u du; the latter is finite only for d >= 5.
    pub fn walk_integrals(&self, tol: f64) -> Result<WalkIntegrals> {
        let d = self.dim();
        if d <= 4 {
            return Err(Error::DivergentIntegral {
                dim: d,
                detail: "int u a_u du diverges for d <= 4",
            });
        }
        let green = self.green_at_origin(tol)?;
        let c = (2.0 * PI).powf(-(d as f64) / 2.0) / self.cov.det().sqrt();
        let mut t_cut: f64 = 16.0;
        loop {
            let eval_tol = (tol / (8.0 * t_cut * t_cut)).min(1e-13);
            let mut f = |u: f64| -> Result<f64> { Ok(u * self.return_probability(u, eval_tol)?) };
            let quad = integrate_breaks(&mut f, &geometric_breaks(0.0, t_cut, &[]), Tolerance::new(0.25 * tol, 0.0))?;
            let a_cut = self.return_probability(t_cut, eval_tol)?;
            let p_cut = c * t_cut.powf(-(d as f64) / 2.0);
            let rel = (a_cut / p_cut - 1.0).abs();
            let tail = c * t_cut.powf(2.0 - d as f64 / 2.0) / (d as f64 / 2.0 - 2.0);
            let tail_err = 1.05 * rel * tail;
            let error = quad.error + eval_tol * t_cut * t_cut + tail_err;
            if error <= tol {
                return Ok(WalkIntegrals {
                    green,
                    first_moment: Bounded::new(quad.value + tail, error),
                });
            }
            t_cut *= 2.0;
            if t_cut > MAX_TIME {
                return Err(Error::ToleranceNotReached {
                    what: "first moment of the return probability",
                    tol,
                    detail: format!("tail error {tail_err:e} at the largest cutoff"),
                });
            }
        }
    }
}

fn axis_value(engine: &mut AxisEngine, t: f64, x: i64, tol: f64) -> Result<Bounded> {
    let w = poisson_window(t, tol)?;
    engine.prepare(x, w.end());
    let series = engine.series(x);
    let value = w.iter().map(|(k, p)| p * series[k]).sum();
    Ok(Bounded::new(value, w.excluded_mass))
}

/// Local-CLT density of the walk with covariance `cov` at time t.
pub fn gaussian_density(cov: &CovMatrix, t: f64, x: &[f64]) -> f64 {
    let d = cov.dim() as f64;
    if t <= 0.0 {
        return if x.iter().all(|&c| c == 0.0) { f64::INFINITY } else { 0.0 };
    }
    (2.0 * PI * t).powf(-d / 2.0) / cov.det().sqrt() * (-cov.inverse_quadratic(x) / (2.0 * t)).exp()
}

/// int_{t_cut}^inf e^{-lambda t} p_t(x) t^{-k} dt with q = x Q^{-1} x.
///
/// Substituting t = t_cut / w^2 gives a smooth integrand on (0, 1) for all d:
/// C t_cut^{1-d/2-k} int_0^1 2 w^{d-3+2k} e^{-lambda t_cut / w^2} e^{-q w^2 / (2 t_cut)} dw.
fn gaussian_tail(cov: &CovMatrix, d: usize, lambda: f64, q: f64, t_cut: f64, k: i32, tol: f64) -> Result<f64> {
    let df = d as f64;
    let c = (2.0 * PI).powf(-df / 2.0) / cov.det().sqrt() * t_cut.powf(1.0 - df / 2.0 - k as f64);
    let power = d as i32 - 3 + 2 * k;
    let f = |w: f64| -> Result<f64> {
        if w <= 0.0 {
            return Ok(if power == 0 && lambda == 0.0 { 2.0 } else { 0.0 });
        }
        let damp = if lambda > 0.0 { (-lambda * t_cut / (w * w)).exp() } else { 1.0 };
        Ok(2.0 * w.powi(power) * damp * (-q * w * w / (2.0 * t_cut)).exp())
    };
    let r = integrate(f, 0.0, 1.0, Tolerance::new(tol / c.max(f64::MIN_POSITIVE), 1e-13))?;
    Ok(c * r.value)
}

/// h_d(t) for the occupation-time normalization.
pub fn norming(dim: usize, t: f64) -> Result<f64> {
    match dim {
        0..=2 => Err(Error::UnsupportedDimension(dim)),
        3 => {
            if !(t > 0.0) {
                return Err(Error::DomainError(format!("norming needs t > 0, got {t}")));
            }
            Ok(t.powf(0.75))
        }
        4 => {
            if !(t > 1.0) {
                return Err(Error::DomainError(format!("d = 4 norming needs t > 1, got {t}")));
            }
            Ok((t * t.ln()).sqrt())
        }
        _ => {
            if !(t > 0.0) {
                return Err(Error::DomainError(format!("norming needs t > 0, got {t}")));
            }
            Ok(t.sqrt())
        }
    }
}
