//! Numerical building blocks shared by the analytic layers: adaptive
//! Gauss-Kronrod quadrature with honest error bounds and truncated Poisson
//! weight windows for uniformization.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A numerical value together with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

impl Bounded {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            error: self.error * factor.abs(),
        }
    }
}

impl std::ops::Add for Bounded {
    type Output = Bounded;

    fn add(self, rhs: Bounded) -> Bounded {
        Bounded {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

impl std::ops::Sub for Bounded {
    type Output = Bounded;

    fn sub(self, rhs: Bounded) -> Bounded {
        Bounded {
            value: self.value - rhs.value,
            error: self.error + rhs.error,
        }
    }
}

/// Absolute / relative stopping tolerance for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            max_intervals: 20_000,
        }
    }

    pub fn relative(rel: f64) -> Self {
        Self {
            abs: 0.0,
            rel,
            max_intervals: 20_000,
        }
    }

    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 20_000,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx)? + f(center + dx)?;
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    if !value.is_finite() {
        return Err(Error::ToleranceNotReached {
            what: "quadrature",
            tol: f64::NAN,
            detail: format!("non-finite integrand on [{a}, {b}]"),
        });
    }
    // Floor the estimate at the round-off level of the panel.
    let error = error.max(4.0 * f64::EPSILON * value.abs());
    Ok(Panel { a, b, value, error })
}

/// Integrates `f` over `[a, b]` by globally adaptive Gauss-Kronrod (7/15).
///
/// The reported error is the sum over panels of |K15 - G7|, which is a
/// pessimistic bound for smooth integrands.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Bounded>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_breaks(&mut f, &[a, b], tol)
}

/// Adaptive integration over consecutive intervals of `breaks`, which must be
/// nondecreasing. Splitting at kinks of the integrand keeps panels smooth.
pub fn integrate_breaks<F>(f: &mut F, breaks: &[f64], tol: Tolerance) -> Result<Bounded>
where
    F: FnMut(f64) -> Result<f64>,
{
    if breaks.len() < 2 {
        return Ok(Bounded::exact(0.0));
    }
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(a.is_finite() && b.is_finite()) || b < a {
            return Err(Error::DomainError(format!(
                "quadrature breakpoints must be finite and nondecreasing, got [{a}, {b}]"
            )));
        }
        if b > a {
            heap.push(kronrod_panel(f, a, b)?);
        }
    }
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= tol.target(value) {
            return Ok(Bounded { value, error });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::ToleranceNotReached {
                what: "adaptive quadrature",
                tol: tol.target(value),
                detail: format!("error estimate {error:e} after {} panels", heap.len()),
            });
        }
        let worst = heap.pop().expect("heap is nonempty while error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel can no longer be split in floating point.
            return Err(Error::ToleranceNotReached {
                what: "adaptive quadrature",
                tol: tol.target(value),
                detail: format!("panel [{}, {}] is at machine resolution", worst.a, worst.b),
            });
        }
        heap.push(kronrod_panel(f, worst.a, mid)?);
        heap.push(kronrod_panel(f, mid, worst.b)?);
    }
}

/// Breakpoints `lo, 1, 2, 4, ...` up to `hi` (plus `lo` and `hi`), useful for
/// integrands that decay like powers of t over long ranges.
pub fn geometric_breaks(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let mut x = 1.0;
    while x < hi {
        if x > lo {
            pts.push(x);
        }
        x *= 2.0;
    }
    pts.extend(extra.iter().copied().filter(|&e| e > lo && e < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Poisson(t) probabilities over a contiguous window of counts, with a rigorous
/// bound on the mass left outside the window.
#[derive(Debug, Clone)]
pub struct PoissonWindow {
    pub start: usize,
    pub weights: Vec<f64>,
    pub excluded_mass: f64,
}

impl PoissonWindow {
    pub fn end(&self) -> usize {
        self.start + self.weights.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.start + i, w))
    }
}

/// Poisson(t) probability of k, by Loader's saddle-point expansion, which keeps
/// full relative precision where exp(k ln t - t - ln k!) loses digits.
pub fn poisson_pmf(k: usize, t: f64) -> f64 {
    if t == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-t).exp();
    }
    let x = k as f64;
    (-stirling_error(x) - deviance_term(x, t)).exp() / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// ln(n!) - ln(sqrt(2 pi n) (n/e)^n).
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let nn = n * n;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// x ln(x / m) + m - x, without cancellation when x is near m.
fn deviance_term(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                break;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// Hard cap on the number of uniformization terms: ceil(t + 12 sqrt(t) + 50).
pub fn uniformization_cap(t: f64) -> usize {
    (t + 12.0 * t.sqrt() + 50.0).ceil() as usize
}

/// Truncated Poisson(t) weights whose excluded two-sided tail mass is below `tol`.
pub fn poisson_window(t: f64, tol: f64) -> Result<PoissonWindow> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::DomainError(format!("time must be finite and >= 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::DomainError(format!("tolerance must be > 0, got {tol}")));
    }
    if t == 0.0 {
        return Ok(PoissonWindow {
            start: 0,
            weights: vec![1.0],
            excluded_mass: 0.0,
        });
    }
    let cap = uniformization_cap(t);
    let mode = t.floor() as usize;
    let w_mode = poisson_pmf(mode, t);
    let half_tol = 0.5 * tol;

    // Upward: beyond k the ratio of successive terms is at most t/(k+2).
    let mut upper = vec![w_mode];
    let mut k = mode;
    let mut w = w_mode;
    let upper_tail = loop {
        let q = t / (k as f64 + 2.0);
        let next = w * t / (k as f64 + 1.0);
        if q < 1.0 {
            let bound = next / (1.0 - q);
            if bound < half_tol {
                break bound;
            }
        }
        k += 1;
        if k > cap {
            return Err(Error::ToleranceNotReached {
                what: "uniformization",
                tol,
                detail: format!("Poisson({t}) tail needs more than {cap} terms"),
            });
        }
        w = next;
        upper.push(w);
    };

    // Downward: below k the ratio of successive terms is at most k/t.
    let mut lower = Vec::new();
    let mut k = mode;
    let mut w = w_mode;
    let lower_tail = loop {
        if k == 0 {
            break 0.0;
        }
        let next = w * k as f64 / t;
        let q = (k as f64 - 1.0) / t;
        if q < 1.0 {
            let bound = next / (1.0 - q);
            if bound < half_tol {
                break bound;
            }
        }
        k -= 1;
        w = next;
        lower.push(w);
    };
    let start = mode - lower.len();
    lower.reverse();
    lower.extend(upper);
    Ok(PoissonWindow {
        start,
        weights: lower,
        excluded_mass: upper_tail + lower_tail,
    })
}

/// P(Poisson(t) > k) for all k in `0..len`, by direct summation.
pub fn poisson_survival(t: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if t == 0.0 {
        out.resize(len, 0.0);
        return out;
    }
    let mut cdf = 0.0;
    for k in 0..len {
        cdf += poisson_pmf(k, t);
        out.push((1.0 - cdf).max(0.0));
    }
    out
}

/// Symmetric eigenvalues of a small dense matrix given in row-major order.
pub fn symmetric_eigenvalues(n: usize, entries: &[f64]) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, entries);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
