use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size for the moment diagnostics.
pub const MIN_GAUSSIANITY_REPLICATES: usize = 100;

fn jackknife_se(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let bar = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - bar).powi(2)).sum::<f64>()).sqrt()
}

/// Skewness and excess kurtosis of one grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostic {
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub excess_kurtosis_se: f64,
}

/// Moment skewness m3 / m2^{3/2} and excess kurtosis m4 / m2^2 - 3 per
/// coordinate of `rows` (one row per replicate), with jackknife SEs.
pub fn gaussianity(rows: &[Vec<f64>]) -> Result<Vec<MomentDiagnostic>> {
    let n = rows.len();
    if n < MIN_GAUSSIANITY_REPLICATES {
        return Err(Error::TooFewReplicates { got: n, need: MIN_GAUSSIANITY_REPLICATES });
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::GridMismatch("replicate vectors differ in length".into()));
    }
    (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let y: Vec<f64> = col.iter().map(|x| x - m).collect();
            let p = |e: i32| y.iter().map(|v| v.powi(e)).sum::<f64>();
            let sums = [p(1), p(2), p(3), p(4)];
            let stats = |s: [f64; 4], cnt: f64| -> Option<(f64, f64)> {
                let mu = s[0] / cnt;
                let (a2, a3, a4) = (s[1] / cnt, s[2] / cnt, s[3] / cnt);
                let m2 = a2 - mu * mu;
                let m3 = a3 - 3.0 * mu * a2 + 2.0 * mu.powi(3);
                let m4 = a4 - 4.0 * mu * a3 + 6.0 * mu * mu * a2 - 3.0 * mu.powi(4);
                (m2 > 1e-300 * a2.max(1e-300)).then(|| (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
            };
            let (skew, kurt) = stats(sums, n as f64).ok_or(Error::TooFewEffective { point: j })?;
            let mut loo_s = Vec::with_capacity(n);
            let mut loo_k = Vec::with_capacity(n);
            for &v in &y {
                let s = [sums[0] - v, sums[1] - v * v, sums[2] - v.powi(3), sums[3] - v.powi(4)];
                let (a, b) = stats(s, (n - 1) as f64).ok_or(Error::TooFewEffective { point: j })?;
                loo_s.push(a);
                loo_k.push(b);
            }
            Ok(MomentDiagnostic {
                skewness: skew,
                skewness_se: jackknife_se(&loo_s),
                excess_kurtosis: kurt,
                excess_kurtosis_se: jackknife_se(&loo_k),
            })
        })
        .collect()
}

/// Log-log least-squares fit y = C x^slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Jackknife (leave one pair out) standard error of the slope.
    pub slope_se: f64,
    /// slope -/+ 1.96 slope_se.
    pub ci: (f64, f64),
    /// Largest absolute log residual.
    pub max_residual: f64,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of log y against log x with a jackknife confidence interval.
pub fn scaling_exponent(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::NonpositiveInput);
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    if lx.iter().all(|&v| v == lx[0]) {
        return Err(Error::InvalidInput("all x values coincide".into()));
    }
    let (slope, intercept) = ols(&lx, &ly);
    let max_residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    let loo: Vec<f64> = (0..pairs.len())
        .map(|k| {
            let x: Vec<f64> = lx.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
            let y: Vec<f64> = ly.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect();
            ols(&x, &y).0
        })
        .collect();
    let slope_se = if loo.iter().all(|v| v.is_finite()) { jackknife_se(&loo) } else { f64::INFINITY };
    Ok(ScalingFit {
        slope,
        intercept,
        slope_se,
        ci: (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
        max_residual,
    })
}

/// Relative gaps to a limit along the N ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub ladder: Vec<f64>,
    pub estimates: Vec<f64>,
    pub limit: f64,
    /// |estimate - limit| / |limit|.
    pub gaps: Vec<f64>,
    pub gap_se: Vec<f64>,
    /// Each gap is below its predecessor plus 3 combined SEs.
    pub monotone: bool,
    pub final_gap: f64,
    /// Power-law fit of gap against N, when all gaps are positive.
    pub rate: Option<ScalingFit>,
}

/// Gap trend of per-N estimates (with SEs, zero for exact values) toward `limit`.
pub fn convergence_trend(ladder: &[f64], estimates: &[f64], se: &[f64], limit: f64) -> Result<TrendReport> {
    if ladder.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 ladder points, got {}", ladder.len())));
    }
    if estimates.len() != ladder.len() || se.len() != ladder.len() {
        return Err(Error::GridMismatch("ladder, estimates and SEs differ in length".into()));
    }
    if !(limit != 0.0 && limit.is_finite()) {
        return Err(Error::InvalidInput("limit must be finite and nonzero".into()));
    }
    let gaps: Vec<f64> = estimates.iter().map(|e| ((e - limit) / limit).abs()).collect();
    let gap_se: Vec<f64> = se.iter().map(|s| s / limit.abs()).collect();
    let monotone = (1..gaps.len()).all(|i| {
        let slack = 3.0 * (gap_se[i].powi(2) + gap_se[i - 1].powi(2)).sqrt();
        gaps[i] < gaps[i - 1] + slack
    });
    let rate = if gaps.iter().all(|&g| g > 0.0) {
        let pairs: Vec<(f64, f64)> = ladder.iter().copied().zip(gaps.iter().copied()).collect();
        scaling_exponent(&pairs).ok()
    } else {
        None
    };
    Ok(TrendReport {
        ladder: ladder.to_vec(),
        estimates: estimates.to_vec(),
        limit,
        final_gap: *gaps.last().expect("nonempty"),
        gaps,
        gap_se,
        monotone,
        rate,
    })
}
