use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use brw_occupation::brw::{
    estimate_sigma_curve, estimate_sigma_eq, BranchingRate, MomentInputs, SigmaCurve, SigmaEqEstimate, Simulator,
};
use brw_occupation::limit::{
    limit_coefficient, sample_paths, subfbm_representation_check, LimitCovariance, RateDescriptor,
};
use brw_occupation::numerics::Bounded;
use brw_occupation::occupation::{
    exact_prelimit_cov, run_replicate, rung_params, summarize, EnsembleSummary, ReplicateOutcome,
};
use brw_occupation::parallel::map_indexed;
use brw_occupation::rng::{derive_seed, stream};
use brw_occupation::stats::{
    compare_ensemble, convergence_trend, gaussianity, ComparisonReport, ComparisonTarget, MomentDiagnostic,
    TrendReport, MIN_GAUSSIANITY_REPLICATES,
};
use brw_occupation::walk::{norming, InitialLaw, WalkAnalytics};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::store::{
    append_replicates, io_err, read_envelope, read_replicates, replicates_path, summary_path, write_envelope,
    ReplicateLine, TOOL_VERSION,
};
use crate::CliError;

/// Replicates run between appends to the JSONL log.
const CHUNK: usize = 256;
const LIMIT_SEED_LABEL: u64 = 0x5eed_0010;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalCltRow {
    pub t: f64,
    pub a: f64,
    pub gaussian: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub name: String,
    pub dim: usize,
    pub support: usize,
    pub q: Vec<Vec<f64>>,
    pub det_q: f64,
    pub green_origin: Option<Bounded>,
    pub local_clt: Vec<LocalCltRow>,
    pub norming: Vec<(f64, Option<f64>)>,
    pub clan: Vec<(f64, Option<Bounded>)>,
}

pub fn analyze_kernel(cfg: &ExperimentConfig) -> Result<KernelReport, CliError> {
    let kernel = cfg.kernel()?;
    let walk = WalkAnalytics::new(kernel.clone())?;
    let d = walk.dim();
    let q = walk.cov();
    let green_origin = match (d, cfg.init) {
        (1 | 2, InitialLaw::Equilibrium) => return Err(brw_occupation::Error::RecurrentCase { dim: d }.into()),
        (1 | 2, InitialLaw::Poisson) => None,
        _ => Some(walk.green_at_origin(1e-10)?),
    };
    let local_clt = [1.0, 10.0, 100.0, 400.0]
        .iter()
        .map(|&t| -> Result<LocalCltRow, CliError> {
            let a = walk.return_probability(t, 1e-14)?;
            let gaussian = walk.gaussian_approx(t, &vec![0.0; d]);
            Ok(LocalCltRow {
                t,
                a,
                gaussian,
                ratio: a / gaussian,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(KernelReport {
        name: kernel.name().to_string(),
        dim: d,
        support: kernel.jumps().len(),
        q: (0..d).map(|i| (0..d).map(|j| q.entry(i, j)).collect()).collect(),
        det_q: q.det(),
        green_origin,
        local_clt,
        norming: [8.0, 32.0, 128.0, 512.0].iter().map(|&n| (n, norming(d, n).ok())).collect(),
        clan: [1.0, 4.0, 16.0, 64.0]
            .iter()
            .map(|&t| (t, walk.clan_contribution(t, cfg.init, 1e-6).ok()))
            .collect(),
    })
}

/// Runs the missing replicates of rung `n`, appending them to the log, and
/// writes the summary. Completed indices are never rerun.
pub fn simulate_rung(cfg: &ExperimentConfig, hash: &str, out: &Path, n: f64) -> Result<EnsembleSummary, CliError> {
    let p = rung_params(&cfg.sim_params()?, n, &cfg.grid)?;
    let log = replicates_path(out, n);
    let mut done = read_replicates(&log, hash, n)?;
    let missing: Vec<u64> = (0..cfg.replicates as u64).filter(|i| !done.contains_key(i)).collect();
    if !missing.is_empty() {
        eprintln!(
            "N = {n}: {} of {} replicates to run (torus side {})",
            missing.len(),
            cfg.replicates,
            p.torus_side
        );
    }
    let proto = Simulator::new(p.clone())?;
    for chunk in missing.chunks(CHUNK) {
        let outcomes = map_indexed(chunk.len(), cfg.workers, || proto.clone(), |sim, j| {
            run_replicate(sim, chunk[j], n, &cfg.grid)
        });
        let lines: Vec<ReplicateLine> = chunk
            .iter()
            .zip(outcomes)
            .map(|(&index, outcome)| ReplicateLine {
                config_hash: hash.to_string(),
                tool_version: TOOL_VERSION.to_string(),
                n,
                index,
                outcome,
            })
            .collect();
        append_replicates(&log, &lines)?;
        for l in lines {
            done.insert(l.index, l.outcome);
        }
    }
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates as u64).map(|i| done[&i].clone()).collect();
    let summary = summarize(&p, n, &cfg.grid, &outcomes)?;
    write_envelope(&summary_path(out, n), hash, &summary)?;
    Ok(summary)
}

pub fn simulate(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<Vec<EnsembleSummary>, CliError> {
    cfg.ladder.iter().map(|&n| simulate_rung(cfg, hash, out, n)).collect()
}

fn load_or_build(cfg: &ExperimentConfig, hash: &str, out: &Path, n: f64) -> Result<EnsembleSummary, CliError> {
    let path = summary_path(out, n);
    if path.exists() {
        read_envelope(&path, hash)
    } else {
        simulate_rung(cfg, hash, out, n)
    }
}

/// Renormalized paths of rung `n` from the replicate log.
fn logged_paths(out: &Path, hash: &str, n: f64) -> Result<Vec<Vec<f64>>, CliError> {
    let done: BTreeMap<u64, ReplicateOutcome> = read_replicates(&replicates_path(out, n), hash, n)?;
    Ok(done.into_values().filter_map(|o| o.ok()).map(|r| r.values).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaInputs {
    pub sigma_eq: f64,
    pub sigma_eq_estimate: Option<SigmaEqEstimate>,
    /// Poisson-start curves per N (state-dependent rates only).
    pub curves: Vec<(f64, SigmaCurve)>,
}

fn sigma_eq_of(cfg: &ExperimentConfig) -> Result<(f64, Option<SigmaEqEstimate>), CliError> {
    if let BranchingRate::Independent { rho } = cfg.branching {
        return Ok((rho * cfg.theta, None));
    }
    let mut p = cfg.sim_params()?;
    p.seed = cfg.seed;
    let s = &cfg.sigma_pilot;
    let est = estimate_sigma_eq(&p, s.t_burn, s.t_avg, s.replicates, cfg.workers)?;
    Ok((est.mean, Some(est)))
}

fn limit_of(cfg: &ExperimentConfig, walk: &WalkAnalytics, sigma_eq: f64) -> Result<LimitCovariance, CliError> {
    let rate = match cfg.branching {
        BranchingRate::Independent { rho } => RateDescriptor::Independent { rho },
        BranchingRate::Tabulated { .. } => RateDescriptor::StateDependent { sigma_eq },
    };
    let integrals = if cfg.dim >= 5 { Some(walk.walk_integrals(cfg.tolerance)?) } else { None };
    Ok(limit_coefficient(cfg.dim, cfg.theta, rate, cfg.init, walk.cov(), integrals.as_ref())?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RungCheck {
    pub n: f64,
    pub valid: bool,
    pub excluded_fraction: f64,
    /// Gated: Monte Carlo covariance against the exact finite-N covariance.
    pub prelimit: ComparisonReport,
    /// Informational: Monte Carlo covariance against the limit.
    pub limit: ComparisonReport,
    pub gaussianity: Option<Vec<MomentDiagnostic>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dim: usize,
    pub init: InitialLaw,
    pub gate: f64,
    pub sigma: SigmaInputs,
    pub limit: LimitCovariance,
    pub rungs: Vec<RungCheck>,
    /// Exact Var(X^N_t) at the last grid point against the limit, along the ladder.
    pub trend: Option<TrendReport>,
    pub pass: bool,
}

pub fn verify(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<VerifyReport, CliError> {
    if cfg.dim <= 2 {
        return Err(brw_occupation::Error::UnsupportedDimension(cfg.dim).into());
    }
    let walk = WalkAnalytics::new(cfg.kernel()?)?;
    let (sigma_eq, sigma_eq_estimate) = sigma_eq_of(cfg)?;
    let limit = limit_of(cfg, &walk, sigma_eq)?;
    let k = cfg.grid.len();
    let t_max = cfg.grid[k - 1];
    let mut rungs = Vec::new();
    let mut curves = Vec::new();
    let mut exact_var = Vec::new();
    for &n in &cfg.ladder {
        let summary = load_or_build(cfg, hash, out, n)?;
        let mut inputs = MomentInputs::new(cfg.theta, cfg.branching.clone())?.with_sigma_eq(sigma_eq);
        if !cfg.branching.is_independent() && cfg.init == InitialLaw::Poisson {
            let p = rung_params(&cfg.sim_params()?, n, &cfg.grid)?;
            let m = cfg.sigma_pilot.knots;
            let knots: Vec<f64> = (0..m).map(|i| p.horizon * i as f64 / (m - 1) as f64).collect();
            let curve = estimate_sigma_curve(&p, &knots, cfg.sigma_pilot.replicates, cfg.workers)?;
            inputs = inputs.with_sigma_curve(curve.clone());
            curves.push((n, curve));
        }
        let mut reference = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..=i {
                let c = exact_prelimit_cov(&walk, n, cfg.grid[j], cfg.grid[i], cfg.init, &inputs, cfg.tolerance)?.value;
                reference[i][j] = c;
                reference[j][i] = c;
            }
        }
        exact_var.push(reference[k - 1][k - 1]);
        let prelimit = compare_ensemble(&summary, &reference, ComparisonTarget::PrelimitExact, cfg.gate)?;
        let limit_ref: Vec<Vec<f64>> =
            cfg.grid.iter().map(|&s| cfg.grid.iter().map(|&t| limit.cov(s, t)).collect()).collect();
        let limit_cmp = compare_ensemble(&summary, &limit_ref, ComparisonTarget::LimitModel, cfg.gate)?;
        let paths = logged_paths(out, hash, n)?;
        let gaussianity = if paths.len() >= MIN_GAUSSIANITY_REPLICATES { gaussianity(&paths).ok() } else { None };
        rungs.push(RungCheck {
            n,
            valid: summary.valid,
            excluded_fraction: summary.excluded_fraction,
            prelimit,
            limit: limit_cmp,
            gaussianity,
        });
    }
    let trend = if cfg.ladder.len() >= 3 {
        Some(convergence_trend(&cfg.ladder, &exact_var, &vec![0.0; exact_var.len()], limit.cov(t_max, t_max))?)
    } else {
        None
    };
    let pass = rungs.iter().all(|r| r.valid && r.prelimit.pass);
    Ok(VerifyReport {
        dim: cfg.dim,
        init: cfg.init,
        gate: cfg.gate,
        sigma: SigmaInputs {
            sigma_eq,
            sigma_eq_estimate,
            curves,
        },
        limit,
        rungs,
        trend,
        pass,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitProvenance {
    pub limit: LimitCovariance,
    pub sigma_eq_estimate: Option<SigmaEqEstimate>,
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub jitter: f64,
    /// Max discrepancy of the sub-fBM two-sided representation on {0.5, 1, 2, 4}.
    pub representation_check: f64,
}

pub fn sample_limit(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<LimitProvenance, CliError> {
    if cfg.dim <= 2 {
        return Err(brw_occupation::Error::UnsupportedDimension(cfg.dim).into());
    }
    let walk = WalkAnalytics::new(cfg.kernel()?)?;
    let (sigma_eq, sigma_eq_estimate) = sigma_eq_of(cfg)?;
    let limit = limit_of(cfg, &walk, sigma_eq)?;
    let mut rng = stream(derive_seed(cfg.seed, LIMIT_SEED_LABEL), 0);
    let sampled = sample_paths(&limit, &cfg.grid, cfg.limit_paths, &mut rng)?;

    let path = out.join("limit_paths.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut header = vec!["path".to_string()];
    header.extend(cfg.grid.iter().map(|t| format!("t={t}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in sampled.paths.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;

    let prov = LimitProvenance {
        limit,
        sigma_eq_estimate,
        grid: cfg.grid.clone(),
        n_paths: cfg.limit_paths,
        jitter: sampled.jitter,
        representation_check: subfbm_representation_check(&[0.5, 1.0, 2.0, 4.0]),
    };
    write_envelope(&out.join("limit_provenance.json"), hash, &prov)?;
    Ok(prov)
}

/// Human-readable tables of the stored summaries and verification report.
pub fn report(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<String, CliError> {
    let mut s = format!("config {hash} (tool {TOOL_VERSION}), d = {}, init {:?}\n\n", cfg.dim, cfg.init);
    s += &format!("{:>8} {:>8} {:>6} {:>8}  Var(X^N_t) +- SE on the grid\n", "N", "reps", "valid", "torus");
    for &n in &cfg.ladder {
        let path = summary_path(out, n);
        if !path.exists() {
            s += &format!("{n:>8} (no summary)\n");
            continue;
        }
        let sum: EnsembleSummary = read_envelope(&path, hash)?;
        let cells: Vec<String> = (0..sum.grid.len())
            .map(|i| format!("t={}: {:.4} +- {:.4}", sum.grid[i], sum.moments.cov[i][i], sum.moments.cov_se[i][i]))
            .collect();
        s += &format!(
            "{n:>8} {:>8} {:>6} {:>8}  {}\n",
            sum.moments.count,
            sum.valid,
            sum.torus_side,
            cells.join(", ")
        );
    }
    let vpath = out.join("verify_report.json");
    if vpath.exists() {
        let v: VerifyReport = read_envelope(&vpath, hash)?;
        s += &format!("\nverification (gate {} SE): {}\n", v.gate, if v.pass { "PASS" } else { "FAIL" });
        s += &format!("{:>8} {:>14} {:>14}\n", "N", "max|z| exact", "max|z| limit");
        for r in &v.rungs {
            s += &format!("{:>8} {:>14.2} {:>14.2}\n", r.n, r.prelimit.max_abs_z, r.limit.max_abs_z);
        }
        if let Some(t) = &v.trend {
            let gaps: Vec<String> = t.gaps.iter().map(|g| format!("{g:.3}")).collect();
            s += &format!("relative gap to the limit: {} (monotone {})\n", gaps.join(", "), t.monotone);
        }
    }
    Ok(s)
}

pub fn write_config(cfg: &ExperimentConfig, hash: &str, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_envelope(&out.join("config.json"), hash, cfg)
}
