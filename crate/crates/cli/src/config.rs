use std::path::{Path, PathBuf};

use brw_occupation::brw::{BranchingRate, InitSpec, SimParams, DEFAULT_SAFETY};
use brw_occupation::occupation::{content_hash, rung_params};
use brw_occupation::walk::{InitialLaw, WalkKernel};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Nearest-neighbour walk, each of the 2d neighbours with probability 1/(2d).
    Simple { dim: usize },
    /// Explicit jump law: offsets with weights summing to 1.
    Table {
        #[serde(default)]
        name: Option<String>,
        jumps: Vec<(Vec<i64>, f64)>,
    },
}

impl KernelSpec {
    pub fn build(&self) -> brw_occupation::Result<WalkKernel> {
        match self {
            Self::Simple { dim } => {
                if *dim == 0 {
                    return Err(brw_occupation::Error::InvalidKernel("dimension must be >= 1".into()));
                }
                Ok(WalkKernel::simple(*dim))
            }
            Self::Table { name, jumps } => WalkKernel::build(name.clone().unwrap_or_else(|| "table".into()), jumps),
        }
    }
}

/// Pilot runs for the mean branching rate (state-dependent rates only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaPilot {
    pub replicates: usize,
    /// Averaging window for sigma_eq.
    pub t_avg: f64,
    /// Burn-in for sigma_eq.
    pub t_burn: f64,
    /// Knots of the Poisson-start curve on [0, N t_max].
    pub knots: usize,
}

impl Default for SigmaPilot {
    fn default() -> Self {
        Self {
            replicates: 200,
            t_avg: 5.0,
            t_burn: 20.0,
            knots: 17,
        }
    }
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}
fn default_tolerance() -> f64 {
    1e-7
}
fn default_gate() -> f64 {
    brw_occupation::stats::DEFAULT_GATE
}
fn default_paths() -> usize {
    1000
}
fn default_workers() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("brwocc-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub branching: BranchingRate,
    pub theta: f64,
    pub dim: usize,
    pub init: InitialLaw,
    /// Burn-in for the equilibrium start; `null` uses the torus side.
    #[serde(default)]
    pub t_burn: Option<f64>,
    pub ladder: Vec<f64>,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_safety")]
    pub safety_multiplier: f64,
    /// Quadrature tolerance for exact covariances.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_gate")]
    pub gate: f64,
    #[serde(default)]
    pub sigma_pilot: SigmaPilot,
    #[serde(default = "default_paths")]
    pub limit_paths: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    D3Poisson,
    D3Equilibrium,
    D4,
    D5,
    StateDependent,
}

impl Profile {
    pub fn config(self) -> ExperimentConfig {
        let (dim, init, ladder, grid, replicates) = match self {
            Self::D3Poisson => (3, InitialLaw::Poisson, vec![4.0, 8.0, 16.0], vec![0.5, 1.0], 2000),
            Self::D3Equilibrium => (3, InitialLaw::Equilibrium, vec![2.0, 4.0, 8.0], vec![0.5, 1.0], 400),
            Self::D4 => (4, InitialLaw::Poisson, vec![2.0, 4.0, 8.0], vec![0.5, 1.0], 500),
            Self::D5 => (5, InitialLaw::Poisson, vec![1.0, 2.0, 4.0], vec![0.5, 1.0], 500),
            Self::StateDependent => (3, InitialLaw::Poisson, vec![2.0, 4.0, 8.0], vec![0.5, 1.0], 1000),
        };
        let branching = match self {
            Self::StateDependent => BranchingRate::Tabulated {
                values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
                slope: 0.0,
            },
            _ => BranchingRate::Independent { rho: 1.0 },
        };
        ExperimentConfig {
            kernel: KernelSpec::Simple { dim },
            branching,
            theta: 1.0,
            dim,
            init,
            t_burn: None,
            ladder,
            grid,
            replicates,
            seed: 1,
            safety_multiplier: DEFAULT_SAFETY,
            tolerance: default_tolerance(),
            gate: default_gate(),
            sigma_pilot: SigmaPilot::default(),
            limit_paths: default_paths(),
            output_dir: default_out(),
            workers: default_workers(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Hash of everything that affects results; `workers` and `output_dir` do not.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        let map = v.as_object_mut().expect("object");
        map.remove("workers");
        map.remove("output_dir");
        content_hash(&v)
    }

    pub fn kernel(&self) -> Result<WalkKernel, CliError> {
        let k = self.kernel.build().map_err(|e| CliError::Config(format!("kernel: {e}")))?;
        if k.dim() != self.dim {
            return Err(CliError::Config(format!("kernel has d = {} but dim = {}", k.dim(), self.dim)));
        }
        Ok(k)
    }

    /// Base simulation parameters (horizon and torus are refitted per rung).
    pub fn sim_params(&self) -> Result<SimParams, CliError> {
        let ctx = |e: brw_occupation::Error| CliError::Config(e.to_string());
        let mut p = SimParams::new(self.kernel()?, self.branching.clone(), self.theta, 1.0).map_err(ctx)?;
        p.seed = self.seed;
        p.safety_multiplier = self.safety_multiplier;
        p.init = match self.init {
            InitialLaw::Poisson => InitSpec::Poisson,
            InitialLaw::Equilibrium => InitSpec::Burnin { t_burn: self.t_burn },
        };
        p.fit_torus().map_err(ctx)?;
        Ok(p)
    }

    /// Checks every module precondition the subcommands rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta must be finite and > 0, got {}", self.theta));
        }
        if self.replicates < 2 {
            return bad(format!("replicates must be >= 2, got {}", self.replicates));
        }
        if self.ladder.is_empty() || self.ladder.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return bad("ladder must be a nonempty list of positive N".into());
        }
        if self.grid.is_empty() || self.grid[0] <= 0.0 || self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("grid must be positive and strictly increasing".into());
        }
        if !(self.tolerance > 0.0) || !(self.gate > 0.0) {
            return bad("tolerance and gate must be > 0".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        let s = &self.sigma_pilot;
        if s.replicates < 2 || !(s.t_avg > 0.0) || !(s.t_burn >= 0.0) || s.knots < 2 {
            return bad("sigma_pilot needs replicates >= 2, t_avg > 0, t_burn >= 0, knots >= 2".into());
        }
        self.branching.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let base = self.sim_params()?;
        for &n in &self.ladder {
            rung_params(&base, n, &self.grid).map_err(|e| CliError::Config(format!("N = {n}: {e}")))?;
        }
        Ok(())
    }
}
