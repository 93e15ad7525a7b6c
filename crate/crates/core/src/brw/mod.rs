//! Event-driven simulation of the critical branching random walk on a torus.

mod equilibrium;
mod moments;
mod rate;
mod sim;
mod torus;

pub use equilibrium::{estimate_sigma_curve, estimate_sigma_eq, poisson_mean_sigma, SigmaCurve, SigmaEqEstimate};
pub use moments::{moment_formula_cov, MomentInputs, SigmaProfile};
pub use rate::BranchingRate;
pub use sim::{
    init_equilibrium, init_poisson, run, EventCounters, EventKind, InitSpec, OriginEvent, SimParams,
    Simulator, Trajectory, DEFAULT_MAX_EVENTS, DEFAULT_MAX_RATE, DEFAULT_SAFETY,
};
pub use torus::{Configuration, Torus, MAX_VOLUME};
