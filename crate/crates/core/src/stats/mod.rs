//! Statistical comparison of ensembles with exact and limit covariances.

mod compare;
mod diagnostics;

pub use compare::{compare, compare_ensemble, ComparisonMeta, ComparisonReport, ComparisonTarget, DEFAULT_GATE};
pub use diagnostics::{
    convergence_trend, gaussianity, scaling_exponent, MomentDiagnostic, ScalingFit, TrendReport,
    MIN_GAUSSIANITY_REPLICATES,
};
