//! Gaussian limits of X^N: closed-form covariances, exact sampling on grids,
//! and the two-sided fBM representation of the Poisson-start limit.

mod covariance;
mod sampler;

pub use covariance::{
    limit_coefficient, representation_discrepancy, subfbm_representation_check, LimitCovariance, LimitModel,
    Provenance, RateDescriptor,
};
pub use sampler::{gram_matrix, min_eigenvalue, sample_paths, SampledPaths, JITTER_CAP};
