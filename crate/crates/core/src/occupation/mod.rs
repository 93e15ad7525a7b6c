//! Renormalized occupation times X^N: replicate ensembles and the exact
//! finite-N covariance they are checked against.

mod ensemble;
mod path;
mod prelimit;

pub use ensemble::{
    build_ensemble, content_hash, initial_law, rung_params, run_replicate, sample_moments, summarize,
    EnsembleRun, EnsembleSummary, ReplicateFailure, ReplicateOutcome, ReplicateRecord, SampleMoments,
    MAX_FAILURE_FRACTION,
};
pub use path::{renormalize, OccupationPath};
pub use prelimit::{exact_prelimit_cov, increment_second_moment};
