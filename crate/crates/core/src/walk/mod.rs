//! Random-walk analytics: kernels, transition probabilities, Green functions.

mod analytics;
mod kernel;
mod lattice;

pub use analytics::{
    gaussian_density, norming, GreenValue, InitialLaw, WalkAnalytics, WalkIntegrals,
    DEFAULT_MAX_CELLS, MAX_TIME,
};
pub use kernel::{CovMatrix, Jump, WalkKernel};
pub use lattice::LatticeField;
