//! Exact simulation and second-order analysis of critical branching random
//! walks on Z^d, and of the rescaled occupation time at the origin.

pub mod brw;
pub mod error;
pub mod limit;
pub mod numerics;
pub mod occupation;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
