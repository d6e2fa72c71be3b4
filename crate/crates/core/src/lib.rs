//! Temporal trajectories of dynamic networks from second-moment geometry.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`model`]: population model, synthetic presets, sampling and
//!    closed-form population geometry.
//! 2. [`embedding`]: unfolded adjacency spectral embedding (original and
//!    modified flavors).
//! 3. [`geometry`]: displacement second moments, trace / maximum
//!    directional / mode-wise distances and the aggregated mode basis.
//! 4. [`trajectory`]: classical MDS of time points, alignment and
//!    conditioning diagnostics.
//! 5. [`attribution`]: node-level decompositions and their trajectory
//!    bounds.
//! 6. [`changepoint`]: single-knot piecewise fits, trend scores, peak fusion
//!    and evaluation.
//! 7. [`evaluation`]: seeded recovery and detection studies.
//!
//! Array indices are 0-based. Change-point times and exported time labels
//! are 1-based.

pub mod attribution;
pub mod changepoint;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
