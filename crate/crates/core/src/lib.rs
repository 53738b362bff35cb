//! Stochastic blockmodel toolkit.
//!
//! The crate covers the full path from a block model to an estimated
//! partition and back to the population-level quantities used to reason
//! about misclustering:
//!
//! - [`graph`]: graph, labeling and block-matrix types, the SBM sampler and
//!   generators for planted, Gamma and scaled-Bernoulli off-diagonal blocks.
//! - [`likelihood`]: Bernoulli log-likelihood, closed-form MLE / RMLE of the
//!   block matrix, profile likelihoods and exhaustive search for tiny graphs.
//! - [`spectral`]: regularized-Laplacian spectral clustering used to
//!   initialize the fitters.
//! - [`plfit`]: pseudo-likelihood EM fitter for the MLE and RMLE, with
//!   empty-block re-seeding.
//! - [`metrics`]: misclustering count, expected edges and identifiability
//!   diagnostics.
//! - [`theory`]: population likelihoods, pair partitions and refinements.
//!
//! Labels are 0-based in memory (`0..k`); the text formats in [`io`] write
//! them 1-based.

pub mod error;
pub mod graph;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod plfit;
pub mod seed;
pub mod spectral;
pub mod theory;

pub use error::{Result, SbmError};
pub use graph::{BlockMatrix, Graph, Labeling, SbmSpec};

/// Name of the pseudo-random generator behind every seeded operation.
pub const RNG_ALGORITHM: &str = "ChaCha8";
