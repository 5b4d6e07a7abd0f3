//! Rank-aware channel estimation for time-varying mmWave MIMO links.
//!
//! The estimator runs in two phases per time instance. Phase I completes a
//! partially observed measurement matrix with a rank-truncated, shrunk SVD
//! iteration whose rank is tracked over time. Phase II recovers the sparse
//! angular channel with a greedy pursuit that stops after exactly as many
//! atoms as the tracked rank. The angular focus found at one instance shapes
//! the combiner and dictionary of the next.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chanmodel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lrmc;
pub mod pipeline;
pub mod rammd;
pub mod recovery;
pub mod rng;
pub mod sensing;

#[cfg(test)]
mod testutil;

pub use chanmodel::{AngularDictionary, ChannelConfig, ChannelRealization, PathCluster};
pub use error::{Error, Result};
pub use linalg::{Complex64, ComplexMatrix, SvdFactors};
pub use lrmc::{CompletionResult, RankTrack};
pub use pipeline::{Method, PipelineConfig, StepReport, TimelineState};
pub use recovery::SparseEstimate;
pub use sensing::{FrontEnd, Mask, Observation};
