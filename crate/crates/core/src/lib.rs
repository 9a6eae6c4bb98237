//! Counter braids: sketch construction, message-passing decoding, and
//! asymptotic threshold analysis.
//!
//! A counter braid compresses per-flow counts into a small set of shared
//! counters through a sparse bipartite graph. This crate provides:
//!
//! - [`ensemble`] — degree distributions, the scalar transfer functions of
//!   the decoding recursion, and the potential function;
//! - [`graph`] — finite braid construction (single-layer, two-layer, and
//!   spatially coupled), synthetic flow generation, streaming encoding with
//!   overflow cascade, and a line-oriented text serialization;
//! - [`decoder`] — the min/max belief-propagation decoder, the equivalent
//!   peeling decoder, and layer-by-layer decoding;
//! - [`de_uncoupled`] — scalar density evolution, BP/area/potential
//!   thresholds, and EXIT curves (extended BP and residual-graph);
//! - [`de_coupled`] — spatially coupled density evolution, coupled and
//!   modified-recursion thresholds, and the threshold-gap sweep;
//! - [`montecarlo`] — seeded encode/decode trial harness.
//!
//! Sweeps and Monte-Carlo batches run data-parallel through rayon when the
//! default `parallel` feature is enabled; disabling it falls back to
//! sequential execution with identical results.

pub mod de_coupled;
pub mod de_uncoupled;
pub mod decoder;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod graph;
pub mod montecarlo;
mod quad;
pub mod report;

pub use error::{Error, Result};
pub use exec::Parallelism;
