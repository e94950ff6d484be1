//! Ptychographic phase retrieval under photon and speckle noise.
//!
//! The crate covers the full benchmark pipeline: synthetic objects and scan
//! geometries ([`forward`]), noise sampling ([`noise`]), cost functionals and
//! their Wirtinger gradients ([`cost`]), the reconstruction engine with its
//! twenty update schemes and intensity-constraint adaptation ([`engine`]),
//! the alignment-invariant error metric ([`metrics`]) and the multi-realization
//! experiment harness ([`harness`]).

pub mod cost;
pub mod engine;
pub mod error;
pub mod forward;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod noise;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, RealGrid};
