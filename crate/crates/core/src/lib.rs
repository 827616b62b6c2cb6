//! Power-series (tree expansion) solution of the modified periodic cubic
//! nonlinear Schrödinger equation, with exact small-scale oracles.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix the precision used by the CLI.

pub mod cli;
pub mod coeffs;
pub mod error;
pub mod indexsets;
pub mod modes;
pub mod scalar;
pub mod treeops;
pub mod refsolve;
pub mod series;
pub mod trees;

pub use error::{Error, Result};
pub use scalar::{CompensatedSum, Omega, Scalar};

pub type ModeSequence64 = modes::ModeSequence<f64>;
pub type ModeSequence32 = modes::ModeSequence<f32>;
pub type SeriesSolution64 = series::SeriesSolution<f64>;
pub type SeriesSolution32 = series::SeriesSolution<f32>;
pub type ExpPoly64 = coeffs::ExpPoly<f64>;
pub type Trajectory64 = refsolve::Trajectory<f64>;
