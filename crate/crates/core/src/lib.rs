//! Poisson cylinder processes in hyperbolic space: geometry kernel, invariant
//! line measure, windowed simulation with connectivity analysis, and the
//! associated infinite-type branching process.

pub mod acceptance;
pub mod branching;
pub mod cylproc;
pub mod error;
pub mod hypgeo;
pub mod linemeasure;
pub mod mc;
pub mod particles;
pub mod quadrature;

pub use error::{Error, Result};
