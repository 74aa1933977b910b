//! Immersed high-order spectral elements for the scalar wave equation.
//!
//! The crate covers the full chain from GLL bases and cut-cell quadrature over
//! element and global assembly (with Nitsche terms for weak Dirichlet
//! conditions) to element-level eigenvalue stabilization of cut elements and
//! explicit central-difference time integration.

pub mod analysis;
pub mod assembly;
pub mod eigensolve;
mod error;
pub mod geometry;
pub mod linalg;
pub mod polybasis;
pub mod stabilize;
pub mod timeint;

pub use error::{Error, Result};
