//! Numerical laboratory for degenerate elliptic operators in the complement of
//! low-dimensional Ahlfors-regular sets.

pub mod chain;
pub mod config;
pub mod dyadic;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod quadrature;
pub mod sawtooth;
pub mod solver;
pub mod structure;
pub mod verify;
pub mod whitney;

pub use error::{LabError, Result};
