//! Morse complexes of Lagrangian action functionals on discretized path
//! spaces.

pub mod critical;
pub mod error;
pub mod lagrangian;
pub mod linalg;
pub mod manifold;
pub mod morse_complex;
pub mod parallel;
pub mod pathspace;
pub mod problem;
pub mod pseudograd;

pub use error::{Error, Result};
