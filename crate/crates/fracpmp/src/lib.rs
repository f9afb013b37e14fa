//! Pontryagin maximum principle for optimal control of multi-order Caputo
//! fractional systems: special functions, discrete fractional operators,
//! forward and adjoint solvers, the forward-backward sweep, and a CLI.

pub mod cli;
pub mod error;
pub mod fde;
pub mod fracops;
pub mod pmp;
pub mod problem;
pub mod specfun;

pub use error::{Error, Result};
