//! Numerical laboratory for interacting particle systems on the torus.

pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod liouville;
pub mod meanfield;
pub mod particles;
pub mod sobolev;
pub mod special;
mod spectral;
pub mod torus;

pub use error::{Error, Result};
