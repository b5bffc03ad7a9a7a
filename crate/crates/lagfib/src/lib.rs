//! Computational geometry of maximally degenerating families: dual
//! complexes, hybrid coordinates on the real oriented blowup, a fiberwise
//! Kähler family, and torus fibrations on the nearby fibers with
//! quantitative diagnostics.

pub mod base;
pub mod diagnostics;
pub mod dual_complex;
pub mod error;
pub mod flow;
pub mod hybrid;
pub mod kahler;
pub mod model_file;
pub mod quad;
pub mod transfer;

pub use error::{Error, Result};
