//! Two-periodic Aztec diamond toolkit.
//!
//! Exact Boltzmann sampling, the squishing decomposition into double edges,
//! loops and paths, the four height functions, the rough-smooth interface
//! measures, and numerical checks of the analytic structure (smooth-phase
//! inverse Kasteleyn, extended Airy kernel, Peierls bounds, spanning trees).

pub mod error;
pub mod heights;
pub mod io;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod measures;
pub mod rng;
pub mod sampler;
pub mod squish;
pub mod stats;
pub mod trees;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
