//! Numerical toolkit for minimal-time null-controllability of the Grushin
//! equation `∂t f - ∂x² f - x² ∂y² f = 1_ω u` on `(-1, 1) × (0, π)`.
//!
//! The pieces, bottom up:
//! - [`spectral`]: ground states of `-d²/dx² + (n x)²`.
//! - [`geometry`]: control regions, paths and the gluing cutoff.
//! - [`solver`]: y-sine modal Crank–Nicolson evolution.
//! - [`control`]: Gramians, observability constants, minimal-time scans, HUM.
//! - [`complexplane`]: polynomial norms on planar domains and Runge families.
//! - [`gluing`]: fictitious-control synthesis from two strip controls.
//!
//! Data-parallel loops go through [`par`]; build without the default
//! `parallel` feature for a purely sequential library.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod par;
pub mod tridiag;
pub mod spectral;
pub mod geometry;
pub mod solver;
pub mod control;
pub mod complexplane;
pub mod gluing;

pub use error::{Error, Result};
pub use par::Execution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
