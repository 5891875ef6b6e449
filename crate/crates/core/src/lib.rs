//! Exact diagonalization and spectral chaos diagnostics for the Tavis-Cummings
//! lattice and its driven single-site impurity model.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod classical;
pub mod crossover;
pub mod error;
pub mod hamiltonian;
pub mod interp;
mod ode;
pub mod par;
pub mod special;
pub mod spectra;
pub mod sff;
pub mod stats;
pub mod unfolding;

pub use error::{Error, Result};
