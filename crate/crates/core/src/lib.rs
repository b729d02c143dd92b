//! Numerical laboratory for quantum-classical hybrid dynamics.

// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency_lab;
pub mod ensemble;
pub mod error;
pub mod expr;
pub mod hilbert;
pub mod hybrid_brackets;
pub mod meanfield;
pub mod phase_grid;

pub use error::{Error, Result};
