//! Axisymmetric vortex rings with swirl: a variational solver on truncated
//! meridian-plane domains, the ring kernel, diagnostics and small-core asymptotics.

// NaN-rejecting guards read as `!(x > 0.0)`; stencil loops index several arrays at once
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod cli;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod variational;

pub use error::{Error, Result};
