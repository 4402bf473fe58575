//! Sensing-guided dual-function beamforming for mono-static multi-user,
//! multi-target ISAC.
//!
//! The transmit beamformer `W = [W_C, W_S]` is optimized on the complex
//! oblique manifold (every row of `W` has norm `sqrt(P_max / M_T)`):
//!
//! 1. the sum of the DOA Cramér–Rao bounds `tr(F^-1)` is minimized with a
//!    Riemannian Fletcher–Reeves conjugate-gradient solver ([`sgcdf::solve_sp1`]);
//! 2. the sensing-optimal point is then pulled into the set of beamformers
//!    meeting every user's minimum rate by minimizing the summed squared
//!    distance to per-user cones ([`sgcdf::solve_sp2`]).
//!
//! [`radar`] closes the loop with echo synthesis, MUSIC DOA estimation and a
//! Monte-Carlo RMSE harness; [`cli`] drives the experiments and writes CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod cli;
pub mod comm;
pub mod error;
pub mod fisher;
pub mod linalg;
pub mod manifold;
pub mod radar;
pub mod rcg;
pub mod scenario;
pub mod sgcdf;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
