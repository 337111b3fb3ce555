//! Numerical laboratory for the degenerate Keller–Segel system, its
//! viscous, η-shifted and mollified non-local approximations, and the
//! moderately interacting particle system they arise from.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod fft;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod particles;
mod par;
pub mod pde;
pub mod pressure;
mod quad;
pub mod types;

pub use error::{KsError, Result, Violation};
pub use types::{validate, Grid, RunStatus, ScalarField, SimParams, StepRecord, Trajectory, VectorField};
