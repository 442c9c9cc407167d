//! Two-dimensional incompressible Navier-Stokes-Fourier flow with
//! dissipative heating, perturbed about a conductive steady state, and the
//! Lyapunov-type functionals used to monitor its return to equilibrium.

// `!(x > 0.0)` style guards are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod harness;
pub mod lemmas;
pub mod linalg;
pub mod steady;
pub mod thermo;

pub use error::{Error, ErrorCategory, Result};
