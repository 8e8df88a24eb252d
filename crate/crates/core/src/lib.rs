//! Primal-dual damping (PDD) for unconstrained smooth minimization.
//!
//! The minimizer of `f` is recovered as the saddle point of
//! `inf_x sup_p <grad f(x), p> - (eps/2)|p|^2`, which is solved with a
//! linearized, preconditioned primal-dual hybrid gradient iteration:
//!
//! ```text
//! p+ = (p + sigma*A*grad f(x)) / (1 + sigma*eps*A)
//! q  = p+ + omega*(p+ - p)
//! x+ = x - tau*C(x)*q
//! ```
//!
//! The crate is organized as:
//!
//! * [`objective`]: the objective trait, the benchmark problems and a
//!   finite-difference oracle.
//! * [`optimizers`]: PDD and the baseline iterations (GD, NAG, heavy ball,
//!   IGAHD, IGAHD-SC) plus a trajectory-recording driver.
//! * [`dynamics`]: the continuous-time PDD vector field, an RK4 integrator
//!   and the second-order ODE residual check.
//! * [`analysis`]: Lyapunov functional, closed-form quadratic rates and the
//!   parameter recipes with their certificate checks.
//! * [`harness`]: experiment configs, presets, CSV and SVG output.
//! * [`toynet`]: a small ReLU network trained with stochastic variants of the
//!   optimizers on synthetic data.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod optimizers;
pub mod toynet;

pub use error::{PddError, Result};
pub use objective::Objective;
pub use optimizers::{Method, PddParams, PddState, Preconditioner, Record, Trajectory};

/// Dense column vector used for iterates, duals and gradients.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Hessians, preconditioners and block operators.
pub type Matrix = nalgebra::DMatrix<f64>;
