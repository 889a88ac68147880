//! Picard iterations of backward stochastic differential equations.
//!
//! The crate is split into four layers:
//!
//! * [`special`]: Hermite polynomials, factorials and multinomials in exact
//!   and log-space form.
//! * [`analytic`]: closed-form Picard iterates `v^n` of a linear example
//!   PDE/BSDE, its solution `v^∞` and their spatial gradients.
//! * [`bounds`]: upper and lower convergence envelopes, evaluated in
//!   log-space, plus the rate fit that separates `c^k/√k!` from `c^k/k!`.
//! * [`stochastic`]: Brownian paths, Monte-Carlo estimation of the error
//!   norm `e_k`, nested Monte-Carlo Picard iteration for generic drivers and
//!   a checker for a priori estimates of backward Itô processes.

pub mod analytic;
pub mod bounds;
mod error;
pub mod numeric;
pub mod special;
pub mod stochastic;

pub use error::{Error, Result};
