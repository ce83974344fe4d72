//! Bounds engine and Monte Carlo cross-checker for θ-weighted random loop
//! models on the d-dimensional torus.
//!
//! * [`quadrature`]: tensor Gauss–Chebyshev and scrambled Sobol rules, plus the
//!   lattice Green function moments used to split off `1/ε` singularities.
//! * [`rp_integrals`]: the reflection-positivity integrals and their limits.
//! * [`bounds`]: connection-probability bounds and long-range-order thresholds.
//! * [`loop_mc`]: loop tracing and birth–death MCMC for the loop model.
//! * [`cli`]: run records and the command implementations behind `loopbound`.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod loop_mc;
pub(crate) mod optimize;
pub mod quadrature;
pub mod rp_integrals;

pub use error::{Error, Result};
