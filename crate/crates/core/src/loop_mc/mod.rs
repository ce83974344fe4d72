//! The θ-weighted random loop model on the torus: Poisson link
//! configurations, loop tracing, birth–death MCMC and the checks built on it.
//!
//! Links live on `edge × (0, β)`. Following a loop upwards, a double bar at
//! time `τ` sends the walk to the other endpoint moving down; a cross sends it
//! there still moving up. Times wrap at `β`.
//!
//! Only same-loop connections at time 0 are estimated.

mod config;
mod fourier;
mod lattice;
mod mcmc;
mod trace;

pub use config::{sample_poisson, Link, LinkConfiguration, LinkId, LinkKind};
pub use fourier::{dual_lattice, estimate_fourier, FourierEstimate, FourierMode};
pub use lattice::TorusLattice;
pub use mcmc::{
    importance_oracle, kappa_sample, mcmc_run, Estimate, ImportanceReport, KappaEstimates, McmcReport,
    McmcSettings, BATCHES, MIN_EFFECTIVE_SAMPLES,
};
pub use trace::{delta_loops_on_toggle, trace_loops, LoopDecomposition, Segment};
