//! Time evolution and steady states of the master equation.

mod integrator;
mod steady;

pub use integrator::{evolve, EvolveOptions, Trajectory};
pub use steady::{
    stationarity_residual, steady_state, steady_state_of, SteadyStateMethod, SteadyStateOptions, SteadyStateReport,
};
