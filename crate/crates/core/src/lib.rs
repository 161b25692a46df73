//! Driven dipole-coupled emitter arrays: collective couplings, open-system
//! dynamics, photon statistics and directional emission.

pub mod couplings;
pub mod dynamics;
pub mod eigenmodes;
pub mod error;
pub mod geometry;
pub mod hilbert;
pub mod linalg;
pub mod observables;
pub mod scenarios;

pub use error::{Error, Result};
