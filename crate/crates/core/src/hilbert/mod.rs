//! Truncated many-emitter Hilbert space, operators and the master equation.

mod basis;
mod lindblad;
mod operators;

pub use basis::{binomial, truncated_dimension, Basis, DEFAULT_MAX_DIM};
pub use lindblad::{
    lindblad_rhs, unvectorize, vectorize, vectorized_liouvillian, vectorized_liouvillian_with_budget,
    DensityState, LindbladGenerator, LIOUVILLIAN_MAX_DIM,
};
pub use operators::{
    decay_operator, drive_operator, effective_hamiltonian, hamiltonian, hopping_operator, lowering_operator,
    number_operator, raising_operator, static_hamiltonian, Drive, Pulse,
};
