//! Truncated Fock-space kernel: basis enumeration, sparse operators,
//! states, density operators and partial traces.

mod density;
mod operator;
mod ops;
pub mod snapshot;
mod space;
mod state;

pub use density::DensityOperator;
pub use operator::{LinearOperator, SparseMatrix};
pub use ops::{
    arithmetic_lower, arithmetic_raise, ladder_lower, ladder_raise, number, spin_op, total_number, vacuum_projector,
    SpinOp,
};
pub(crate) use ops::{lower_sparse, number_sparse, raise_sparse, spin_map};
pub use space::{ModeSpace, Spin, Subsystem, DEFAULT_DIM_LIMIT};
pub use state::HybridState;

pub use num_complex::Complex64 as C64;
