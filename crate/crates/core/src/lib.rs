//! Simulation of post-selected phonon subtraction ("boson sculpting") in a
//! trapped-ion chain: exact gate algebra on truncated Fock spaces, the
//! laser-driven interaction Hamiltonian, Lindblad dynamics with heating and
//! dephasing, entanglement diagnostics and the protocol-level experiments.
//!
//! Units: time in milliseconds, angular frequencies and couplings in rad/ms.

pub mod cli;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod gates;
pub mod laser;
pub mod sculpting;

pub use error::{Error, Result};
pub use fock::{DensityOperator, HybridState, LinearOperator, ModeSpace, Spin, Subsystem, C64};
