//! Mixed classical-quantum dynamics of small quantum systems in a classical
//! thermal environment.
//!
//! The crate propagates Brownian state vectors with the stochastic nonlinear
//! Schrödinger-Langevin equation, the average density matrix with the
//! nonlinear quantum Fokker-Planck equation, and provides a microscopic
//! oscillator-bath model as an independent reference. Two-level closed forms
//! and an extended-time (time wave-packet) model round it out.

// Negated float comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bath;
pub mod ensemble;
pub mod environment;
pub mod error;
pub mod extended;
pub mod fokker_planck;
pub mod io;
pub mod langevin;
pub mod quantum;
pub mod stats;

pub use error::{Error, Result};
pub use quantum::{
    bloch_from_density, density_from_bloch, expectation, two_level_operators, BlochVector, DensityMatrix,
    HermitianOperator, QuantumState, TwoLevelParams, C64,
};
