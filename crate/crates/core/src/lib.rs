//! Exact simulation and convergence diagnostics for pairwise interacting
//! particle systems on regular networks that are rewired after every event.
//!
//! The fraction of nodes in each state concentrates, as `N` grows, around the
//! solution of a quadratic ODE. This crate simulates the microscopic chain,
//! integrates that ODE, and measures every process that links the two.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod microsim;
pub mod model;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
pub use fluid::{integrate, logistic_oracle, vector_field, FluidPath};
pub use microsim::{
    couple_to_counts, sample_auxiliary, simulate, simulate_optimized, EventRecord, MacroTrajectory,
    MicroState, ShuffleOn, SimOptions, SimOutput, Snapshots,
};
pub use model::{derive_increment_tensor, validate_model, IncrementTensor, ModelSpec, UpdateRule};
pub use network::{decompose_matchings, shuffle_states, RegularBipartiteGraph};
pub use rng::SimRng;
