//! Simulation engine for deterministic n-photon bundle generation from
//! three-level emitters coupled to a one-dimensional waveguide.
//!
//! The crate is organized around the workflow:
//!
//! - [`hilbert`]: basis indexing, state vectors, density matrices, and
//!   sparse transition operators on the 3^n product space.
//! - [`model`]: drive pulses, coherent and effective Hamiltonians, jump
//!   operators, the Lindblad dissipator, the collective decay spectrum, and
//!   pi-pulse calibration.
//! - [`master`]: fixed-step RK4 integration of the driven master equation.
//! - [`trajectories`]: the quantum Monte Carlo wavefunction engine with
//!   reproducible parallel ensembles and click-event logs.
//! - [`stats`]: photon counting statistics and the generalized bundle
//!   correlation g_n^2.

pub mod error;
pub mod hilbert;
pub mod master;
pub mod model;
pub mod stats;
pub mod trajectories;

pub use error::{Error, Result};

pub use num_complex;
