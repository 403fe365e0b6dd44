//! Spectral stability toolkit for viscous shear flows in the finite channel
//! T x [0, 1]: Orr-Sommerfeld resolvent solves with the Navier-slip +
//! boundary-corrector decomposition, per-mode linearized Boussinesq
//! evolution with enhanced-dissipation and inviscid-damping diagnostics,
//! and a small pseudo-spectral nonlinear solver for transition-threshold
//! sweeps.

pub mod base_flow;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod linalg;
pub mod nonlinear;
pub mod resolvent;
pub mod semigroup;

pub use error::{Error, Result};
pub use grid::{build_grid, default_resolution, ChannelGrid, NormKind};

/// Rate constant epsilon_0 entering the e^{eps_0 nu^{1/3} t} weights and the
/// resolvent shift -eps_0 nu^{1/3}.
pub const EPSILON_0: f64 = 0.01;

/// Default ledger weight rate: eps_0 / 4.
pub const EPSILON_LEDGER: f64 = EPSILON_0 / 4.0;
