//! Numerics for one-dimensional dislocation dynamics seen from both ends:
//! the nonlocal Allen-Cahn phase field driven by the half Laplacian, and the
//! singular interacting-particle ODE with annihilation that the field's
//! transition layers follow as the layer width goes to zero.
//!
//! The crate is organized around that correspondence:
//!
//! * [`potential`] — periodic multi-well potentials `W`;
//! * [`halflap`] — spectral and principal-value discretizations of
//!   `-(-Delta)^{1/2}`;
//! * [`profiles`] — the standing layer `u`, its corrector `psi`, and the
//!   mobility `c0 = 1 / int (u')^2`;
//! * [`particles`] — the ODE system with collision detection and the
//!   annihilation rule, plus the associated step function and its envelope;
//! * [`phasefield`] — an IMEX pseudospectral solver for the evolution
//!   equation with transition-layer tracking;
//! * [`analysis`] — supersolution ansatz checks, the patching and dipole
//!   inequalities, the asymmetric-split experiment, and the
//!   small-layer-width convergence harness;
//! * [`cli`] — the batch front end used by the `peierls` binary.
//!
//! See the crate examples for one runnable program per capability.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod halflap;
pub mod interp;
pub mod particles;
pub mod phasefield;
pub mod potential;
pub mod profiles;
pub mod report;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
