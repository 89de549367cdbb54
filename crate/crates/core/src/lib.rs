//! Joint recovery of a smooth graph signal and an unknown sparse transmit
//! power vector from superposed sensor transmissions.
//!
//! The fusion center observes `y = Phi H diag(eta) x + w` where both the
//! sensor readings `x` and the per-sensor amplitudes `eta` are unknown.
//! [`solver::restore`] alternates a closed-form Laplacian-regularized signal
//! update with a power update that walks the vertices of a polytope by
//! simplex pivoting, steering the number of active sensors towards a target.

pub mod error;
pub mod graph;
pub mod lp;
pub mod measurement;
pub mod sim;
pub mod solver;
pub mod baselines;
pub mod bench;

pub use error::{Error, Result};
