//! Midpoint variational integrators for forced, holonomically constrained
//! mechanical systems, with exact step linearizations and a discrete adjoint
//! gradient for identifying model parameters from measured trajectories.
//!
//! The pieces, bottom up:
//!
//! * [`model`]: the continuous model interface (Lagrangian, forces, constraints).
//! * [`discrete`]: midpoint discrete Lagrangian and its slot derivatives.
//! * [`models`]: pendulum, serial chain and closed planar loop.
//! * [`integrator`]: the implicit one-step map and trajectory rollout.
//! * [`linearization`]: `A_k`, `B_k` and multiplier sensitivities.
//! * [`estimation`]: tracking cost, adjoint gradient and projected descent.
//! * [`diagnostics`]: finite-difference checks of all analytic derivatives.

pub mod diagnostics;
pub mod discrete;
mod error;
pub mod estimation;
pub mod integrator;
pub mod linearization;
pub mod model;
pub mod models;
pub mod oracle;
pub mod types;

pub use error::{Error, Result, SingularKind};
pub use model::{Dims, ExternalForce, Model, WithForce};
pub use types::{
    state_pack, state_unpack, Configuration, DiscreteState, LinearizationPair, ParameterVector,
    TimeGrid, Trajectory, POSITIVE_LOWER_BOUND,
};
