//! Concrete test systems with analytic derivatives.

mod chain;
mod closed_loop;
mod def;
mod particle;
mod pendulum;

pub use chain::{ChainBuilder, ChainModel, PointKinematics, StiffnessGrouping};
pub use closed_loop::{ClosedLoopModel, PROJECTION_MAX_ITERS, PROJECTION_TOL};
pub use def::{AnyModel, GroupingDef, ModelDef};
pub use particle::FreeParticle;
pub use pendulum::{Pendulum, PendulumBuilder};
