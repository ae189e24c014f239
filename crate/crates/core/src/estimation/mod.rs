//! Tracking cost, adjoint gradient and projected steepest descent for
//! identifying model parameters from measured trajectories.

mod adjoint;
mod cost;
mod descent;
mod feedback;
mod observation;

pub use adjoint::{adjoint_gradient, AdjointResult};
pub use cost::{cost, CostSpec};
pub use descent::{
    identify, projected_gradient, DescentSettings, IdentificationProblem, IdentificationResult,
    IterationRecord, Termination,
};
pub use feedback::{feedback_force, FeedbackForce, SampledSeries};
pub use observation::{CoordinateObservation, LinkPositionObservation, Observation};
