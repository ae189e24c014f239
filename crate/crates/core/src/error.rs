use thiserror::Error;

/// Which block of the step's KKT matrix lost rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularKind {
    /// `M_{k+1} = D2D1Ld + D2Fd-` is singular (irregular Lagrangian or degenerate forcing).
    MassMatrix,
    /// The constraint Jacobian does not have full row rank.
    ConstraintRank,
    /// Both blocks look healthy on their own but the assembled system is singular.
    Coupled,
}

impl std::fmt::Display for SingularKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SingularKind::MassMatrix => "mass matrix",
            SingularKind::ConstraintRank => "constraint rank",
            SingularKind::Coupled => "coupled KKT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range (len {len}) in {context}")]
    Index {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("singular KKT matrix ({kind}, rcond {rcond:e})")]
    SingularKkt { kind: SingularKind, rcond: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible start: constraint residual {residual:e} after {iterations} iterations")]
    InfeasibleStart { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("model definition: {0}")]
    ModelDefinition(String),
}

impl Error {
    /// Strip the step wrapper, if any.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
