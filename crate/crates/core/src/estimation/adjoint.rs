//! Backward adjoint recursion for the gradient of the tracking cost.
//!
//! ```text
//! adj_kf = D1 l_d(x_kf) + D1 m_d(x_kf)
//! adj_k  = adj_{k+1} A_k + D1 l_d(x_k)            k = kf-1 .. 1
//! dJ     = sum_{k=1}^{kf} adj_k B_{k-1}  (+ D2 terms, zero for tracking costs)
//! ```
//!
//! Co-vectors are stored as columns, so the recursion reads `A_k^T adj_{k+1}`.

use nalgebra::{DMatrix, DVector};

use super::cost::CostSpec;
use crate::error::{check_len, Error, Result};
use crate::linearization::StepSensitivity;
use crate::types::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    pub gradient: DVector<f64>,
    /// Adjoint co-vectors indexed by node; entry 0 is `adj_1 A_0`, which pairs with
    /// a parameter-dependent initial state.
    pub adjoint: Vec<DVector<f64>>,
}

/// `dJ/drho` by one backward sweep. `sens` must hold the local (direct) `B_k`.
/// `z0 = dx_0/drho`, `None` for a parameter-independent start.
pub fn adjoint_gradient(
    traj: &Trajectory,
    sens: &[StepSensitivity],
    spec: &CostSpec,
    z0: Option<&DMatrix<f64>>,
) -> Result<AdjointResult> {
    let kf = traj.states.len().checked_sub(1).ok_or(Error::InvalidArgument("empty trajectory".into()))?;
    check_len("sensitivities per step", kf, sens.len())?;
    check_len("cost horizon", spec.measured.len(), traj.states.len())?;
    if kf == 0 {
        return Err(Error::InvalidArgument("adjoint needs at least one step".into()));
    }
    let nrho = sens[0].b.ncols();

    let mut adjoint = vec![DVector::zeros(0); kf + 1];
    adjoint[kf] = spec.state_gradient(kf, &traj.states[kf].q);
    for k in (1..kf).rev() {
        adjoint[k] = sens[k].a.tr_mul(&adjoint[k + 1]) + spec.state_gradient(k, &traj.states[k].q);
    }
    adjoint[0] = sens[0].a.tr_mul(&adjoint[1]);

    let mut gradient = DVector::zeros(nrho);
    for k in 1..=kf {
        gradient += sens[k - 1].b.tr_mul(&adjoint[k]);
    }
    if let Some(z) = z0 {
        gradient += z.tr_mul(&adjoint[0]);
    }
    Ok(AdjointResult { gradient, adjoint })
}
