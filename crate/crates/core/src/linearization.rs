//! Exact linearization of the implicit one-step map.
//!
//! The converged step satisfies `G(q_{k+1}, lambda_k; q_k, p_k, rho) = 0` with
//!
//! ```text
//! G1 = p_k + D1Ld(q_k, q_{k+1}) + Fd-(q_k, q_{k+1}) - Dh(q_k)^T lambda_k
//! G2 = h(q_{k+1})
//! ```
//!
//! Differentiating gives `K [dq_{k+1}; dlambda_k] = -dG/d(q_k, p_k, rho)` with the
//! same KKT matrix `K` the Newton solve uses, so one factorization serves every
//! right-hand side. The momentum rows follow from `p_{k+1} = D2Ld + Fd+`.
//! Without constraints the `p_k` column reduces to `dq_{k+1}/dp_k = -M_{k+1}^{-1}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::discrete::Interval;
use crate::error::{check_len, Error, Result};
use crate::integrator::{step_point, KktFactor, StepResult};
use crate::model::Model;
use crate::types::{DiscreteState, LinearizationPair, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct StepSensitivity {
    pub step_index: usize,
    /// `d x_{k+1} / d x_k`, `2nq x 2nq`.
    pub a: DMatrix<f64>,
    /// Direct `d x_{k+1} / d rho` with `x_k` held fixed, `2nq x nrho`.
    pub b: DMatrix<f64>,
    /// Total `d x_{k+1} / d rho` including the dependence of `x_k` on `rho`
    /// (`a * dx_k/drho + b`); equals `b` when no upstream sensitivity was supplied.
    pub b_total: DMatrix<f64>,
    pub dlambda_dq: DMatrix<f64>,
    pub dlambda_dp: DMatrix<f64>,
    pub dlambda_drho: DMatrix<f64>,
}

impl StepSensitivity {
    pub fn pair(&self) -> LinearizationPair {
        LinearizationPair {
            a: self.a.clone(),
            b: self.b.clone(),
            step_index: self.step_index,
        }
    }

    pub fn nq(&self) -> usize {
        self.a.nrows() / 2
    }
}

#[allow(clippy::too_many_arguments)]
fn linearize_with<M: Model + ?Sized>(
    model: &M,
    state_k: &DiscreteState,
    next: &DiscreteState,
    kkt: Option<&KktFactor>,
    rho: &DVector<f64>,
    interval: &Interval,
    dx_prev: Option<&DMatrix<f64>>,
    step_index: usize,
) -> Result<StepSensitivity> {
    let dims = model.dims();
    let (nq, nh, nrho) = (dims.nq, dims.nh, dims.nrho);
    check_len("linearize q_k", nq, state_k.q.len())?;
    check_len("linearize q_k+1", nq, next.q.len())?;
    check_len("linearize multipliers", nh, next.lambda.len())?;

    let point = step_point(model, &state_k.q, &next.q, rho, interval);
    let s = &point.slots;
    let owned;
    let kkt = match kkt {
        Some(k) => k,
        None => {
            owned = KktFactor::new(&s.newton_matrix(), &point.dh_k, &point.dh_next)?;
            &owned
        }
    };

    let lambda = &next.lambda;
    let (hess_lambda, rho_lambda) = match model.constraint(&state_k.q, rho) {
        Some(c) => (c.contract_hessian(lambda), c.contract_rho(lambda)),
        None => (DMatrix::zeros(nq, nq), DMatrix::zeros(nq, nrho)),
    };
    let h_rho_next = match model.constraint(&next.q, rho) {
        Some(c) => c.h_rho,
        None => DMatrix::zeros(0, nrho),
    };

    // Right-hand sides for [d/dq_k | d/dp_k | d/drho].
    let ncols = 2 * nq + nrho;
    let mut rhs = DMatrix::zeros(nq + nh, ncols);
    rhs.view_mut((0, 0), (nq, nq))
        .copy_from(&(-(&s.d11 + &s.fm_1 - &hess_lambda)));
    rhs.view_mut((0, nq), (nq, nq))
        .copy_from(&(-DMatrix::<f64>::identity(nq, nq)));
    rhs.view_mut((0, 2 * nq), (nq, nrho))
        .copy_from(&(-(&s.d3d1 + &s.fm_3 - &rho_lambda)));
    if nh > 0 {
        rhs.view_mut((nq, 2 * nq), (nh, nrho)).copy_from(&(-&h_rho_next));
    }
    let sol = kkt.solve(&rhs);
    let dq_next = sol.view((0, 0), (nq, ncols)).into_owned();

    // p_{k+1} = D2Ld + Fd+: total derivative through q_{k+1} plus direct slots.
    let p_from_next = &s.d22 + &s.fp_2;
    let mut dp_next = &p_from_next * &dq_next;
    {
        let mut dq_block = dp_next.view_mut((0, 0), (nq, nq));
        dq_block += s.d21() + &s.fp_1;
    }
    {
        let mut drho_block = dp_next.view_mut((0, 2 * nq), (nq, nrho));
        drho_block += &s.d3d2 + &s.fp_3;
    }

    let mut a = DMatrix::zeros(2 * nq, 2 * nq);
    a.view_mut((0, 0), (nq, 2 * nq)).copy_from(&dq_next.columns(0, 2 * nq));
    a.view_mut((nq, 0), (nq, 2 * nq)).copy_from(&dp_next.columns(0, 2 * nq));
    let mut b = DMatrix::zeros(2 * nq, nrho);
    b.view_mut((0, 0), (nq, nrho)).copy_from(&dq_next.columns(2 * nq, nrho));
    b.view_mut((nq, 0), (nq, nrho)).copy_from(&dp_next.columns(2 * nq, nrho));

    let b_total = match dx_prev {
        Some(z) => {
            if z.nrows() != 2 * nq || z.ncols() != nrho {
                return Err(Error::Dimension {
                    context: "upstream parameter sensitivity",
                    expected: 2 * nq * nrho,
                    actual: z.nrows() * z.ncols(),
                });
            }
            &a * z + &b
        }
        None => b.clone(),
    };

    let dl = sol.view((nq, 0), (nh, ncols));
    Ok(StepSensitivity {
        step_index,
        dlambda_dq: dl.columns(0, nq).into_owned(),
        dlambda_dp: dl.columns(nq, nq).into_owned(),
        dlambda_drho: dl.columns(2 * nq, nrho).into_owned(),
        a,
        b,
        b_total,
    })
}

/// Linearize one converged step, reusing its KKT factorization.
///
/// `dx_prev` is `d x_k / d rho`; `None` means zero, which is only right at `k = 0`
/// (or when the caller needs just the local `b`).
pub fn linearize_step<M: Model + ?Sized>(
    model: &M,
    state_k: &DiscreteState,
    result: &StepResult,
    rho: &DVector<f64>,
    interval: &Interval,
    dx_prev: Option<&DMatrix<f64>>,
    step_index: usize,
) -> Result<StepSensitivity> {
    linearize_with(
        model,
        state_k,
        &result.next,
        Some(&result.kkt),
        rho,
        interval,
        dx_prev,
        step_index,
    )
}

/// `d x_0 / d rho` for a start seeded by `p_0 = Lv(q_0, v_0, rho)`.
pub fn initial_parameter_sensitivity<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
) -> DMatrix<f64> {
    let dims = model.dims();
    let l = model.lagrangian(q0, v0, rho);
    let mut z = DMatrix::zeros(2 * dims.nq, dims.nrho);
    z.view_mut((dims.nq, 0), (dims.nq, dims.nrho)).copy_from(&l.lv_rho);
    z
}

/// Linearize every step of `traj`. Steps are independent and run in parallel;
/// `b_total` is then threaded forward from `z0 = d x_0 / d rho`.
///
/// `results` are the step results of the rollout (reused factorizations);
/// without them each KKT matrix is refactored.
pub fn linearize_trajectory<M: Model + ?Sized>(
    model: &M,
    traj: &Trajectory,
    results: Option<&[StepResult]>,
    rho: &DVector<f64>,
    z0: Option<&DMatrix<f64>>,
) -> Result<Vec<StepSensitivity>> {
    let steps = traj.grid.steps();
    if traj.states.len() != steps + 1 {
        return Err(Error::Dimension {
            context: "trajectory length",
            expected: steps + 1,
            actual: traj.states.len(),
        });
    }
    if let Some(r) = results {
        check_len("step results", steps, r.len())?;
    }
    let mut sens = (0..steps)
        .into_par_iter()
        .map(|k| {
            linearize_with(
                model,
                &traj.states[k],
                &traj.states[k + 1],
                results.map(|r| &r[k].kkt),
                rho,
                &Interval::of(&traj.grid, k),
                None,
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let nx = 2 * model.dims().nq;
    let mut z = z0
        .cloned()
        .unwrap_or_else(|| DMatrix::zeros(nx, model.dims().nrho));
    for s in sens.iter_mut() {
        s.b_total = &s.a * &z + &s.b;
        z = s.b_total.clone();
    }
    Ok(sens)
}

/// `Phi(k2, k1) = A_{k2-1} ... A_{k1}`, with `Phi(k, k) = I`.
pub fn state_transition(sens: &[StepSensitivity], k1: usize, k2: usize) -> Result<DMatrix<f64>> {
    if k2 < k1 {
        return Err(Error::InvalidArgument(format!("state transition needs k2 >= k1 ({k2} < {k1})")));
    }
    if k2 > sens.len() {
        return Err(Error::Index {
            context: "state transition",
            index: k2,
            len: sens.len(),
        });
    }
    let n = sens.first().map(|s| s.a.nrows()).unwrap_or(0);
    let mut phi = DMatrix::identity(n, n);
    for s in &sens[k1..k2] {
        phi = &s.a * phi;
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate_detailed, SolverSettings};
    use crate::models::FreeParticle;
    use crate::types::TimeGrid;

    #[test]
    fn free_particle_linearization_is_exact() {
        let m = FreeParticle::new(1, 2.0).unwrap();
        let dt = 0.05;
        let grid = TimeGrid::new(0.0, dt, 3).unwrap();
        let (traj, res) = simulate_detailed(
            &m,
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(0),
            &grid,
            &SolverSettings::default(),
        )
        .unwrap();
        let s = linearize_trajectory(&m, &traj, Some(&res), &DVector::zeros(0), None).unwrap();
        for si in &s {
            let expect = DMatrix::from_row_slice(2, 2, &[1.0, dt / 2.0, 0.0, 1.0]);
            assert!((&si.a - expect).amax() < 1e-15);
            assert_eq!(si.b.ncols(), 0);
        }
        let phi = state_transition(&s, 1, 1).unwrap();
        assert_eq!(phi, DMatrix::identity(2, 2));
        assert_eq!(state_transition(&s, 0, 1).unwrap(), s[0].a);
        assert!(state_transition(&s, 2, 1).is_err());
        assert!(state_transition(&s, 0, 4).is_err());
    }
}
