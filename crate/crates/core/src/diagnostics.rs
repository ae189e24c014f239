//! Central finite-difference checks of every analytic derivative in the
//! pipeline: model evaluators, discrete slot derivatives, step linearizations
//! and the adjoint gradient.
//!
//! Errors are reported per block as `max |analytic - fd| / max(|fd|, |analytic|)`,
//! with a small absolute floor so identically-zero blocks compare cleanly.

use nalgebra::{DMatrix, DVector};

use crate::discrete::{discrete_force, discrete_lagrangian, slot_derivatives, Interval};
use crate::error::Result;
use crate::estimation::IdentificationProblem;
use crate::integrator::{step, StepResult, SolverSettings};
use crate::linearization::linearize_step;
use crate::model::Model;
use crate::types::{state_pack, state_unpack, DiscreteState};

pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const MULTIPLIER_TOL: f64 = 1e-5;
pub const ADJOINT_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    /// Worst error per check name.
    pub fn summary(&self) -> Vec<Check> {
        let mut out: Vec<Check> = Vec::new();
        for c in &self.checks {
            match out.iter_mut().find(|o| o.name == c.name) {
                Some(o) => o.max_rel_err = o.max_rel_err.max(c.max_rel_err),
                None => out.push(c.clone()),
            }
        }
        out
    }
}

pub fn fd_step(x: f64) -> f64 {
    FD_STEP * (1.0 + x.abs())
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(x: &DVector<f64>, mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        cols.push((f(&xp)? - f(&xm)?) / (2.0 * h));
    }
    let rows = cols.first().map(|c| c.len()).unwrap_or(0);
    Ok(DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r]))
}

pub fn relative_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    if analytic.shape() != fd.shape() {
        return f64::INFINITY;
    }
    if analytic.is_empty() {
        return 0.0;
    }
    let diff = (analytic - fd).amax();
    let scale = fd.amax().max(analytic.amax()).max(SCALE_FLOOR);
    let err = diff / scale;
    if err.is_nan() {
        f64::INFINITY
    } else {
        err
    }
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn check(name: &str, analytic: &DMatrix<f64>, fd: &DMatrix<f64>, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        max_rel_err: relative_error(analytic, fd),
        tolerance,
    }
}

/// Continuous evaluators against differences of their own lower-order terms.
pub fn check_model<M: Model + ?Sized>(
    model: &M,
    q: &DVector<f64>,
    v: &DVector<f64>,
    rho: &DVector<f64>,
    t: f64,
) -> Result<Vec<Check>> {
    let tol = DERIVATIVE_TOL;
    let l = model.lagrangian(q, v, rho);
    let scalar = |x: f64| DVector::from_element(1, x);
    let mut out = vec![
        check("Lq", &row(&l.lq), &fd_jacobian(q, |x| Ok(scalar(model.lagrangian(x, v, rho).value)))?, tol),
        check("Lv", &row(&l.lv), &fd_jacobian(v, |x| Ok(scalar(model.lagrangian(q, x, rho).value)))?, tol),
        check("Lqq", &l.lqq, &fd_jacobian(q, |x| Ok(model.lagrangian(x, v, rho).lq))?, tol),
        check("Lqv", &l.lqv, &fd_jacobian(v, |x| Ok(model.lagrangian(q, x, rho).lq))?, tol),
        check("Lvv", &l.lvv, &fd_jacobian(v, |x| Ok(model.lagrangian(q, x, rho).lv))?, tol),
        check("Lq_rho", &l.lq_rho, &fd_jacobian(rho, |x| Ok(model.lagrangian(q, v, x).lq))?, tol),
        check("Lv_rho", &l.lv_rho, &fd_jacobian(rho, |x| Ok(model.lagrangian(q, v, x).lv))?, tol),
    ];
    if let Some(f) = model.force(q, v, rho, t) {
        let eval = |q: &DVector<f64>, v: &DVector<f64>, r: &DVector<f64>| {
            model.force(q, v, r, t).map(|f| f.f).unwrap_or_else(|| DVector::zeros(q.len()))
        };
        out.push(check("Fq", &f.fq, &fd_jacobian(q, |x| Ok(eval(x, v, rho)))?, tol));
        out.push(check("Fv", &f.fv, &fd_jacobian(v, |x| Ok(eval(q, x, rho)))?, tol));
        out.push(check("F_rho", &f.f_rho, &fd_jacobian(rho, |x| Ok(eval(q, v, x)))?, tol));
    }
    if let Some(c) = model.constraint(q, rho) {
        let h = |x: &DVector<f64>, r: &DVector<f64>| model.constraint(x, r).map(|c| c.h).expect("constrained");
        let dh_row = |x: &DVector<f64>, i: usize| {
            model.constraint(x, rho).map(|c| c.dh.row(i).transpose()).expect("constrained")
        };
        out.push(check("Dh", &c.dh, &fd_jacobian(q, |x| Ok(h(x, rho)))?, tol));
        out.push(check("h_rho", &c.h_rho, &fd_jacobian(rho, |x| Ok(h(q, x)))?, tol));
        for (i, hess) in c.ddh.iter().enumerate() {
            out.push(check("DDh", hess, &fd_jacobian(q, |x| Ok(dh_row(x, i)))?, tol));
        }
    }
    Ok(out)
}

/// Discrete slot derivatives against differences of `Ld`, `Fd-` and the
/// first slot derivatives.
pub fn check_slots<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    interval: &Interval,
) -> Result<Vec<Check>> {
    let tol = DERIVATIVE_TOL;
    let dt = interval.dt;
    let s = slot_derivatives(model, q_k, q_next, rho, interval);
    let ld = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_element(1, discrete_lagrangian(model, a, b, rho, dt));
    let slots = |a: &DVector<f64>, b: &DVector<f64>, r: &DVector<f64>| slot_derivatives(model, a, b, r, interval);
    let fm = |a: &DVector<f64>, b: &DVector<f64>, r: &DVector<f64>| discrete_force(model, a, b, r, interval);
    Ok(vec![
        check("D1Ld", &row(&s.d1), &fd_jacobian(q_k, |x| Ok(ld(x, q_next)))?, tol),
        check("D2Ld", &row(&s.d2), &fd_jacobian(q_next, |x| Ok(ld(q_k, x)))?, tol),
        check("D1D1Ld", &s.d11, &fd_jacobian(q_k, |x| Ok(slots(x, q_next, rho).d1))?, tol),
        check("D2D1Ld", &s.d12, &fd_jacobian(q_next, |x| Ok(slots(q_k, x, rho).d1))?, tol),
        check("D1D2Ld", &s.d21(), &fd_jacobian(q_k, |x| Ok(slots(x, q_next, rho).d2))?, tol),
        check("D2D2Ld", &s.d22, &fd_jacobian(q_next, |x| Ok(slots(q_k, x, rho).d2))?, tol),
        check("D3D1Ld", &s.d3d1, &fd_jacobian(rho, |x| Ok(slots(q_k, q_next, x).d1))?, tol),
        check("D3D2Ld", &s.d3d2, &fd_jacobian(rho, |x| Ok(slots(q_k, q_next, x).d2))?, tol),
        check("Fd-", &col(&s.fm), &col(&fm(q_k, q_next, rho)), tol),
        check("D1Fd-", &s.fm_1, &fd_jacobian(q_k, |x| Ok(fm(x, q_next, rho)))?, tol),
        check("D2Fd-", &s.fm_2, &fd_jacobian(q_next, |x| Ok(fm(q_k, x, rho)))?, tol),
        check("D3Fd-", &s.fm_3, &fd_jacobian(rho, |x| Ok(fm(q_k, q_next, x)))?, tol),
    ])
}

/// Settings tight enough that differences of converged steps resolve small
/// blocks such as `B_k`: the residual is driven to round-off.
pub fn fd_solver_settings() -> SolverSettings {
    SolverSettings {
        newton_tol: 1e-15,
        max_iters: 100,
        predictor: crate::integrator::Predictor::Hold,
    }
}

fn fd_step_solve<M: Model + ?Sized>(
    model: &M,
    state: &DiscreteState,
    rho: &DVector<f64>,
    interval: &Interval,
) -> Result<StepResult> {
    step(model, state, rho, interval, &fd_solver_settings(), None).or_else(|_| {
        let loose = SolverSettings {
            newton_tol: 1e-13,
            ..fd_solver_settings()
        };
        step(model, state, rho, interval, &loose, None)
    })
}

/// `A_k`, `B_k` and the multiplier sensitivities against differences of the
/// converged one-step map.
pub fn check_step<M: Model + ?Sized>(
    model: &M,
    state: &DiscreteState,
    rho: &DVector<f64>,
    interval: &Interval,
) -> Result<Vec<Check>> {
    let result = fd_step_solve(model, state, rho, interval)?;
    let sens = linearize_step(model, state, &result, rho, interval, None, 0)?;
    let x = state.flat();
    let solve = |x: &DVector<f64>, r: &DVector<f64>| -> Result<DiscreteState> {
        let (q, p) = state_unpack(x)?;
        let s = DiscreteState {
            q,
            p,
            lambda: result.next.lambda.clone(),
        };
        Ok(fd_step_solve(model, &s, r, interval)?.next)
    };
    let next_x = |x: &DVector<f64>, r: &DVector<f64>| -> Result<DVector<f64>> {
        let n = solve(x, r)?;
        state_pack(&n.q, &n.p)
    };
    let a_fd = fd_jacobian(&x, |x| next_x(x, rho))?;
    let b_fd = fd_jacobian(rho, |r| next_x(&x, r))?;
    let mut out = vec![
        check("A", &sens.a, &a_fd, DERIVATIVE_TOL),
        check("B", &sens.b, &b_fd, DERIVATIVE_TOL),
    ];
    if model.dims().nh > 0 {
        let nq = state.q.len();
        let dl_fd = fd_jacobian(&x, |x| Ok(solve(x, rho)?.lambda))?;
        let dl_rho = fd_jacobian(rho, |r| Ok(solve(&x, r)?.lambda))?;
        out.push(check("dlambda/dq", &sens.dlambda_dq, &dl_fd.columns(0, nq).into_owned(), MULTIPLIER_TOL));
        out.push(check("dlambda/dp", &sens.dlambda_dp, &dl_fd.columns(nq, nq).into_owned(), MULTIPLIER_TOL));
        out.push(check("dlambda/drho", &sens.dlambda_drho, &dl_rho, MULTIPLIER_TOL));
    }
    Ok(out)
}

/// Adjoint gradient against central differences of the end-to-end cost, as
/// `max_i |g_i - fd_i| / (1 + |fd_i|)`.
pub fn check_adjoint<M: Model + ?Sized>(
    problem: &IdentificationProblem<'_, M>,
    rho: &DVector<f64>,
) -> Result<Check> {
    let (_, grad, _) = problem.gradient_at(rho)?;
    let fd = fd_jacobian(rho, |r| Ok(DVector::from_element(1, problem.cost_at(r)?)))?;
    let err = (0..grad.len())
        .map(|i| (grad[i] - fd[(0, i)]).abs() / (1.0 + fd[(0, i)].abs()))
        .fold(0.0, f64::max);
    Ok(Check {
        name: "adjoint".to_string(),
        max_rel_err: if err.is_nan() { f64::INFINITY } else { err },
        tolerance: ADJOINT_TOL,
    })
}
