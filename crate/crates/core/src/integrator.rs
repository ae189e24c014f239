//! Forced, constrained discrete Euler-Lagrange one-step map and trajectory rollout.
//!
//! Given `(q_k, p_k)` the step solves for `(q_{k+1}, lambda_k)`:
//!
//! ```text
//! p_k + D1Ld(q_k, q_{k+1}) + Fd-(q_k, q_{k+1}) - Dh(q_k)^T lambda_k = 0
//! h(q_{k+1}) = 0
//! ```
//!
//! and sets `p_{k+1} = D2Ld(q_k, q_{k+1}) + Fd+(q_k, q_{k+1})`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::discrete::{slot_derivatives, DiscreteSlotDerivatives, Interval};
use crate::error::{check_len, Error, Result, SingularKind};
use crate::model::Model;
use crate::types::{DiscreteState, TimeGrid, Trajectory};

/// Below this reciprocal condition number the KKT matrix is treated as singular.
pub const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    /// Start Newton at `q_k`.
    Hold,
    /// Start at `2 q_k - q_{k-1}` (falls back to hold on the first step).
    LinearExtrapolation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Infinity-norm tolerance on the stacked residual.
    pub newton_tol: f64,
    pub max_iters: usize,
    pub predictor: Predictor,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_iters: 50,
            predictor: Predictor::LinearExtrapolation,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "solver needs newton_tol > 0 and max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// LU factorization of `[[M, -Dh(q_k)^T], [Dh(q_{k+1}), 0]]`.
#[derive(Debug, Clone)]
pub struct KktFactor {
    lu: LU<f64, Dyn, Dyn>,
    nq: usize,
    rcond: f64,
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn rcond_estimate(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    match m.clone().try_inverse() {
        Some(inv) => {
            let r = 1.0 / (one_norm(m) * one_norm(&inv));
            if r.is_finite() {
                r
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

impl KktFactor {
    /// Factor the assembled KKT matrix, rejecting near-singular systems.
    pub fn new(newton: &DMatrix<f64>, dh_k: &DMatrix<f64>, dh_next: &DMatrix<f64>) -> Result<Self> {
        let nq = newton.nrows();
        let nh = dh_k.nrows();
        let mut kkt = DMatrix::zeros(nq + nh, nq + nh);
        kkt.view_mut((0, 0), (nq, nq)).copy_from(newton);
        if nh > 0 {
            kkt.view_mut((0, nq), (nq, nh)).copy_from(&(-dh_k.transpose()));
            kkt.view_mut((nq, 0), (nh, nq)).copy_from(dh_next);
        }
        let rcond = rcond_estimate(&kkt);
        if !(rcond >= RCOND_MIN) {
            return Err(Error::SingularKkt {
                kind: diagnose(newton, dh_next),
                rcond,
            });
        }
        Ok(Self {
            lu: kkt.lu(),
            nq,
            rcond,
        })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// Solve `K x = rhs` for each column of `rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(rhs).expect("KKT factorization checked nonsingular")
    }

    pub fn nq(&self) -> usize {
        self.nq
    }
}

fn diagnose(newton: &DMatrix<f64>, dh: &DMatrix<f64>) -> SingularKind {
    if dh.nrows() > 0 {
        let sv = dh.clone().svd(false, false).singular_values;
        let max = sv.max();
        if !(max > 0.0) || sv.min() < RCOND_MIN.sqrt() * max {
            return SingularKind::ConstraintRank;
        }
    }
    if rcond_estimate(newton) < RCOND_MIN {
        // With constraints M only needs to be nonsingular on the tangent space,
        // but a singular M still names the likely culprit.
        return SingularKind::MassMatrix;
    }
    SingularKind::Coupled
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub next: DiscreteState,
    pub newton_iters: usize,
    pub residual: f64,
    /// Factorization at the converged point, reusable for sensitivities.
    pub kkt: KktFactor,
}

/// Everything the linearization needs from a converged step.
pub(crate) struct StepPoint {
    pub slots: DiscreteSlotDerivatives,
    pub dh_k: DMatrix<f64>,
    pub dh_next: DMatrix<f64>,
}

pub(crate) fn constraint_jacobian<M: Model + ?Sized>(model: &M, q: &DVector<f64>, rho: &DVector<f64>) -> DMatrix<f64> {
    let dims = model.dims();
    model
        .constraint(q, rho)
        .map(|c| c.dh)
        .unwrap_or_else(|| DMatrix::zeros(0, dims.nq))
}

/// Infinity norm of `h(q, rho)` (zero for unconstrained models).
pub fn constraint_residual<M: Model + ?Sized>(model: &M, q: &DVector<f64>, rho: &DVector<f64>) -> f64 {
    model.constraint(q, rho).map(|c| c.h.amax()).unwrap_or(0.0)
}

/// Solve one step of the forced, constrained discrete Euler-Lagrange equations.
///
/// `previous_q` (`q_{k-1}`) feeds the linear-extrapolation predictor.
pub fn step<M: Model + ?Sized>(
    model: &M,
    state: &DiscreteState,
    rho: &DVector<f64>,
    interval: &Interval,
    settings: &SolverSettings,
    previous_q: Option<&DVector<f64>>,
) -> Result<StepResult> {
    settings.validate()?;
    let dims = model.dims();
    check_len("step q", dims.nq, state.q.len())?;
    check_len("step p", dims.nq, state.p.len())?;
    check_len("step rho", dims.nrho, rho.len())?;

    let q_k = &state.q;
    let dh_k = constraint_jacobian(model, q_k, rho);
    let mut q_next = match (settings.predictor, previous_q) {
        (Predictor::LinearExtrapolation, Some(prev)) => q_k * 2.0 - prev,
        _ => q_k.clone(),
    };
    let mut lambda = if state.lambda.len() == dims.nh {
        state.lambda.clone()
    } else {
        DVector::zeros(dims.nh)
    };

    let mut residual = f64::INFINITY;
    for iter in 0..=settings.max_iters {
        let slots = slot_derivatives(model, q_k, &q_next, rho, interval);
        let (h, dh_next) = match model.constraint(&q_next, rho) {
            Some(c) => (c.h, c.dh),
            None => (DVector::zeros(0), DMatrix::zeros(0, dims.nq)),
        };
        let r1 = &state.p + &slots.d1 + &slots.fm - dh_k.transpose() * &lambda;
        residual = r1.amax().max(h.amax());
        if !residual.is_finite() {
            break;
        }
        let kkt = KktFactor::new(&slots.newton_matrix(), &dh_k, &dh_next)?;
        if residual <= settings.newton_tol {
            // Equals D2Ld + Fd+ at the exact solution; carrying the leftover residual
            // keeps the momentum balance p_{k+1} - p_k exact, so symmetries are not
            // eroded by the Newton tolerance.
            let p_next = &slots.d2 + &slots.fp + &r1;
            return Ok(StepResult {
                next: DiscreteState {
                    q: q_next,
                    p: p_next,
                    lambda,
                },
                newton_iters: iter,
                residual,
                kkt,
            });
        }
        if iter == settings.max_iters {
            break;
        }
        let mut rhs = DMatrix::zeros(dims.nq + dims.nh, 1);
        rhs.view_mut((0, 0), (dims.nq, 1)).copy_from(&(-r1));
        if dims.nh > 0 {
            rhs.view_mut((dims.nq, 0), (dims.nh, 1)).copy_from(&(-h));
        }
        let delta = kkt.solve(&rhs);
        q_next += delta.view((0, 0), (dims.nq, 1));
        if dims.nh > 0 {
            lambda += delta.view((dims.nq, 0), (dims.nh, 1));
        }
    }
    Err(Error::NewtonDiverged {
        iterations: settings.max_iters,
        residual,
    })
}

/// Re-evaluate the quantities of a converged step for linearization.
pub(crate) fn step_point<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    interval: &Interval,
) -> StepPoint {
    StepPoint {
        slots: slot_derivatives(model, q_k, q_next, rho, interval),
        dh_k: constraint_jacobian(model, q_k, rho),
        dh_next: constraint_jacobian(model, q_next, rho),
    }
}

/// Discrete state seeded by the continuous Legendre transform `p_0 = Lv(q_0, v_0)`.
pub fn initial_state<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
    tol: f64,
) -> Result<DiscreteState> {
    let dims = model.dims();
    check_len("initial q", dims.nq, q0.len())?;
    check_len("initial v", dims.nq, v0.len())?;
    check_len("rho", dims.nrho, rho.len())?;
    let residual = constraint_residual(model, q0, rho);
    if residual > tol {
        return Err(Error::InfeasibleStart {
            iterations: 0,
            residual,
        });
    }
    let p0 = model.lagrangian(q0, v0, rho).lv;
    Ok(DiscreteState {
        q: q0.clone(),
        p: p0,
        lambda: DVector::zeros(dims.nh),
    })
}

/// Roll out the one-step map over `grid`, keeping each step's factorization.
pub fn simulate_detailed<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
    grid: &TimeGrid,
    settings: &SolverSettings,
) -> Result<(Trajectory, Vec<StepResult>)> {
    let mut states = Vec::with_capacity(grid.len());
    let mut results = Vec::with_capacity(grid.steps());
    states.push(initial_state(model, q0, v0, rho, settings.newton_tol)?);
    for k in 0..grid.steps() {
        let prev = k.checked_sub(1).map(|j| &states[j].q);
        let res = step(model, &states[k], rho, &Interval::of(grid, k), settings, prev).map_err(|e| {
            Error::StepFailed {
                step: k,
                source: Box::new(e),
            }
        })?;
        states.push(res.next.clone());
        results.push(res);
    }
    Ok((
        Trajectory {
            grid: *grid,
            states,
        },
        results,
    ))
}

pub fn simulate<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
    grid: &TimeGrid,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    simulate_detailed(model, q0, v0, rho, grid, settings).map(|(t, _)| t)
}

/// Energy `v . Lv - L` evaluated at the midpoint pair of one step; equals
/// `KE + V` for kinetic energies quadratic in `v`.
pub fn discrete_energy<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    dt: f64,
) -> f64 {
    let qm = (q_k + q_next) * 0.5;
    let vm = (q_next - q_k) / dt;
    continuous_energy(model, &qm, &vm, rho)
}

pub fn continuous_energy<M: Model + ?Sized>(
    model: &M,
    q: &DVector<f64>,
    v: &DVector<f64>,
    rho: &DVector<f64>,
) -> f64 {
    let l = model.lagrangian(q, v, rho);
    v.dot(&l.lv) - l.value
}

/// Per-step discrete energies of a trajectory (`steps` values).
pub fn energy_series<M: Model + ?Sized>(model: &M, traj: &Trajectory, rho: &DVector<f64>) -> Vec<f64> {
    traj.states
        .windows(2)
        .map(|w| discrete_energy(model, &w[0].q, &w[1].q, rho, traj.grid.dt()))
        .collect()
}
