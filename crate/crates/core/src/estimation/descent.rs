//! Projected steepest descent with Armijo backtracking.

use nalgebra::DVector;

use super::adjoint::adjoint_gradient;
use super::cost::{cost, CostSpec};
use crate::error::{Error, Result};
use crate::integrator::{simulate, simulate_detailed, SolverSettings};
use crate::linearization::{initial_parameter_sensitivity, linearize_trajectory};
use crate::model::{ExternalForce, Model, WithForce};
use crate::types::{ParameterVector, TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentSettings {
    /// Sufficient-decrease fraction.
    pub alpha: f64,
    /// Backtracking factor.
    pub beta: f64,
    pub max_iters: usize,
    /// Threshold on the projected gradient norm.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    /// Keep the simulated observation path of every iterate.
    pub record_paths: bool,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.4,
            max_iters: 200,
            grad_tol: 1e-3,
            initial_step: 1.0,
            max_backtracks: 40,
            record_paths: false,
        }
    }
}

impl DescentSettings {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.alpha) || !unit(self.beta) {
            return Err(Error::InvalidArgument("Armijo alpha and beta must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) || !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("initial_step must be positive, grad_tol non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailure => "line_search_failure",
        }
    }
}

/// One descent iteration as evaluated at its starting iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub rho: DVector<f64>,
    pub cost: f64,
    pub gradient: DVector<f64>,
    pub projected_grad_norm: f64,
    /// Accepted step length, `None` if the iteration stopped before a step.
    pub step: Option<f64>,
    pub backtracks: usize,
    /// Cost at the accepted candidate.
    pub next_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub rho_opt: ParameterVector,
    /// Cost at each iterate, starting with `rho0`.
    pub cost_history: Vec<f64>,
    /// Projected gradient norm at each evaluated iterate.
    pub grad_norm_history: Vec<f64>,
    /// Accepted steps.
    pub iterations: usize,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
    /// Observation paths per iterate (only with `record_paths`).
    pub paths: Vec<Vec<DVector<f64>>>,
}

/// The fixed data of an identification run: model, initial conditions, grid,
/// cost and optional external forcing.
pub struct IdentificationProblem<'a, M: ?Sized> {
    pub model: &'a M,
    pub q0: DVector<f64>,
    pub v0: DVector<f64>,
    pub grid: TimeGrid,
    pub spec: CostSpec,
    pub solver: SolverSettings,
    pub force: Option<&'a dyn ExternalForce>,
}

impl<M: Model + ?Sized> IdentificationProblem<'_, M> {
    fn with_model<R>(&self, f: impl FnOnce(&dyn Model) -> R) -> R {
        match self.force {
            Some(extra) => f(&WithForce::new(self.model, extra)),
            None => f(&self.model),
        }
    }

    pub fn simulate(&self, rho: &DVector<f64>) -> Result<Trajectory> {
        self.with_model(|m| simulate(m, &self.q0, &self.v0, rho, &self.grid, &self.solver))
    }

    pub fn cost_at(&self, rho: &DVector<f64>) -> Result<f64> {
        cost(&self.simulate(rho)?, &self.spec)
    }

    /// Cost, adjoint gradient and the trajectory they were computed on.
    pub fn gradient_at(&self, rho: &DVector<f64>) -> Result<(f64, DVector<f64>, Trajectory)> {
        self.with_model(|m| {
            let (traj, results) = simulate_detailed(m, &self.q0, &self.v0, rho, &self.grid, &self.solver)?;
            let z0 = initial_parameter_sensitivity(m, &self.q0, &self.v0, rho);
            let sens = linearize_trajectory(m, &traj, Some(&results), rho, Some(&z0))?;
            let adj = adjoint_gradient(&traj, &sens, &self.spec, Some(&z0))?;
            let j = cost(&traj, &self.spec)?;
            Ok((j, adj.gradient, traj))
        })
    }

    fn observation_path(&self, traj: &Trajectory) -> Vec<DVector<f64>> {
        traj.configurations().map(|q| self.spec.observation.eval(q)).collect()
    }
}

/// Gradient with components zeroed where the lower bound is active and the
/// descent direction would leave the box.
pub fn projected_gradient(rho: &ParameterVector, gradient: &DVector<f64>) -> DVector<f64> {
    let active = rho.active_bounds(0.0);
    DVector::from_fn(gradient.len(), |i, _| {
        if active[i] && gradient[i] > 0.0 {
            0.0
        } else {
            gradient[i]
        }
    })
}

/// Minimize the tracking cost over the parameter box.
///
/// Each iteration re-simulates, re-linearizes and takes the adjoint gradient,
/// then backtracks `gamma <- beta * gamma` from `initial_step` until
/// `J(clamp(rho - gamma g)) <= J(rho) - alpha * gamma * |g|^2` with `g` the
/// projected gradient. A candidate whose simulation fails counts as infinite cost.
pub fn identify<M: Model + ?Sized>(
    problem: &IdentificationProblem<'_, M>,
    rho0: &ParameterVector,
    settings: &DescentSettings,
) -> Result<IdentificationResult> {
    settings.validate()?;
    let mut rho = rho0.clone();
    let mut result = IdentificationResult {
        rho_opt: rho0.clone(),
        cost_history: Vec::new(),
        grad_norm_history: Vec::new(),
        iterations: 0,
        termination: Termination::MaxIters,
        records: Vec::new(),
        paths: Vec::new(),
    };

    let mut iteration = 0;
    loop {
        let (j, grad, traj) = problem.gradient_at(rho.values())?;
        let pg = projected_gradient(&rho, &grad);
        let pg_norm = pg.norm();
        if result.cost_history.is_empty() {
            result.cost_history.push(j);
        }
        result.grad_norm_history.push(pg_norm);
        if settings.record_paths {
            result.paths.push(problem.observation_path(&traj));
        }
        let mut record = IterationRecord {
            rho: rho.values().clone(),
            cost: j,
            gradient: grad,
            projected_grad_norm: pg_norm,
            step: None,
            backtracks: 0,
            next_cost: None,
        };

        if pg_norm < settings.grad_tol {
            result.termination = Termination::GradTol;
            result.records.push(record);
            break;
        }
        if iteration >= settings.max_iters {
            result.termination = Termination::MaxIters;
            result.records.push(record);
            break;
        }

        let mut gamma = settings.initial_step;
        let mut accepted = None;
        for bt in 0..=settings.max_backtracks {
            let candidate = rho.clamp(&(rho.values() - &pg * gamma));
            let jc = problem.cost_at(&candidate).unwrap_or(f64::INFINITY);
            if jc.is_finite() && jc <= j - settings.alpha * gamma * pg_norm * pg_norm {
                accepted = Some((candidate, jc));
                record.backtracks = bt;
                break;
            }
            gamma *= settings.beta;
        }
        match accepted {
            Some((candidate, jc)) => {
                record.step = Some(gamma);
                record.next_cost = Some(jc);
                result.records.push(record);
                rho = rho.with_values(&candidate)?;
                result.cost_history.push(jc);
                result.iterations += 1;
                iteration += 1;
            }
            None => {
                record.backtracks = settings.max_backtracks;
                result.records.push(record);
                result.termination = Termination::LineSearchFailure;
                break;
            }
        }
    }
    result.rho_opt = rho;
    Ok(result)
}
