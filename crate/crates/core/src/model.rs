//! The continuous mechanical model: Lagrangian, generalized forces and
//! holonomic constraints, each with the analytic derivatives the integrator
//! and the linearization need.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Generalized coordinates.
    pub nq: usize,
    /// Holonomic constraints.
    pub nh: usize,
    /// Parameters.
    pub nrho: usize,
}

/// `L(q, v, rho)` and its derivatives.
///
/// Mixed blocks are indexed by the first symbol along rows:
/// `lqv[(i, j)] = d2L / dq_i dv_j`, `lq_rho[(i, a)] = d2L / dq_i drho_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianTerms {
    pub value: f64,
    pub lq: DVector<f64>,
    pub lv: DVector<f64>,
    pub lqq: DMatrix<f64>,
    pub lqv: DMatrix<f64>,
    pub lvv: DMatrix<f64>,
    pub lq_rho: DMatrix<f64>,
    pub lv_rho: DMatrix<f64>,
}

impl LagrangianTerms {
    pub fn zeros(nq: usize, nrho: usize) -> Self {
        Self {
            value: 0.0,
            lq: DVector::zeros(nq),
            lv: DVector::zeros(nq),
            lqq: DMatrix::zeros(nq, nq),
            lqv: DMatrix::zeros(nq, nq),
            lvv: DMatrix::zeros(nq, nq),
            lq_rho: DMatrix::zeros(nq, nrho),
            lv_rho: DMatrix::zeros(nq, nrho),
        }
    }
}

/// Generalized force `F_c(q, v, rho, t)`; Jacobians have the force index on rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceTerms {
    pub f: DVector<f64>,
    pub fq: DMatrix<f64>,
    pub fv: DMatrix<f64>,
    pub f_rho: DMatrix<f64>,
}

impl ForceTerms {
    pub fn zeros(nq: usize, nrho: usize) -> Self {
        Self {
            f: DVector::zeros(nq),
            fq: DMatrix::zeros(nq, nq),
            fv: DMatrix::zeros(nq, nq),
            f_rho: DMatrix::zeros(nq, nrho),
        }
    }

    pub fn accumulate(&mut self, other: &ForceTerms) {
        self.f += &other.f;
        self.fq += &other.fq;
        self.fv += &other.fv;
        self.f_rho += &other.f_rho;
    }
}

/// Holonomic constraint `h(q, rho) = 0` with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTerms {
    /// `h`, length `nh`.
    pub h: DVector<f64>,
    /// `Dh`, `nh x nq`.
    pub dh: DMatrix<f64>,
    /// Hessian of each constraint row, `nh` matrices of `nq x nq`.
    pub ddh: Vec<DMatrix<f64>>,
    /// `dh / drho`, `nh x nrho`.
    pub h_rho: DMatrix<f64>,
    /// `d(Dh) / drho_a` for each parameter, `nrho` matrices of `nh x nq`.
    pub dh_rho: Vec<DMatrix<f64>>,
}

impl ConstraintTerms {
    /// `sum_i lambda_i * ddh_i`, i.e. the Jacobian of `Dh^T lambda` w.r.t. `q`.
    pub fn contract_hessian(&self, lambda: &DVector<f64>) -> DMatrix<f64> {
        let nq = self.dh.ncols();
        let mut out = DMatrix::zeros(nq, nq);
        for (hess, l) in self.ddh.iter().zip(lambda.iter()) {
            out += hess * *l;
        }
        out
    }

    /// Jacobian of `Dh^T lambda` w.r.t. `rho`, `nq x nrho`.
    pub fn contract_rho(&self, lambda: &DVector<f64>) -> DMatrix<f64> {
        let nq = self.dh.ncols();
        let mut out = DMatrix::zeros(nq, self.dh_rho.len());
        for (a, d) in self.dh_rho.iter().enumerate() {
            out.set_column(a, &(d.transpose() * lambda));
        }
        out
    }
}

/// A forced, holonomically constrained mechanical system.
///
/// Evaluators are pure functions of their arguments.
pub trait Model: Send + Sync {
    fn dims(&self) -> Dims;

    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms;

    /// Generalized force; `None` means unforced.
    fn force(
        &self,
        _q: &DVector<f64>,
        _v: &DVector<f64>,
        _rho: &DVector<f64>,
        _t: f64,
    ) -> Option<ForceTerms> {
        None
    }

    /// Constraints; `None` iff `nh == 0`.
    fn constraint(&self, _q: &DVector<f64>, _rho: &DVector<f64>) -> Option<ConstraintTerms> {
        None
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        (**self).lagrangian(q, v, rho)
    }
    fn force(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> Option<ForceTerms> {
        (**self).force(q, v, rho, t)
    }
    fn constraint(&self, q: &DVector<f64>, rho: &DVector<f64>) -> Option<ConstraintTerms> {
        (**self).constraint(q, rho)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        (**self).lagrangian(q, v, rho)
    }
    fn force(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> Option<ForceTerms> {
        (**self).force(q, v, rho, t)
    }
    fn constraint(&self, q: &DVector<f64>, rho: &DVector<f64>) -> Option<ConstraintTerms> {
        (**self).constraint(q, rho)
    }
}

/// A force applied on top of a model's own forcing (actuator torques, feedback).
pub trait ExternalForce: Send + Sync {
    fn eval(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> ForceTerms;
}

/// `model` with `extra` added to its generalized force.
pub struct WithForce<'a, M: ?Sized> {
    pub model: &'a M,
    pub extra: &'a dyn ExternalForce,
}

impl<'a, M: Model + ?Sized> WithForce<'a, M> {
    pub fn new(model: &'a M, extra: &'a dyn ExternalForce) -> Self {
        Self { model, extra }
    }
}

impl<M: Model + ?Sized> Model for WithForce<'_, M> {
    fn dims(&self) -> Dims {
        self.model.dims()
    }

    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        self.model.lagrangian(q, v, rho)
    }

    fn force(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> Option<ForceTerms> {
        let mut total = self.extra.eval(q, v, rho, t);
        if let Some(own) = self.model.force(q, v, rho, t) {
            total.accumulate(&own);
        }
        Some(total)
    }

    fn constraint(&self, q: &DVector<f64>, rho: &DVector<f64>) -> Option<ConstraintTerms> {
        self.model.constraint(q, rho)
    }
}
