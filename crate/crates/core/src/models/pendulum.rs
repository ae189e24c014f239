use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dims, ForceTerms, LagrangianTerms, Model};

/// Planar pendulum with a point mass, angle measured from the downward
/// vertical, an optional torsional spring `kappa = rho[0]` about the hanging
/// position and viscous damping `-c * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub stiffness: bool,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct PendulumBuilder {
    inner: Pendulum,
}

impl Pendulum {
    pub fn builder() -> PendulumBuilder {
        PendulumBuilder {
            inner: Pendulum {
                mass: 1.0,
                length: 1.0,
                gravity: 9.81,
                stiffness: false,
                damping: 0.0,
            },
        }
    }

    /// Small-oscillation period `2 pi sqrt(l / g)` of the spring-free pendulum.
    pub fn small_angle_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.length / self.gravity).sqrt()
    }

    fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

impl PendulumBuilder {
    pub fn mass(mut self, m: f64) -> Self {
        self.inner.mass = m;
        self
    }
    pub fn length(mut self, l: f64) -> Self {
        self.inner.length = l;
        self
    }
    pub fn gravity(mut self, g: f64) -> Self {
        self.inner.gravity = g;
        self
    }
    pub fn stiffness(mut self, on: bool) -> Self {
        self.inner.stiffness = on;
        self
    }
    pub fn damping(mut self, c: f64) -> Self {
        self.inner.damping = c;
        self
    }

    pub fn build(self) -> Result<Pendulum> {
        let p = self.inner;
        if !(p.mass > 0.0) || !(p.length > 0.0) {
            return Err(Error::ModelDefinition("pendulum mass and length must be positive".into()));
        }
        if !p.gravity.is_finite() || !(p.damping >= 0.0) {
            return Err(Error::ModelDefinition("pendulum gravity/damping invalid".into()));
        }
        Ok(p)
    }
}

impl Model for Pendulum {
    fn dims(&self) -> Dims {
        Dims {
            nq: 1,
            nh: 0,
            nrho: usize::from(self.stiffness),
        }
    }

    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        let nrho = self.dims().nrho;
        let mut t = LagrangianTerms::zeros(1, nrho);
        let (th, w) = (q[0], v[0]);
        let inertia = self.inertia();
        let mgl = self.mass * self.gravity * self.length;
        t.value = 0.5 * inertia * w * w + mgl * th.cos();
        t.lq[0] = -mgl * th.sin();
        t.lqq[(0, 0)] = -mgl * th.cos();
        t.lv[0] = inertia * w;
        t.lvv[(0, 0)] = inertia;
        if self.stiffness {
            let kappa = rho[0];
            t.value -= 0.5 * kappa * th * th;
            t.lq[0] -= kappa * th;
            t.lqq[(0, 0)] -= kappa;
            t.lq_rho[(0, 0)] = -th;
        }
        t
    }

    fn force(&self, _q: &DVector<f64>, v: &DVector<f64>, _rho: &DVector<f64>, _t: f64) -> Option<ForceTerms> {
        if self.damping == 0.0 {
            return None;
        }
        let nrho = self.dims().nrho;
        let mut f = ForceTerms::zeros(1, nrho);
        f.f[0] = -self.damping * v[0];
        f.fv = DMatrix::from_element(1, 1, -self.damping);
        Some(f)
    }
}
