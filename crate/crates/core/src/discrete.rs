//! Midpoint discretization of the Lagrangian and of the generalized forces.
//!
//! `Ld(q_k, q_{k+1}) = dt * L((q_k + q_{k+1}) / 2, (q_{k+1} - q_k) / dt)`,
//! `Fd-  = dt * F_c` at the same midpoint and midpoint time, `Fd+ = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::types::TimeGrid;

/// One time interval `[t_k, t_{k+1}]` with the grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Interval {
    pub fn of(grid: &TimeGrid, k: usize) -> Self {
        Self {
            t_start: grid.time(k),
            t_end: grid.time(k + 1),
            dt: grid.dt(),
        }
    }

    /// The quadrature time; midpoint uses the average of the two ends.
    pub fn midpoint_time(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

fn midpoint(q_k: &DVector<f64>, q_next: &DVector<f64>, dt: f64) -> (DVector<f64>, DVector<f64>) {
    ((q_k + q_next) * 0.5, (q_next - q_k) / dt)
}

/// `Ld(q_k, q_{k+1}, rho)` by the midpoint rule.
pub fn discrete_lagrangian<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    dt: f64,
) -> f64 {
    let (qm, vm) = midpoint(q_k, q_next, dt);
    dt * model.lagrangian(&qm, &vm, rho).value
}

/// Discrete left force `Fd-(q_k, q_{k+1})`, zero for unforced models.
pub fn discrete_force<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    interval: &Interval,
) -> DVector<f64> {
    let (qm, vm) = midpoint(q_k, q_next, interval.dt);
    model
        .force(&qm, &vm, rho, interval.midpoint_time())
        .map(|f| f.f * interval.dt)
        .unwrap_or_else(|| DVector::zeros(q_k.len()))
}

/// Every slot derivative of `Ld`, `Fd-` and `Fd+` on one interval.
///
/// Second-derivative blocks are written `dij` for `D_j D_i Ld`, so
/// `d12[(r, c)] = d(D1Ld)_r / d(q_{k+1})_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSlotDerivatives {
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
    pub d3d1: DMatrix<f64>,
    pub d3d2: DMatrix<f64>,
    /// `Fd-` and its Jacobians w.r.t. `q_k`, `q_{k+1}` and `rho`.
    pub fm: DVector<f64>,
    pub fm_1: DMatrix<f64>,
    pub fm_2: DMatrix<f64>,
    pub fm_3: DMatrix<f64>,
    /// `Fd+` and its Jacobians; identically zero under the midpoint rule.
    pub fp: DVector<f64>,
    pub fp_1: DMatrix<f64>,
    pub fp_2: DMatrix<f64>,
    pub fp_3: DMatrix<f64>,
}

impl DiscreteSlotDerivatives {
    /// `D1 D2 Ld`: derivative of `D2Ld` w.r.t. `q_k`.
    pub fn d21(&self) -> DMatrix<f64> {
        self.d12.transpose()
    }

    /// `M_{k+1} = D2 D1 Ld + D2 Fd-`, the Newton matrix of the unconstrained step.
    pub fn newton_matrix(&self) -> DMatrix<f64> {
        &self.d12 + &self.fm_2
    }
}

pub fn slot_derivatives<M: Model + ?Sized>(
    model: &M,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    rho: &DVector<f64>,
    interval: &Interval,
) -> DiscreteSlotDerivatives {
    let dt = interval.dt;
    let dims = model.dims();
    let (nq, nrho) = (dims.nq, dims.nrho);
    let (qm, vm) = midpoint(q_k, q_next, dt);
    let l = model.lagrangian(&qm, &vm, rho);

    // d qbar / d q_k = d qbar / d q_{k+1} = I/2, d vbar / d q_k = -I/dt, d vbar / d q_{k+1} = I/dt.
    let half_lq = &l.lq * (0.5 * dt);
    let d1 = &half_lq - &l.lv;
    let d2 = &half_lq + &l.lv;

    let lqq = &l.lqq * (0.25 * dt);
    let lvv = &l.lvv / dt;
    let lqv = &l.lqv * 0.5;
    let lvq = l.lqv.transpose() * 0.5;
    let d11 = &lqq - &lqv - &lvq + &lvv;
    let d12 = &lqq + &lqv - &lvq - &lvv;
    let d22 = &lqq + &lqv + &lvq + &lvv;

    let half_lq_rho = &l.lq_rho * (0.5 * dt);
    let d3d1 = &half_lq_rho - &l.lv_rho;
    let d3d2 = &half_lq_rho + &l.lv_rho;

    let (fm, fm_1, fm_2, fm_3) = match model.force(&qm, &vm, rho, interval.midpoint_time()) {
        Some(f) => {
            let fq = &f.fq * (0.5 * dt);
            (
                f.f * dt,
                &fq - &f.fv,
                &fq + &f.fv,
                f.f_rho * dt,
            )
        }
        None => (
            DVector::zeros(nq),
            DMatrix::zeros(nq, nq),
            DMatrix::zeros(nq, nq),
            DMatrix::zeros(nq, nrho),
        ),
    };

    DiscreteSlotDerivatives {
        d1,
        d2,
        d11,
        d12,
        d22,
        d3d1,
        d3d2,
        fm,
        fm_1,
        fm_2,
        fm_3,
        fp: DVector::zeros(nq),
        fp_1: DMatrix::zeros(nq, nq),
        fp_2: DMatrix::zeros(nq, nq),
        fp_3: DMatrix::zeros(nq, nrho),
    }
}

/// Parameter derivative of the discrete torsional-spring potential
/// `Vd = sum_{i in indices} dt/2 * kappa * ((d_{i,k} + d_{i,k+1}) / 2)^2`,
/// i.e. `(D3 D1 Vd)_i = dt/4 * (d_{i,k} + d_{i,k+1})` on the index set and zero
/// elsewhere, with `d` the spring deflections. The same column serves `D3 D2 Vd`.
///
/// The contribution to `D3 D1 Ld` is the negative of this column since `L = KE - V`.
pub fn spring_param_derivatives(
    indices: &[usize],
    deflection_k: &DVector<f64>,
    deflection_next: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let n = deflection_k.len();
    if deflection_next.len() != n {
        return Err(Error::Dimension {
            context: "spring_param_derivatives",
            expected: n,
            actual: deflection_next.len(),
        });
    }
    let mut out = DVector::zeros(n);
    for &i in indices {
        if i >= n {
            return Err(Error::Index {
                context: "spring_param_derivatives",
                index: i,
                len: n,
            });
        }
        out[i] = 0.25 * dt * (deflection_next[i] + deflection_k[i]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{FreeParticle, Pendulum};

    #[test]
    fn free_particle_closed_forms() {
        let m = FreeParticle::new(1, 1.0).unwrap();
        let rho = DVector::zeros(0);
        let a = DVector::from_vec(vec![0.0]);
        let b = DVector::from_vec(vec![1.0]);
        assert!((discrete_lagrangian(&m, &a, &b, &rho, 0.5) - 1.0).abs() < 1e-15);

        let iv = Interval {
            t_start: 0.0,
            t_end: 0.5,
            dt: 0.5,
        };
        let s = slot_derivatives(&m, &a, &b, &rho, &iv);
        assert!((s.d1[0] + 2.0).abs() < 1e-15);
        assert!((s.d2[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_velocity_is_dt_times_lagrangian() {
        let p = Pendulum::builder().mass(2.0).length(0.7).build().unwrap();
        let rho = DVector::zeros(0);
        let q = DVector::from_vec(vec![0.3]);
        let dt = 0.01;
        let expect = dt * p.lagrangian(&q, &DVector::zeros(1), &rho).value;
        let got = discrete_lagrangian(&p, &q, &q, &rho, dt);
        assert_eq!(got, expect);
        // L(q, 0) = -V(q) = m g l cos q
        assert!((got - dt * 2.0 * 9.81 * 0.7 * 0.3f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn parameter_free_model_has_zero_d3_blocks() {
        let p = Pendulum::builder().build().unwrap();
        let iv = Interval {
            t_start: 0.0,
            t_end: 0.01,
            dt: 0.01,
        };
        let s = slot_derivatives(
            &p,
            &DVector::from_vec(vec![0.2]),
            &DVector::from_vec(vec![0.25]),
            &DVector::from_vec(vec![3.0]),
            &iv,
        );
        assert_eq!(s.d3d1.ncols(), 0);
        let chain_free = crate::models::ChainModel::builder()
            .links(vec![1.0, 1.0], vec![1.0, 1.0])
            .parameter_count(1)
            .build()
            .unwrap();
        let s = slot_derivatives(
            &chain_free,
            &DVector::from_vec(vec![0.2, 0.1]),
            &DVector::from_vec(vec![0.25, 0.0]),
            &DVector::from_vec(vec![3.0]),
            &iv,
        );
        assert!(s.d3d1.iter().all(|&x| x == 0.0));
        assert!(s.d3d2.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn midpoint_identity_at_coincident_points() {
        let p = Pendulum::builder().stiffness(true).build().unwrap();
        let rho = DVector::from_vec(vec![1.7]);
        let q = DVector::from_vec(vec![0.4]);
        let dt = 0.01;
        let iv = Interval {
            t_start: 0.0,
            t_end: dt,
            dt,
        };
        let s = slot_derivatives(&p, &q, &q, &rho, &iv);
        let lq = p.lagrangian(&q, &DVector::zeros(1), &rho).lq;
        let lhs = &s.d1 + &s.d2;
        assert!((lhs[0] - dt * lq[0]).abs() <= 1e-15 * (1.0 + lq[0].abs()));
    }

    #[test]
    fn spring_column_values() {
        let qk = DVector::from_vec(vec![2.0, 5.0]);
        let col = spring_param_derivatives(&[0], &qk, &qk, 0.01).unwrap();
        assert!((col[0] - 0.01).abs() < 1e-15);
        assert_eq!(col[1], 0.0);
        let neg = -&qk;
        let zero = spring_param_derivatives(&[0, 1], &qk, &neg, 0.01).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        assert!(matches!(
            spring_param_derivatives(&[2], &qk, &qk, 0.01),
            Err(Error::Index { .. })
        ));
    }
}
