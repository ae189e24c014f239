//! Classic RK4 integration of the continuous forced Euler-Lagrange equations,
//! used as a high-accuracy reference for unconstrained models:
//!
//! `Lvv qdd = Lq + F_c - Lvq v`.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

fn acceleration<M: Model + ?Sized>(
    model: &M,
    q: &DVector<f64>,
    v: &DVector<f64>,
    rho: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let l = model.lagrangian(q, v, rho);
    let mut rhs = &l.lq - l.lqv.transpose() * v;
    if let Some(f) = model.force(q, v, rho, t) {
        rhs += f.f;
    }
    l.lvv
        .lu()
        .solve(&rhs)
        .ok_or(Error::Unsupported("continuous oracle needs a regular Lagrangian"))
}

/// Integrate from `t0` to `t_final` in `steps` equal RK4 steps, returning all
/// `steps + 1` samples.
pub fn continuous_oracle<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
    t0: f64,
    t_final: f64,
    steps: usize,
) -> Result<Vec<OracleSample>> {
    let dims = model.dims();
    if dims.nh > 0 {
        return Err(Error::Unsupported("continuous oracle covers unconstrained models only"));
    }
    check_len("oracle q", dims.nq, q0.len())?;
    check_len("oracle v", dims.nq, v0.len())?;
    if steps == 0 || !(t_final > t0) {
        return Err(Error::InvalidArgument("oracle needs t_final > t0 and steps >= 1".into()));
    }
    let h = (t_final - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut q, mut v) = (q0.clone(), v0.clone());
    out.push(OracleSample {
        t: t0,
        q: q.clone(),
        v: v.clone(),
    });
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let a1 = acceleration(model, &q, &v, rho, t)?;
        let (q2, v2) = (&q + &v * (0.5 * h), &v + &a1 * (0.5 * h));
        let a2 = acceleration(model, &q2, &v2, rho, t + 0.5 * h)?;
        let (q3, v3) = (&q + &v2 * (0.5 * h), &v + &a2 * (0.5 * h));
        let a3 = acceleration(model, &q3, &v3, rho, t + 0.5 * h)?;
        let (q4, v4) = (&q + &v3 * h, &v + &a3 * h);
        let a4 = acceleration(model, &q4, &v4, rho, t + h)?;
        q += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        v += (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (h / 6.0);
        out.push(OracleSample {
            t: t0 + (k + 1) as f64 * h,
            q: q.clone(),
            v: v.clone(),
        });
    }
    Ok(out)
}
