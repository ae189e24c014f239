use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::observation::Observation;
use crate::error::{check_len, Error, Result};
use crate::types::Trajectory;

/// Quadratic tracking cost
/// `J = sum_{k=1}^{kf} w_k |e_k|^2 + w_T |e_kf|^2`, `e_k = obs(q_k) - measured_k`.
/// The final node appears in both sums.
#[derive(Clone)]
pub struct CostSpec {
    pub observation: Arc<dyn Observation>,
    /// One target per grid node, `k = 0..=kf` (entry 0 is never used).
    pub measured: Vec<DVector<f64>>,
    /// Running weights per node, same length as `measured`.
    pub weights: Vec<f64>,
    pub terminal_weight: f64,
}

impl std::fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostSpec")
            .field("dim", &self.observation.dim())
            .field("nodes", &self.measured.len())
            .field("terminal_weight", &self.terminal_weight)
            .finish()
    }
}

impl CostSpec {
    /// Unit running and terminal weights.
    pub fn new(observation: Arc<dyn Observation>, measured: Vec<DVector<f64>>) -> Result<Self> {
        let n = measured.len();
        Self::weighted(observation, measured, vec![1.0; n], 1.0)
    }

    pub fn weighted(
        observation: Arc<dyn Observation>,
        measured: Vec<DVector<f64>>,
        weights: Vec<f64>,
        terminal_weight: f64,
    ) -> Result<Self> {
        check_len("cost weights", measured.len(), weights.len())?;
        let d = observation.dim();
        for m in &measured {
            check_len("measured observation", d, m.len())?;
        }
        if weights.iter().chain([&terminal_weight]).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("cost weights must be finite and non-negative".into()));
        }
        Ok(Self {
            observation,
            measured,
            weights,
            terminal_weight,
        })
    }

    /// Targets from an observed trajectory of configurations.
    pub fn from_configurations(
        observation: Arc<dyn Observation>,
        configurations: &[DVector<f64>],
    ) -> Result<Self> {
        let measured = configurations.iter().map(|q| observation.eval(q)).collect();
        Self::new(observation, measured)
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        check_len("cost horizon", self.measured.len(), traj.states.len())
    }

    /// Total weight on node `k` (running plus terminal).
    fn node_weight(&self, k: usize) -> f64 {
        let last = self.measured.len() - 1;
        let mut w = if k >= 1 { self.weights[k] } else { 0.0 };
        if k == last {
            w += self.terminal_weight;
        }
        w
    }

    pub fn error(&self, k: usize, q: &DVector<f64>) -> DVector<f64> {
        self.observation.eval(q) - &self.measured[k]
    }

    /// `D1 l_d + D1 m_d` at node `k` as a row co-vector over `[q, p]`.
    pub fn state_gradient(&self, k: usize, q: &DVector<f64>) -> DVector<f64> {
        let nq = q.len();
        let mut g = DVector::zeros(2 * nq);
        let w = self.node_weight(k);
        if w != 0.0 {
            let e = self.error(k, q);
            let jac: DMatrix<f64> = self.observation.jacobian(q);
            g.rows_mut(0, nq).copy_from(&(jac.transpose() * e * (2.0 * w)));
        }
        g
    }
}

pub fn cost(traj: &Trajectory, spec: &CostSpec) -> Result<f64> {
    spec.check(traj)?;
    let mut total = 0.0;
    for (k, s) in traj.states.iter().enumerate().skip(1) {
        let w = spec.node_weight(k);
        if w != 0.0 {
            total += w * spec.error(k, &s.q).norm_squared();
        }
    }
    Ok(total)
}
