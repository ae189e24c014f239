use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::chain::{ChainModel, StiffnessGrouping};
use crate::error::{Error, Result};
use crate::model::{ConstraintTerms, Dims, ForceTerms, LagrangianTerms, Model};

pub const PROJECTION_TOL: f64 = 1e-10;
pub const PROJECTION_MAX_ITERS: usize = 50;

/// A chain whose last link end is pinned to `anchor`, closing a kinematic loop.
/// Two constraint rows: `h(q) = tip(q) - anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    chain: ChainModel,
    anchor: [f64; 2],
    feasible: DVector<f64>,
}

impl ClosedLoopModel {
    /// Fails with [`Error::InfeasibleStart`] when the anchor is out of reach or
    /// the rest configuration cannot be projected onto the constraint.
    pub fn new(chain: ChainModel, anchor: [f64; 2]) -> Result<Self> {
        let lengths = chain.lengths();
        let total: f64 = lengths.iter().sum();
        let longest = lengths.iter().cloned().fold(0.0, f64::max);
        let dist = anchor[0].hypot(anchor[1]);
        let min_reach = (2.0 * longest - total).max(0.0);
        if dist > total || dist < min_reach {
            return Err(Error::InfeasibleStart {
                iterations: 0,
                residual: (dist - total).max(min_reach - dist),
            });
        }
        let mut model = Self {
            chain,
            anchor,
            feasible: DVector::zeros(0),
        };
        let rest = DVector::from_column_slice(model.chain.rest_angles());
        model.feasible = model.project_to_constraint(&rest)?;
        Ok(model)
    }

    /// Regular `n`-gon of circumradius `radius` with the base vertex at the
    /// origin, traversed counter-clockwise. The rest angles turn by `2 pi / n`
    /// per joint so the unstressed shape closes back onto the origin anchor.
    pub fn regular_polygon(
        n: usize,
        radius: f64,
        total_mass: f64,
        gravity: f64,
        grouping: &StiffnessGrouping,
        damping: f64,
    ) -> Result<Self> {
        if n < 3 {
            return Err(Error::ModelDefinition("a closed loop needs at least 3 links".into()));
        }
        let side = 2.0 * radius * (PI / n as f64).sin();
        let mut rest = vec![2.0 * PI / n as f64; n];
        rest[0] = PI / n as f64;
        let chain = ChainModel::builder()
            .links(vec![side; n], vec![total_mass / n as f64; n])
            .gravity(gravity)
            .rest_angles(rest)
            .grouping(grouping)
            .damping(damping)
            .build()?;
        Self::new(chain, [0.0, 0.0])
    }

    pub fn chain(&self) -> &ChainModel {
        &self.chain
    }

    pub fn anchor(&self) -> [f64; 2] {
        self.anchor
    }

    /// A feasible configuration found at construction (the projected rest shape).
    pub fn feasible_configuration(&self) -> &DVector<f64> {
        &self.feasible
    }

    pub fn residual(&self, q: &DVector<f64>) -> Result<[f64; 2]> {
        let tip = self.chain.forward_kinematics(q, self.chain.n_links() - 1)?;
        Ok([tip[0] - self.anchor[0], tip[1] - self.anchor[1]])
    }

    /// Gauss-Newton projection onto `h(q) = 0` using minimal-norm steps
    /// `dq = -Dh^T (Dh Dh^T)^{-1} h`.
    pub fn project_to_constraint(&self, q_guess: &DVector<f64>) -> Result<DVector<f64>> {
        let last = self.chain.n_links() - 1;
        let mut q = q_guess.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..=PROJECTION_MAX_ITERS {
            let pk = self.chain.point_kinematics(&q, last)?;
            let h = DVector::from_vec(vec![
                pk.position[0] - self.anchor[0],
                pk.position[1] - self.anchor[1],
            ]);
            residual = h.amax();
            if residual < PROJECTION_TOL {
                return Ok(q);
            }
            let gram = &pk.jacobian * pk.jacobian.transpose();
            let Some(y) = gram.lu().solve(&h) else { break };
            q -= pk.jacobian.transpose() * y;
        }
        Err(Error::InfeasibleStart {
            iterations: PROJECTION_MAX_ITERS,
            residual,
        })
    }
}

impl Model for ClosedLoopModel {
    fn dims(&self) -> Dims {
        Dims {
            nh: 2,
            ..self.chain.dims()
        }
    }

    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        self.chain.lagrangian(q, v, rho)
    }

    fn force(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> Option<ForceTerms> {
        self.chain.force(q, v, rho, t)
    }

    fn constraint(&self, q: &DVector<f64>, _rho: &DVector<f64>) -> Option<ConstraintTerms> {
        let dims = self.chain.dims();
        let pk = self
            .chain
            .point_kinematics(q, self.chain.n_links() - 1)
            .expect("configuration length matches the chain");
        let [hx, hy] = pk.hessians;
        Some(ConstraintTerms {
            h: DVector::from_vec(vec![
                pk.position[0] - self.anchor[0],
                pk.position[1] - self.anchor[1],
            ]),
            dh: pk.jacobian,
            ddh: vec![hx, hy],
            h_rho: DMatrix::zeros(2, dims.nrho),
            dh_rho: vec![DMatrix::zeros(2, dims.nq); dims.nrho],
        })
    }
}
