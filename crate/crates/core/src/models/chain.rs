//! Planar serial chain of rigid links with point masses at the link ends.
//!
//! Coordinates are relative joint angles: link `j` points along the absolute
//! angle `phi_j = q_0 + ... + q_j` measured from `+x`, and the base joint sits at
//! the origin. Gravity acts along `-y`. Joint `i` carries a torsional spring
//! `kappa_{g(i)} (q_i - rest_i)^2 / 2` when it is assigned to stiffness group `g(i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dims, ForceTerms, LagrangianTerms, Model};

/// Joints sharing one stiffness parameter each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StiffnessGrouping {
    groups: Vec<Vec<usize>>,
}

impl StiffnessGrouping {
    /// `groups` must partition `0..n_joints`.
    pub fn new(groups: Vec<Vec<usize>>, n_joints: usize) -> Result<Self> {
        let mut seen = vec![false; n_joints];
        for &j in groups.iter().flatten() {
            if j >= n_joints {
                return Err(Error::Index {
                    context: "stiffness group",
                    index: j,
                    len: n_joints,
                });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::ModelDefinition(format!("joint {j} appears in two stiffness groups")));
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::ModelDefinition(format!("joint {j} is not in any stiffness group")));
        }
        Ok(Self { groups })
    }

    /// Even joints in group 0, odd joints in group 1.
    pub fn alternating(n_joints: usize) -> Self {
        let even = (0..n_joints).step_by(2).collect();
        let odd = (1..n_joints).step_by(2).collect();
        Self { groups: vec![even, odd] }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn stiffness_map(&self, n_joints: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_joints];
        for (g, joints) in self.groups.iter().enumerate() {
            for &j in joints {
                map[j] = Some(g);
            }
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    lengths: Vec<f64>,
    masses: Vec<f64>,
    gravity: f64,
    rest_angles: Vec<f64>,
    stiffness_map: Vec<Option<usize>>,
    nrho: usize,
    damping: f64,
    /// `suffix_mass[c] = sum_{i >= c} m_i`.
    suffix_mass: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ChainBuilder {
    lengths: Vec<f64>,
    masses: Vec<f64>,
    gravity: Option<f64>,
    rest_angles: Option<Vec<f64>>,
    stiffness_map: Option<Vec<Option<usize>>>,
    nrho: Option<usize>,
    damping: f64,
}

impl ChainBuilder {
    pub fn links(mut self, lengths: Vec<f64>, masses: Vec<f64>) -> Self {
        self.lengths = lengths;
        self.masses = masses;
        self
    }
    pub fn gravity(mut self, g: f64) -> Self {
        self.gravity = Some(g);
        self
    }
    pub fn rest_angles(mut self, rest: Vec<f64>) -> Self {
        self.rest_angles = Some(rest);
        self
    }
    pub fn stiffness_map(mut self, map: Vec<Option<usize>>) -> Self {
        self.stiffness_map = Some(map);
        self
    }
    pub fn grouping(mut self, grouping: &StiffnessGrouping) -> Self {
        self.stiffness_map = Some(grouping.stiffness_map(self.lengths.len()));
        self.nrho = Some(grouping.groups().len());
        self
    }
    /// Number of entries in `rho`; may exceed the groups actually referenced.
    pub fn parameter_count(mut self, n: usize) -> Self {
        self.nrho = Some(n);
        self
    }
    pub fn damping(mut self, c: f64) -> Self {
        self.damping = c;
        self
    }

    pub fn build(self) -> Result<ChainModel> {
        let n = self.lengths.len();
        if n == 0 {
            return Err(Error::ModelDefinition("chain needs at least one link".into()));
        }
        if self.masses.len() != n {
            return Err(Error::Dimension {
                context: "chain link masses",
                expected: n,
                actual: self.masses.len(),
            });
        }
        if self.lengths.iter().chain(&self.masses).any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::ModelDefinition("link lengths and masses must be positive".into()));
        }
        let rest_angles = self.rest_angles.unwrap_or_else(|| vec![0.0; n]);
        if rest_angles.len() != n {
            return Err(Error::Dimension {
                context: "chain rest angles",
                expected: n,
                actual: rest_angles.len(),
            });
        }
        let stiffness_map = self.stiffness_map.unwrap_or_else(|| vec![None; n]);
        if stiffness_map.len() != n {
            return Err(Error::Dimension {
                context: "chain stiffness map",
                expected: n,
                actual: stiffness_map.len(),
            });
        }
        let referenced = stiffness_map.iter().flatten().map(|g| g + 1).max().unwrap_or(0);
        let nrho = self.nrho.unwrap_or(referenced);
        if referenced > nrho {
            return Err(Error::ModelDefinition(format!(
                "stiffness map references parameter {} but only {nrho} parameters declared",
                referenced - 1
            )));
        }
        if !(self.damping >= 0.0) {
            return Err(Error::ModelDefinition("damping must be non-negative".into()));
        }
        let mut suffix_mass = self.masses.clone();
        for i in (0..n - 1).rev() {
            suffix_mass[i] += suffix_mass[i + 1];
        }
        Ok(ChainModel {
            lengths: self.lengths,
            masses: self.masses,
            gravity: self.gravity.unwrap_or(9.81),
            rest_angles,
            stiffness_map,
            nrho,
            damping: self.damping,
            suffix_mass,
        })
    }
}

/// `T^T x` for the lower-triangular all-ones `T` (suffix sums).
fn suffix_sums(x: &DVector<f64>) -> DVector<f64> {
    let mut out = x.clone();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] += out[i + 1];
    }
    out
}

/// `T^T x T` for the lower-triangular all-ones `T`.
fn sandwich(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let n = out.nrows();
    for i in (0..n.saturating_sub(1)).rev() {
        for c in 0..n {
            out[(i, c)] += out[(i + 1, c)];
        }
    }
    for j in (0..n.saturating_sub(1)).rev() {
        for r in 0..n {
            out[(r, j)] += out[(r, j + 1)];
        }
    }
    out
}

/// Position of a point on the chain with its first and second derivatives in `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointKinematics {
    pub position: [f64; 2],
    /// `2 x nq`.
    pub jacobian: DMatrix<f64>,
    /// Hessian of the x and y components, each `nq x nq`.
    pub hessians: [DMatrix<f64>; 2],
}

impl ChainModel {
    pub fn builder() -> ChainBuilder {
        ChainBuilder::default()
    }

    pub fn n_links(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn rest_angles(&self) -> &[f64] {
        &self.rest_angles
    }

    pub fn stiffness_map(&self) -> &[Option<usize>] {
        &self.stiffness_map
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Joints driven by parameter `group`.
    pub fn group_joints(&self, group: usize) -> Vec<usize> {
        (0..self.n_links())
            .filter(|&j| self.stiffness_map[j] == Some(group))
            .collect()
    }

    /// Spring deflections `q - rest`.
    pub fn deflections(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |i, _| q[i] - self.rest_angles[i])
    }

    fn absolute_angles(q: &DVector<f64>) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    /// End of link `link`, accumulating relative angles from the base at the origin.
    pub fn forward_kinematics(&self, q: &DVector<f64>, link: usize) -> Result<[f64; 2]> {
        Ok(self.point_kinematics(q, link)?.position)
    }

    pub fn point_kinematics(&self, q: &DVector<f64>, link: usize) -> Result<PointKinematics> {
        let n = self.n_links();
        if link >= n {
            return Err(Error::Index {
                context: "forward_kinematics link",
                index: link,
                len: n,
            });
        }
        if q.len() != n {
            return Err(Error::Dimension {
                context: "forward_kinematics q",
                expected: n,
                actual: q.len(),
            });
        }
        let phi = Self::absolute_angles(q);
        let mut position = [0.0; 2];
        let mut jac_phi = DMatrix::zeros(2, n);
        let mut hx = DMatrix::zeros(n, n);
        let mut hy = DMatrix::zeros(n, n);
        for j in 0..=link {
            let (s, c) = phi[j].sin_cos();
            let l = self.lengths[j];
            position[0] += l * c;
            position[1] += l * s;
            jac_phi[(0, j)] = -l * s;
            jac_phi[(1, j)] = l * c;
            hx[(j, j)] = -l * c;
            hy[(j, j)] = -l * s;
        }
        // J_q = J_phi T: column k collects links j >= k.
        let mut jacobian = jac_phi;
        for k in (0..n - 1).rev() {
            for r in 0..2 {
                jacobian[(r, k)] += jacobian[(r, k + 1)];
            }
        }
        Ok(PointKinematics {
            position,
            jacobian,
            hessians: [sandwich(&hx), sandwich(&hy)],
        })
    }

    fn spring_terms(&self, q: &DVector<f64>, rho: &DVector<f64>, t: &mut LagrangianTerms) {
        for (i, group) in self.stiffness_map.iter().enumerate() {
            if let Some(g) = *group {
                let d = q[i] - self.rest_angles[i];
                let kappa = rho[g];
                t.value -= 0.5 * kappa * d * d;
                t.lq[i] -= kappa * d;
                t.lqq[(i, i)] -= kappa;
                t.lq_rho[(i, g)] -= d;
            }
        }
    }
}

impl Model for ChainModel {
    fn dims(&self) -> Dims {
        Dims {
            nq: self.n_links(),
            nh: 0,
            nrho: self.nrho,
        }
    }

    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        let n = self.n_links();
        let phi = Self::absolute_angles(q);
        let omega = Self::absolute_angles(v);

        // Kinetic energy in absolute angles: KE = 1/2 sum_ab C_ab cos(phi_a - phi_b) w_a w_b
        // with C_ab = S_max(a,b) l_a l_b.
        let mut n_mat = DMatrix::zeros(n, n);
        let mut sin_mat = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let c_ab = self.suffix_mass[a.max(b)] * self.lengths[a] * self.lengths[b];
                let (s, c) = (phi[a] - phi[b]).sin_cos();
                n_mat[(a, b)] = c_ab * c;
                sin_mat[(a, b)] = c_ab * s;
            }
        }
        let w = DVector::from_vec(omega);
        let nw = &n_mat * &w;
        let sw = &sin_mat * &w;
        let ke = 0.5 * w.dot(&nw);

        let mut l_phi = DVector::from_fn(n, |c, _| -w[c] * sw[c]);
        let mut l_phiphi = DMatrix::from_fn(n, n, |c, d| w[c] * w[d] * n_mat[(c, d)]);
        let mut l_phiw = DMatrix::from_fn(n, n, |c, d| -w[c] * sin_mat[(c, d)]);
        for c in 0..n {
            l_phiphi[(c, c)] -= w[c] * nw[c];
            l_phiw[(c, c)] -= sw[c];
        }

        // Gravity V_g = g sum_j S_j l_j sin(phi_j).
        let mut vg = 0.0;
        for j in 0..n {
            let gsl = self.gravity * self.suffix_mass[j] * self.lengths[j];
            let (s, c) = phi[j].sin_cos();
            vg += gsl * s;
            l_phi[j] -= gsl * c;
            l_phiphi[(j, j)] += gsl * s;
        }

        let mut t = LagrangianTerms {
            value: ke - vg,
            lq: suffix_sums(&l_phi),
            lv: suffix_sums(&nw),
            lqq: sandwich(&l_phiphi),
            lqv: sandwich(&l_phiw),
            lvv: sandwich(&n_mat),
            lq_rho: DMatrix::zeros(n, self.nrho),
            lv_rho: DMatrix::zeros(n, self.nrho),
        };
        self.spring_terms(q, rho, &mut t);
        t
    }

    fn force(&self, _q: &DVector<f64>, v: &DVector<f64>, _rho: &DVector<f64>, _t: f64) -> Option<ForceTerms> {
        if self.damping == 0.0 {
            return None;
        }
        let n = self.n_links();
        let mut f = ForceTerms::zeros(n, self.nrho);
        f.f = v * -self.damping;
        f.fv = DMatrix::identity(n, n) * -self.damping;
        Some(f)
    }
}
