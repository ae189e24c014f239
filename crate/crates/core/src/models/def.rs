//! JSON model definitions.
//!
//! ```json
//! { "kind": "regular_loop", "links": 12, "radius": 0.355, "total_mass": 0.132,
//!   "gravity": 9.81, "grouping": "alternating", "damping": 0.0 }
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ChainModel, ClosedLoopModel, FreeParticle, Pendulum, StiffnessGrouping};
use crate::error::{Error, Result};
use crate::model::{ConstraintTerms, Dims, ForceTerms, LagrangianTerms, Model};

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupingDef {
    /// `"alternating"`: even joints in group 0, odd joints in group 1.
    Named(String),
    Explicit(Vec<Vec<usize>>),
}

impl GroupingDef {
    fn build(&self, n: usize) -> Result<StiffnessGrouping> {
        match self {
            GroupingDef::Named(s) if s == "alternating" => Ok(StiffnessGrouping::alternating(n)),
            GroupingDef::Named(s) => Err(Error::ModelDefinition(format!("unknown grouping '{s}'"))),
            GroupingDef::Explicit(groups) => StiffnessGrouping::new(groups.clone(), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDef {
    FreeParticle {
        dim: usize,
        mass: f64,
    },
    Pendulum {
        mass: f64,
        length: f64,
        #[serde(default = "default_gravity")]
        gravity: f64,
        #[serde(default)]
        stiffness: bool,
        #[serde(default)]
        damping: f64,
    },
    Chain {
        link_lengths: Vec<f64>,
        link_masses: Vec<f64>,
        #[serde(default = "default_gravity")]
        gravity: f64,
        #[serde(default)]
        rest_angles: Option<Vec<f64>>,
        #[serde(default)]
        stiffness_map: Option<Vec<Option<usize>>>,
        #[serde(default)]
        parameter_count: Option<usize>,
        #[serde(default)]
        damping: f64,
    },
    ClosedLoop {
        link_lengths: Vec<f64>,
        link_masses: Vec<f64>,
        #[serde(default = "default_gravity")]
        gravity: f64,
        #[serde(default)]
        rest_angles: Option<Vec<f64>>,
        #[serde(default)]
        stiffness_map: Option<Vec<Option<usize>>>,
        #[serde(default)]
        parameter_count: Option<usize>,
        #[serde(default)]
        damping: f64,
        anchor: [f64; 2],
    },
    RegularLoop {
        links: usize,
        radius: f64,
        total_mass: f64,
        #[serde(default = "default_gravity")]
        gravity: f64,
        grouping: GroupingDef,
        #[serde(default)]
        damping: f64,
    },
}

#[allow(clippy::too_many_arguments)]
fn build_chain(
    link_lengths: &[f64],
    link_masses: &[f64],
    gravity: f64,
    rest_angles: &Option<Vec<f64>>,
    stiffness_map: &Option<Vec<Option<usize>>>,
    parameter_count: Option<usize>,
    damping: f64,
) -> Result<ChainModel> {
    let mut b = ChainModel::builder()
        .links(link_lengths.to_vec(), link_masses.to_vec())
        .gravity(gravity)
        .damping(damping);
    if let Some(r) = rest_angles {
        b = b.rest_angles(r.clone());
    }
    if let Some(m) = stiffness_map {
        b = b.stiffness_map(m.clone());
    }
    if let Some(n) = parameter_count {
        b = b.parameter_count(n);
    }
    b.build()
}

impl ModelDef {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelDefinition(e.to_string()))
    }

    pub fn build(&self) -> Result<AnyModel> {
        Ok(match self {
            ModelDef::FreeParticle { dim, mass } => AnyModel::Particle(FreeParticle::new(*dim, *mass)?),
            ModelDef::Pendulum {
                mass,
                length,
                gravity,
                stiffness,
                damping,
            } => AnyModel::Pendulum(
                Pendulum::builder()
                    .mass(*mass)
                    .length(*length)
                    .gravity(*gravity)
                    .stiffness(*stiffness)
                    .damping(*damping)
                    .build()?,
            ),
            ModelDef::Chain {
                link_lengths,
                link_masses,
                gravity,
                rest_angles,
                stiffness_map,
                parameter_count,
                damping,
            } => AnyModel::Chain(build_chain(
                link_lengths,
                link_masses,
                *gravity,
                rest_angles,
                stiffness_map,
                *parameter_count,
                *damping,
            )?),
            ModelDef::ClosedLoop {
                link_lengths,
                link_masses,
                gravity,
                rest_angles,
                stiffness_map,
                parameter_count,
                damping,
                anchor,
            } => {
                let chain = build_chain(
                    link_lengths,
                    link_masses,
                    *gravity,
                    rest_angles,
                    stiffness_map,
                    *parameter_count,
                    *damping,
                )?;
                AnyModel::Loop(ClosedLoopModel::new(chain, *anchor)?)
            }
            ModelDef::RegularLoop {
                links,
                radius,
                total_mass,
                gravity,
                grouping,
                damping,
            } => AnyModel::Loop(ClosedLoopModel::regular_polygon(
                *links,
                *radius,
                *total_mass,
                *gravity,
                &grouping.build(*links)?,
                *damping,
            )?),
        })
    }
}

/// Any of the bundled models, as built from a [`ModelDef`].
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Particle(FreeParticle),
    Pendulum(Pendulum),
    Chain(ChainModel),
    Loop(ClosedLoopModel),
}

impl AnyModel {
    /// The underlying chain geometry, for link-position observations.
    pub fn chain(&self) -> Option<&ChainModel> {
        match self {
            AnyModel::Chain(c) => Some(c),
            AnyModel::Loop(l) => Some(l.chain()),
            _ => None,
        }
    }

    /// A reasonable starting configuration: the rest shape (projected for loops).
    pub fn default_configuration(&self) -> DVector<f64> {
        match self {
            AnyModel::Particle(_) | AnyModel::Pendulum(_) => DVector::zeros(self.dims().nq),
            AnyModel::Chain(c) => DVector::from_column_slice(c.rest_angles()),
            AnyModel::Loop(l) => l.feasible_configuration().clone(),
        }
    }

    /// Bring `q` onto the constraint manifold (identity for unconstrained models).
    pub fn make_feasible(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            AnyModel::Loop(l) => l.project_to_constraint(q),
            _ => Ok(q.clone()),
        }
    }

    fn inner(&self) -> &dyn Model {
        match self {
            AnyModel::Particle(m) => m,
            AnyModel::Pendulum(m) => m,
            AnyModel::Chain(m) => m,
            AnyModel::Loop(m) => m,
        }
    }
}

impl Model for AnyModel {
    fn dims(&self) -> Dims {
        self.inner().dims()
    }
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        self.inner().lagrangian(q, v, rho)
    }
    fn force(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> Option<ForceTerms> {
        self.inner().force(q, v, rho, t)
    }
    fn constraint(&self, q: &DVector<f64>, rho: &DVector<f64>) -> Option<ConstraintTerms> {
        self.inner().constraint(q, rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_build_each_kind() {
        let docs = [
            r#"{"kind":"free_particle","dim":2,"mass":1.5}"#,
            r#"{"kind":"pendulum","mass":1,"length":0.5,"stiffness":true}"#,
            r#"{"kind":"chain","link_lengths":[1,1],"link_masses":[1,2],"stiffness_map":[0,null]}"#,
            r#"{"kind":"closed_loop","link_lengths":[1,1,1,1],"link_masses":[1,1,1,1],
                "rest_angles":[0,1.5707963267948966,1.5707963267948966,1.5707963267948966],
                "anchor":[0,0],"stiffness_map":[0,0,0,0]}"#,
            r#"{"kind":"regular_loop","links":6,"radius":0.355,"total_mass":0.066,"grouping":"alternating"}"#,
            r#"{"kind":"regular_loop","links":3,"radius":1,"total_mass":1,"grouping":[[0],[1,2]]}"#,
        ];
        let expected_dims = [(2, 0, 0), (1, 0, 1), (2, 0, 1), (4, 2, 1), (6, 2, 2), (3, 2, 2)];
        for (doc, (nq, nh, nrho)) in docs.iter().zip(expected_dims) {
            let m = ModelDef::from_json(doc).unwrap().build().unwrap();
            assert_eq!(m.dims(), Dims { nq, nh, nrho }, "{doc}");
        }
    }

    #[test]
    fn rejects_unknown_fields_and_groupings() {
        assert!(ModelDef::from_json(r#"{"kind":"pendulum","mass":1,"length":1,"colour":3}"#).is_err());
        let def = ModelDef::from_json(
            r#"{"kind":"regular_loop","links":6,"radius":0.3,"total_mass":0.1,"grouping":"random"}"#,
        )
        .unwrap();
        assert!(def.build().is_err());
    }
}
