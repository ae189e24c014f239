use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dims, LagrangianTerms, Model};

/// `L = m |v|^2 / 2` in `dim` dimensions. Every coordinate is cyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParticle {
    dim: usize,
    mass: f64,
}

impl FreeParticle {
    pub fn new(dim: usize, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || dim == 0 {
            return Err(Error::ModelDefinition(
                "free particle needs positive mass and dimension".into(),
            ));
        }
        Ok(Self { dim, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Model for FreeParticle {
    fn dims(&self) -> Dims {
        Dims {
            nq: self.dim,
            nh: 0,
            nrho: 0,
        }
    }

    fn lagrangian(&self, _q: &DVector<f64>, v: &DVector<f64>, _rho: &DVector<f64>) -> LagrangianTerms {
        let n = self.dim;
        let mut t = LagrangianTerms::zeros(n, 0);
        t.value = 0.5 * self.mass * v.norm_squared();
        t.lv = v * self.mass;
        t.lvv = DMatrix::identity(n, n) * self.mass;
        t
    }
}
