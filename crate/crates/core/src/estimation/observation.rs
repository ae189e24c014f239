use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::ChainModel;

/// Measured quantity `w(q)` the cost compares against data.
pub trait Observation: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, q: &DVector<f64>) -> DVector<f64>;
    /// `dim x nq`.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Coordinates the observation depends on.
    fn support(&self) -> Vec<usize>;
}

/// Selected generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateObservation {
    indices: Vec<usize>,
    nq: usize,
}

impl CoordinateObservation {
    pub fn new(indices: Vec<usize>, nq: usize) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= nq) {
            return Err(Error::Index {
                context: "observed coordinate",
                index: i,
                len: nq,
            });
        }
        Ok(Self { indices, nq })
    }
}

impl Observation for CoordinateObservation {
    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn eval(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| q[i]))
    }

    fn jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.indices.len(), self.nq);
        for (r, &i) in self.indices.iter().enumerate() {
            j[(r, i)] = 1.0;
        }
        j
    }

    fn support(&self) -> Vec<usize> {
        self.indices.clone()
    }
}

/// Planar position of the end of one chain link (the "end effector").
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPositionObservation {
    chain: ChainModel,
    link: usize,
}

impl LinkPositionObservation {
    pub fn new(chain: ChainModel, link: usize) -> Result<Self> {
        if link >= chain.n_links() {
            return Err(Error::Index {
                context: "observed link",
                index: link,
                len: chain.n_links(),
            });
        }
        Ok(Self { chain, link })
    }
}

impl Observation for LinkPositionObservation {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = self.chain.forward_kinematics(q, self.link).expect("validated link");
        DVector::from_vec(p.to_vec())
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.chain.point_kinematics(q, self.link).expect("validated link").jacobian
    }

    fn support(&self) -> Vec<usize> {
        (0..=self.link).collect()
    }
}
