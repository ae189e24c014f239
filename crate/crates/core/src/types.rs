//! Value types shared by the integrator, the linearization and the estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Generalized coordinates `q`, one entry per degree of freedom.
pub type Configuration = DVector<f64>;

/// Lower bound used for stiffness-like parameters that must stay positive.
pub const POSITIVE_LOWER_BOUND: f64 = 1e-6;

/// Uniform time grid `t_k = t0 + k * dt`, `k = 0..=steps`.
///
/// Times are always derived from the index, never accumulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("start time must be finite".into()));
        }
        Ok(Self { t0, dt, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `k_f`; the grid has `steps + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn final_time(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }
}

/// Box-constrained parameter vector `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: DVector<f64>,
    lower_bounds: DVector<f64>,
}

impl ParameterVector {
    pub fn new(values: DVector<f64>, lower_bounds: DVector<f64>) -> Result<Self> {
        check_len("parameter lower bounds", values.len(), lower_bounds.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("parameter values must be finite".into()));
        }
        if lower_bounds.iter().any(|b| b.is_nan() || *b == f64::INFINITY) {
            return Err(Error::InvalidArgument("lower bounds must be finite or -inf".into()));
        }
        if let Some(i) = (0..values.len()).find(|&i| values[i] < lower_bounds[i]) {
            return Err(Error::InvalidArgument(format!(
                "parameter {i} = {} below its lower bound {}",
                values[i], lower_bounds[i]
            )));
        }
        Ok(Self {
            values,
            lower_bounds,
        })
    }

    /// Parameters with no lower bound.
    pub fn unbounded(values: DVector<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, DVector::from_element(n, f64::NEG_INFINITY))
    }

    /// Parameters bounded below by [`POSITIVE_LOWER_BOUND`].
    pub fn positive(values: DVector<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, DVector::from_element(n, POSITIVE_LOWER_BOUND))
    }

    pub fn empty() -> Self {
        Self {
            values: DVector::zeros(0),
            lower_bounds: DVector::zeros(0),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn lower_bounds(&self) -> &DVector<f64> {
        &self.lower_bounds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Project `candidate` onto the feasible box.
    pub fn clamp(&self, candidate: &DVector<f64>) -> DVector<f64> {
        candidate.zip_map(&self.lower_bounds, |v, lb| v.max(lb))
    }

    /// Same bounds, new values projected onto the box.
    pub fn with_values(&self, candidate: &DVector<f64>) -> Result<Self> {
        check_len("parameter values", self.len(), candidate.len())?;
        Self::new(self.clamp(candidate), self.lower_bounds.clone())
    }

    /// Indices whose lower bound is active (within `tol` of the value).
    pub fn active_bounds(&self, tol: f64) -> Vec<bool> {
        self.values
            .iter()
            .zip(self.lower_bounds.iter())
            .map(|(v, lb)| lb.is_finite() && *v <= lb + tol)
            .collect()
    }
}

/// Discrete state `x_k = [q_k, p_k]` together with the constraint multipliers
/// `lambda` of the step that produced it (empty for the initial state and for
/// unconstrained models).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub q: Configuration,
    pub p: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl DiscreteState {
    pub fn new(q: Configuration, p: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        check_len("state momentum", q.len(), p.len())?;
        Ok(Self { q, p, lambda })
    }

    pub fn flat(&self) -> DVector<f64> {
        // Lengths are checked at construction.
        state_pack(&self.q, &self.p).expect("state dimensions")
    }
}

/// Concatenate `[q, p]`.
pub fn state_pack(q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("state_pack", q.len(), p.len())?;
    let n = q.len();
    Ok(DVector::from_fn(2 * n, |i, _| if i < n { q[i] } else { p[i - n] }))
}

/// Split a flat `[q, p]` vector into its halves.
pub fn state_unpack(x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.len() % 2 != 0 {
        return Err(Error::Dimension {
            context: "state_unpack",
            expected: x.len() + 1,
            actual: x.len(),
        });
    }
    let n = x.len() / 2;
    Ok((x.rows(0, n).into_owned(), x.rows(n, n).into_owned()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<DiscreteState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn configurations(&self) -> impl Iterator<Item = &Configuration> {
        self.states.iter().map(|s| &s.q)
    }
}

/// Step linearization `dx_{k+1} = A_k dx_k + B_k drho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub step_index: usize,
}
