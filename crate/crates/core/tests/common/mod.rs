#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vimech::discrete::Interval;
use vimech::estimation::{feedback_force, FeedbackForce, SampledSeries};
use vimech::integrator::{simulate, step, Predictor, SolverSettings, StepResult};
use vimech::models::{ChainModel, ClosedLoopModel, Pendulum, StiffnessGrouping};
use vimech::types::{DiscreteState, TimeGrid};
use vimech::{Model, WithForce};

/// Central differences with step `1e-6 (1 + |x_i|)`.
pub fn fd<F: FnMut(&DVector<f64>) -> DVector<f64>>(x: &DVector<f64>, mut f: F) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect();
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r])
}

pub fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// `max |a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).amax() / scale
    }
}

pub fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

/// A step converged as far as round-off allows.
pub fn tight_step<M: Model + ?Sized>(model: &M, state: &DiscreteState, rho: &DVector<f64>, iv: &Interval) -> StepResult {
    for tol in [1e-15, 4e-15, 1e-14, 1e-13] {
        let settings = SolverSettings {
            newton_tol: tol,
            max_iters: 60,
            predictor: Predictor::Hold,
        };
        if let Ok(r) = step(model, state, rho, iv, &settings, None) {
            return r;
        }
    }
    panic!("step did not converge");
}

pub fn pendulum() -> Pendulum {
    Pendulum::builder().length(0.7).mass(0.5).stiffness(true).damping(0.05).build().unwrap()
}

pub fn chain4() -> ChainModel {
    ChainModel::builder()
        .links(vec![0.3, 0.25, 0.2, 0.15], vec![0.2, 0.15, 0.1, 0.1])
        .gravity(9.81)
        .rest_angles(vec![-1.2, 0.3, 0.2, 0.1])
        .grouping(&StiffnessGrouping::alternating(4))
        .damping(0.01)
        .build()
        .unwrap()
}

pub fn loop6() -> ClosedLoopModel {
    ClosedLoopModel::regular_polygon(6, 0.355, 0.132, 9.81, &StiffnessGrouping::alternating(6), 0.01).unwrap()
}

pub const LOOP_RHO: [f64; 2] = [4.45252, 0.96969];

/// Sinusoidal torques on `actuated` with proportional feedback toward a
/// constant reference `target`.
pub fn excitation(grid: &TimeGrid, actuated: Vec<usize>, nq: usize, amp: f64, gain: f64, target: &[f64]) -> FeedbackForce {
    let na = actuated.len();
    let torques = grid
        .times()
        .map(|t| DVector::from_fn(na, |j, _| amp * ((1.3 + j as f64) * t + 0.4 * j as f64).sin() + 0.4 * amp * (4.1 * t).cos()))
        .collect();
    let reference = vec![DVector::from_column_slice(target); grid.len()];
    feedback_force(
        SampledSeries::new(grid, torques).unwrap(),
        SampledSeries::new(grid, reference).unwrap(),
        DVector::from_element(na, gain),
        actuated,
        nq,
    )
    .unwrap()
}

/// Velocity tangent to the constraint manifold at `q`.
pub fn tangent_velocity<M: Model + ?Sized>(model: &M, q: &DVector<f64>, rho: &DVector<f64>, raw: DVector<f64>) -> DVector<f64> {
    match model.constraint(q, rho) {
        Some(c) => {
            let dh = c.dh;
            let gram = &dh * dh.transpose();
            let y = gram.lu().solve(&(&dh * &raw)).unwrap();
            raw - dh.transpose() * y
        }
        None => raw,
    }
}

/// States drawn from a forced rollout, with the interval that follows each.
pub fn trajectory_points<M: Model + ?Sized>(
    model: &M,
    q0: &DVector<f64>,
    rho: &DVector<f64>,
    force: &FeedbackForce,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
) -> Vec<(DiscreteState, Interval)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let nq = q0.len();
    let raw = DVector::from_fn(nq, |_, _| rng.random_range(-0.5..0.5));
    let v0 = tangent_velocity(model, q0, rho, raw);
    let forced = WithForce::new(model, force);
    let traj = simulate(&forced, q0, &v0, rho, grid, &SolverSettings::default()).unwrap();
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..grid.steps());
            (traj.states[k].clone(), Interval::of(grid, k))
        })
        .collect()
}
