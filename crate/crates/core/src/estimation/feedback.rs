use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::model::{ExternalForce, ForceTerms};
use crate::types::TimeGrid;

/// Samples on a uniform grid, linearly interpolated in time and held at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    t0: f64,
    dt: f64,
    samples: Vec<DVector<f64>>,
}

impl SampledSeries {
    pub fn new(grid: &TimeGrid, samples: Vec<DVector<f64>>) -> Result<Self> {
        check_len("sampled series length", grid.len(), samples.len())?;
        let dim = samples[0].len();
        for s in &samples {
            check_len("sampled series channels", dim, s.len())?;
        }
        Ok(Self {
            t0: grid.t0(),
            dt: grid.dt(),
            samples,
        })
    }

    pub fn channels(&self) -> usize {
        self.samples[0].len()
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let last = self.samples.len() - 1;
        let s = ((t - self.t0) / self.dt).max(0.0);
        let i = (s.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.samples[0].clone();
        }
        let frac = (s - i as f64).min(1.0);
        &self.samples[i] * (1.0 - frac) + &self.samples[i + 1] * frac
    }
}

/// `F_c = T_meas(t) - K (b(t) - b_meas(t))` on the actuated coordinates `b`, zero
/// elsewhere. With `K = 0` this is open-loop torque playback.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackForce {
    torques: SampledSeries,
    measured: SampledSeries,
    gain: DVector<f64>,
    actuated: Vec<usize>,
    nq: usize,
}

impl FeedbackForce {
    pub fn torques(&self) -> &SampledSeries {
        &self.torques
    }

    pub fn measured(&self) -> &SampledSeries {
        &self.measured
    }
}

/// Build the proportional feedback law from measured torques and coordinates.
/// `gain` is the diagonal of `K`, one non-negative entry per actuated coordinate.
pub fn feedback_force(
    torques: SampledSeries,
    measured: SampledSeries,
    gain: DVector<f64>,
    actuated: Vec<usize>,
    nq: usize,
) -> Result<FeedbackForce> {
    let na = actuated.len();
    check_len("feedback torque channels", na, torques.channels())?;
    check_len("feedback measured channels", na, measured.channels())?;
    check_len("feedback gain", na, gain.len())?;
    check_len("feedback grid", torques.samples.len(), measured.samples.len())?;
    if let Some(&i) = actuated.iter().find(|&&i| i >= nq) {
        return Err(Error::Index {
            context: "actuated coordinate",
            index: i,
            len: nq,
        });
    }
    let mut sorted = actuated.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != na {
        return Err(Error::InvalidArgument("actuated coordinates must be distinct".into()));
    }
    if gain.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::InvalidArgument("feedback gain must be non-negative".into()));
    }
    Ok(FeedbackForce {
        torques,
        measured,
        gain,
        actuated,
        nq,
    })
}

impl ExternalForce for FeedbackForce {
    fn eval(&self, q: &DVector<f64>, _v: &DVector<f64>, rho: &DVector<f64>, t: f64) -> ForceTerms {
        let torque = self.torques.at(t);
        let target = self.measured.at(t);
        let mut out = ForceTerms::zeros(self.nq, rho.len());
        for (j, &i) in self.actuated.iter().enumerate() {
            out.f[i] = torque[j] - self.gain[j] * (q[i] - target[j]);
            out.fq[(i, i)] = -self.gain[j];
        }
        out
    }
}
