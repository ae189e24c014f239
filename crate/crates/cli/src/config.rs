//! Experiment configuration: one JSON document per run.
//!
//! ```json
//! {
//!   "model": { "kind": "regular_loop", "links": 12, "radius": 0.355,
//!              "total_mass": 0.132, "grouping": "alternating", "damping": 0.01 },
//!   "grid": { "dt": 0.01, "steps": 2000 },
//!   "rho_true": [4.45252, 0.96969],
//!   "rho0": [5.0, 5.0],
//!   "actuated": [0, 1],
//!   "feedback_gain": 1.0,
//!   "excitation": [{ "channel": 0, "amplitude": 0.05, "angular_frequency": 1.3 }],
//!   "observation": { "kind": "link_position", "link": 1 },
//!   "noise_std": 0.005,
//!   "seed": 7
//! }
//! ```
//!
//! `model` is either an inline model definition or a path to one. Relative
//! paths (model and data files) resolve against the config file's directory.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use vimech::estimation::DescentSettings;
use vimech::integrator::{Predictor, SolverSettings};
use vimech::models::ModelDef;
use vimech::POSITIVE_LOWER_BOUND;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub grid: GridConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Parameters used to synthesize data and for plain simulation.
    #[serde(default)]
    pub rho_true: Option<Vec<f64>>,
    /// Starting point of identification.
    #[serde(default)]
    pub rho0: Option<Vec<f64>>,
    #[serde(default)]
    pub lower_bounds: Option<PerChannel>,
    /// Indices of the actuated (and measured) coordinates.
    #[serde(default)]
    pub actuated: Vec<usize>,
    #[serde(default)]
    pub feedback_gain: Option<PerChannel>,
    /// Torque on each actuated channel as a sum of sinusoids.
    #[serde(default)]
    pub excitation: Vec<Sinusoid>,
    #[serde(default)]
    pub observation: Option<ObservationConfig>,
    /// Standard deviation of additive Gaussian noise on the measured coordinates.
    #[serde(default)]
    pub noise_std: Option<PerChannel>,
    #[serde(default)]
    pub torque_noise_std: Option<PerChannel>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub descent: DescentConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default = "yes")]
    pub record_paths: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(ModelDef),
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Defaults to the model's rest configuration.
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    /// Defaults to zero.
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
}

/// A scalar applied to every channel, or one value per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerChannel {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerChannel {
    pub fn expand(&self, n: usize, what: &str) -> CliResult<Vec<f64>> {
        match self {
            PerChannel::Uniform(x) => Ok(vec![*x; n]),
            PerChannel::Each(v) if v.len() == n => Ok(v.clone()),
            PerChannel::Each(v) => Err(CliError::Config(format!("{what}: expected {n} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    /// Position in `actuated`.
    pub channel: usize,
    pub amplitude: f64,
    pub angular_frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationConfig {
    /// Planar position of the end of one link.
    LinkPosition { link: usize },
    Coordinates { indices: Vec<usize> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Measured coordinates; default `<out>/measured.csv`.
    #[serde(default)]
    pub measured: Option<PathBuf>,
    /// Measured torques; default `<out>/torques.csv`.
    #[serde(default)]
    pub torques: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_backtracks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorConfig {
    Hold,
    LinearExtrapolation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub newton_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub predictor: Option<PredictorConfig>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default = "one")]
    pub terminal_weight: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            weight: 1.0,
            terminal_weight: 1.0,
        }
    }
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// The raw document, hashed into the run manifest.
    pub raw: Vec<u8>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_slice(&raw)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir, raw })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model_def(&self) -> CliResult<ModelDef> {
        match &self.config.model {
            ModelSource::Inline(def) => Ok(def.clone()),
            ModelSource::Path(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                ModelDef::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }
}

impl ExperimentConfig {
    pub fn solver_settings(&self) -> SolverSettings {
        let d = SolverSettings::default();
        SolverSettings {
            newton_tol: self.solver.newton_tol.unwrap_or(d.newton_tol),
            max_iters: self.solver.max_iters.unwrap_or(d.max_iters),
            predictor: match self.solver.predictor {
                Some(PredictorConfig::Hold) => Predictor::Hold,
                Some(PredictorConfig::LinearExtrapolation) => Predictor::LinearExtrapolation,
                None => d.predictor,
            },
        }
    }

    pub fn descent_settings(&self) -> DescentSettings {
        let d = DescentSettings::default();
        let c = &self.descent;
        DescentSettings {
            alpha: c.alpha.unwrap_or(d.alpha),
            beta: c.beta.unwrap_or(d.beta),
            max_iters: c.max_iters.unwrap_or(d.max_iters),
            grad_tol: c.grad_tol.unwrap_or(d.grad_tol),
            initial_step: c.initial_step.unwrap_or(d.initial_step),
            max_backtracks: c.max_backtracks.unwrap_or(d.max_backtracks),
            record_paths: self.record_paths,
        }
    }

    pub fn lower_bounds(&self, n: usize) -> CliResult<DVector<f64>> {
        let b = match &self.lower_bounds {
            Some(b) => b.expand(n, "lower_bounds")?,
            None => vec![POSITIVE_LOWER_BOUND; n],
        };
        Ok(DVector::from_vec(b))
    }

    fn channel_values(&self, field: &Option<PerChannel>, default: f64, what: &str) -> CliResult<Vec<f64>> {
        let n = self.actuated.len();
        let v = match field {
            Some(x) => x.expand(n, what)?,
            None => vec![default; n],
        };
        if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(CliError::Config(format!("{what} must be finite and non-negative")));
        }
        Ok(v)
    }

    pub fn feedback_gain(&self) -> CliResult<Vec<f64>> {
        self.channel_values(&self.feedback_gain, 0.0, "feedback_gain")
    }

    pub fn noise_std(&self) -> CliResult<Vec<f64>> {
        self.channel_values(&self.noise_std, 0.0, "noise_std")
    }

    pub fn torque_noise_std(&self) -> CliResult<Vec<f64>> {
        self.channel_values(&self.torque_noise_std, 0.0, "torque_noise_std")
    }

    /// Torque on every actuated channel at time `t`.
    pub fn torque_at(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.actuated.len());
        for s in &self.excitation {
            out[s.channel] += s.amplitude * (s.angular_frequency * t + s.phase).sin();
        }
        out
    }

    /// Structural checks that need no model.
    pub fn validate(&self) -> CliResult<()> {
        let na = self.actuated.len();
        if let Some(s) = self.excitation.iter().find(|s| s.channel >= na) {
            return Err(CliError::Config(format!(
                "excitation channel {} out of range ({na} actuated coordinates)",
                s.channel
            )));
        }
        let mut sorted = self.actuated.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != na {
            return Err(CliError::Config("actuated coordinates must be distinct".into()));
        }
        self.feedback_gain()?;
        self.noise_std()?;
        self.torque_noise_std()?;
        let c = &self.cost;
        if !(c.weight >= 0.0) || !(c.terminal_weight >= 0.0) {
            return Err(CliError::Config("cost weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"kind": "pendulum", "mass": 1, "length": 1}, "grid": {"steps": 10}}"#;

    #[test]
    fn defaults_fill_in() {
        let c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(c.grid.dt, 0.01);
        assert_eq!(c.grid.t0, 0.0);
        assert_eq!(c.cost, CostConfig::default());
        assert!(c.record_paths);
        let expected = DescentSettings {
            record_paths: true,
            ..DescentSettings::default()
        };
        assert_eq!(c.descent_settings(), expected);
        assert_eq!(c.solver_settings(), SolverSettings::default());
        assert_eq!(c.lower_bounds(2).unwrap().as_slice(), &[POSITIVE_LOWER_BOUND; 2]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = r#"{"model": {"kind": "pendulum", "mass": 1, "length": 1}, "grid": {"steps": 10}, "sead": 3}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(doc).is_err());
    }

    #[test]
    fn model_may_be_a_path() {
        let doc = r#"{"model": "models/loop.json", "grid": {"steps": 10}}"#;
        let c: ExperimentConfig = serde_json::from_str(doc).unwrap();
        assert_eq!(c.model, ModelSource::Path("models/loop.json".into()));
    }

    #[test]
    fn per_channel_values_expand() {
        assert_eq!(PerChannel::Uniform(0.5).expand(3, "x").unwrap(), vec![0.5; 3]);
        assert!(PerChannel::Each(vec![1.0]).expand(2, "x").is_err());
    }

    #[test]
    fn excitation_sums_sinusoids_per_channel() {
        let doc = r#"{"model": {"kind": "pendulum", "mass": 1, "length": 1}, "grid": {"steps": 10},
            "actuated": [0],
            "excitation": [{"channel": 0, "amplitude": 2, "angular_frequency": 1},
                           {"channel": 0, "amplitude": 1, "angular_frequency": 3, "phase": 0.5}]}"#;
        let c: ExperimentConfig = serde_json::from_str(doc).unwrap();
        let t: f64 = 0.7;
        let expected = 2.0 * t.sin() + (3.0 * t + 0.5).sin();
        assert_eq!(c.torque_at(t)[0], expected);
    }

    #[test]
    fn validation_catches_bad_channels() {
        let doc = r#"{"model": {"kind": "pendulum", "mass": 1, "length": 1}, "grid": {"steps": 10},
            "actuated": [0], "excitation": [{"channel": 1, "amplitude": 1, "angular_frequency": 1}]}"#;
        let c: ExperimentConfig = serde_json::from_str(doc).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let doc = r#"{"model": {"kind": "pendulum", "mass": 1, "length": 1}, "grid": {"steps": 10},
            "actuated": [0], "noise_std": -1}"#;
        let c: ExperimentConfig = serde_json::from_str(doc).unwrap();
        assert!(c.validate().is_err());
    }
}
