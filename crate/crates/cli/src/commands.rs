//! The four subcommands. Each reads one config, writes into one output
//! directory and finishes with `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use vimech::diagnostics::{check_adjoint, check_model, check_slots, check_step, CheckReport};
use vimech::discrete::Interval;
use vimech::estimation::{
    feedback_force, identify, CoordinateObservation, CostSpec, FeedbackForce, IdentificationProblem,
    IdentificationResult, LinkPositionObservation, Observation, SampledSeries,
};
use vimech::integrator::{
    constraint_residual, energy_series, simulate_detailed, Predictor, SolverSettings, StepResult,
};
use vimech::linearization::linearize_trajectory;
use vimech::models::{AnyModel, ModelDef};
use vimech::types::{ParameterVector, TimeGrid, Trajectory};
use vimech::{ExternalForce, Model, WithForce};

use crate::config::{LoadedConfig, ObservationConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    fmt_f64, indexed, matrix_rows, read_series, series_table, sha256_hex, to_json_bytes, trajectory_json,
    trajectory_table, write_atomic, SolverMeta, Table,
};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    pub dump_linearization: bool,
}

/// Horizon of the short rollout `check` differentiates through.
pub const CHECK_STEPS: usize = 40;
/// Grid nodes of that rollout at which derivatives are checked.
pub const CHECK_POINTS: usize = 5;

/// Everything derived from the config before a command runs.
struct Experiment {
    loaded: LoadedConfig,
    model: AnyModel,
    model_hash: String,
    grid: TimeGrid,
    q0: DVector<f64>,
    v0: DVector<f64>,
    solver: SolverSettings,
    seed: u64,
}

impl Experiment {
    fn prepare(opts: &RunOptions) -> CliResult<Self> {
        let loaded = LoadedConfig::load(&opts.config)?;
        let c = &loaded.config;
        c.validate()?;
        let def: ModelDef = loaded.model_def()?;
        let model = def.build()?;
        let model_hash = sha256_hex(&serde_json::to_vec(&def).expect("serializable"));
        let g = c.grid;
        let grid = TimeGrid::new(g.t0, g.dt, g.steps)?;
        let nq = model.dims().nq;
        let vector = |v: &Option<Vec<f64>>, what: &str, default: DVector<f64>| -> CliResult<DVector<f64>> {
            match v {
                Some(x) if x.len() == nq => Ok(DVector::from_column_slice(x)),
                Some(x) => Err(CliError::Config(format!("{what}: expected {nq} values, got {}", x.len()))),
                None => Ok(default),
            }
        };
        let q0 = vector(&c.initial.q0, "initial.q0", model.default_configuration())?;
        let v0 = vector(&c.initial.v0, "initial.v0", DVector::zeros(nq))?;
        if let Some(&i) = c.actuated.iter().find(|&&i| i >= nq) {
            return Err(CliError::Config(format!("actuated coordinate {i} out of range (nq = {nq})")));
        }
        let solver = c.solver_settings();
        solver.validate()?;
        let seed = opts.seed.unwrap_or(c.seed);
        Ok(Self {
            loaded,
            model,
            model_hash,
            grid,
            q0,
            v0,
            solver,
            seed,
        })
    }

    fn nrho(&self) -> usize {
        self.model.dims().nrho
    }

    fn parameters(&self, v: &Option<Vec<f64>>, what: &str) -> CliResult<Option<DVector<f64>>> {
        match v {
            Some(x) if x.len() == self.nrho() => Ok(Some(DVector::from_column_slice(x))),
            Some(x) => Err(CliError::Config(format!(
                "{what}: model has {} parameters, got {}",
                self.nrho(),
                x.len()
            ))),
            None => Ok(None),
        }
    }

    fn rho_true(&self) -> CliResult<Option<DVector<f64>>> {
        self.parameters(&self.loaded.config.rho_true, "rho_true")
    }

    fn rho0(&self) -> CliResult<Option<DVector<f64>>> {
        self.parameters(&self.loaded.config.rho0, "rho0")
    }

    /// `rho_true`, else `rho0`, else empty for parameter-free models.
    fn simulation_rho(&self) -> CliResult<DVector<f64>> {
        if let Some(r) = self.rho_true()? {
            return Ok(r);
        }
        if let Some(r) = self.rho0()? {
            return Ok(r);
        }
        if self.nrho() == 0 {
            return Ok(DVector::zeros(0));
        }
        Err(CliError::Config("rho_true or rho0 is required for this model".into()))
    }

    fn actuated(&self) -> &[usize] {
        &self.loaded.config.actuated
    }

    fn require_actuated(&self) -> CliResult<()> {
        if self.actuated().is_empty() {
            return Err(CliError::Config("this command needs at least one actuated coordinate".into()));
        }
        Ok(())
    }

    /// Excitation torques at every grid node.
    fn torque_samples(&self, grid: &TimeGrid) -> Vec<DVector<f64>> {
        grid.times().map(|t| self.loaded.config.torque_at(t)).collect()
    }

    fn actuated_part(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.actuated().len(), self.actuated().iter().map(|&i| q[i]))
    }

    /// Torque playback without feedback, `None` when nothing is actuated.
    fn open_loop(&self, grid: &TimeGrid) -> CliResult<Option<FeedbackForce>> {
        if self.actuated().is_empty() {
            return Ok(None);
        }
        let na = self.actuated().len();
        let torques = SampledSeries::new(grid, self.torque_samples(grid))?;
        let reference = SampledSeries::new(grid, vec![DVector::zeros(na); grid.len()])?;
        let force = feedback_force(torques, reference, DVector::zeros(na), self.actuated().to_vec(), self.model.dims().nq)?;
        Ok(Some(force))
    }

    fn observation(&self) -> CliResult<Arc<dyn Observation>> {
        let nq = self.model.dims().nq;
        let obs: Arc<dyn Observation> = match &self.loaded.config.observation {
            Some(ObservationConfig::LinkPosition { link }) => {
                let chain = self
                    .model
                    .chain()
                    .ok_or_else(|| CliError::Config("link_position observation needs a chain or loop model".into()))?;
                Arc::new(LinkPositionObservation::new(chain.clone(), *link)?)
            }
            Some(ObservationConfig::Coordinates { indices }) => Arc::new(CoordinateObservation::new(indices.clone(), nq)?),
            None => Arc::new(CoordinateObservation::new(self.actuated().to_vec(), nq)?),
        };
        Ok(obs)
    }

    /// Observation whose value is fixed by the measured coordinates alone.
    fn measured_observation(&self) -> CliResult<Arc<dyn Observation>> {
        let obs = self.observation()?;
        if let Some(i) = obs.support().into_iter().find(|i| !self.actuated().contains(i)) {
            return Err(CliError::Config(format!(
                "observation depends on coordinate {i}, which is not measured (actuated)"
            )));
        }
        Ok(obs)
    }

    fn solver_meta(&self) -> SolverMeta {
        SolverMeta {
            newton_tol: self.solver.newton_tol,
            max_iters: self.solver.max_iters,
            predictor: match self.solver.predictor {
                Predictor::Hold => "hold".into(),
                Predictor::LinearExtrapolation => "linear_extrapolation".into(),
            },
        }
    }

    fn data_path(&self, configured: &Option<PathBuf>, out: &Path, default: &str) -> PathBuf {
        match configured {
            Some(p) => self.loaded.resolve(p),
            None => out.join(default),
        }
    }
}

fn rollout(
    model: &dyn Model,
    force: Option<&dyn ExternalForce>,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    rho: &DVector<f64>,
    grid: &TimeGrid,
    solver: &SolverSettings,
) -> vimech::Result<(Trajectory, Vec<StepResult>)> {
    match force {
        Some(f) => simulate_detailed(&WithForce::new(model, f), q0, v0, rho, grid, solver),
        None => simulate_detailed(model, q0, v0, rho, grid, solver),
    }
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    model_sha256: &'a str,
    seed: u64,
    timings_s: BTreeMap<String, f64>,
    artifacts: Vec<Artifact>,
}

/// Output directory writer that remembers what it wrote.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    started: Instant,
    timings: BTreeMap<String, f64>,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
            timings: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn time(&mut self, label: &str, since: Instant) {
        self.timings.insert(label.to_string(), since.elapsed().as_secs_f64());
    }

    fn finish(mut self, command: &str, exp: &Experiment) -> CliResult<()> {
        self.time("total", self.started);
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(&exp.loaded.raw),
            model_sha256: &exp.model_hash,
            seed: exp.seed,
            timings_s: self.timings,
            artifacts: self.artifacts,
        };
        write_atomic(&self.dir.join("manifest.json"), &to_json_bytes(&manifest))
    }
}

/// Synthesize measurement files by simulating at `rho_true`.
pub fn generate(opts: &RunOptions) -> CliResult<()> {
    let exp = Experiment::prepare(opts)?;
    exp.require_actuated()?;
    let rho = exp
        .rho_true()?
        .ok_or_else(|| CliError::Config("generate needs rho_true".into()))?;
    let c = &exp.loaded.config;
    let noise = c.noise_std()?;
    let torque_noise = c.torque_noise_std()?;
    let obs = exp.measured_observation()?;
    let mut out = Outputs::create(&opts.out)?;

    let t = Instant::now();
    let force = exp.open_loop(&exp.grid)?;
    let (traj, _) = rollout(
        &exp.model,
        force.as_ref().map(|f| f as &dyn ExternalForce),
        &exp.q0,
        &exp.v0,
        &rho,
        &exp.grid,
        &exp.solver,
    )?;
    out.time("simulate", t);

    let clean_b: Vec<DVector<f64>> = traj.configurations().map(|q| exp.actuated_part(q)).collect();
    let clean_tau = exp.torque_samples(&exp.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let noisy_b = add_noise(&clean_b, &noise, &mut rng);
    // A separate stream, so enabling torque noise leaves the coordinate noise unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    rng.set_stream(1);
    let noisy_tau = add_noise(&clean_tau, &torque_noise, &mut rng);
    let observations: Vec<DVector<f64>> = traj.configurations().map(|q| obs.eval(q)).collect();

    let coord = |prefix: &str, samples: &[DVector<f64>]| named_series(&exp.grid, prefix, exp.actuated(), samples);
    out.write("trajectory.csv", &trajectory_table(&traj).to_bytes())?;
    out.write("trajectory.json", &trajectory_json(&traj, &exp.model_hash, &rho, &exp.solver_meta()))?;
    out.write("measured.csv", &coord("q", &noisy_b))?;
    out.write("measured_noiseless.csv", &coord("q", &clean_b))?;
    out.write("torques.csv", &coord("tau", &noisy_tau))?;
    out.write("torques_noiseless.csv", &coord("tau", &clean_tau))?;
    out.write("observations.csv", &series_table(&exp.grid, "w", &observations).to_bytes())?;
    out.finish("generate", &exp)
}

/// Additive i.i.d. Gaussian noise, one draw per sample and channel even where
/// the standard deviation is zero.
fn add_noise(samples: &[DVector<f64>], std: &[f64], rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    samples
        .iter()
        .map(|s| {
            let mut noisy = s.clone();
            for (j, sd) in std.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                if *sd > 0.0 {
                    noisy[j] += sd * z;
                }
            }
            noisy
        })
        .collect()
}

/// `t,<prefix>_<i>..` with `i` the coordinate index of each channel.
fn named_series(grid: &TimeGrid, prefix: &str, coords: &[usize], samples: &[DVector<f64>]) -> Vec<u8> {
    let header = std::iter::once("t".to_string())
        .chain(coords.iter().map(|i| format!("{prefix}_{i}")))
        .collect();
    let mut table = Table::new(header);
    for (k, s) in samples.iter().enumerate() {
        table.push(std::iter::once(fmt_f64(grid.time(k))).chain(s.iter().map(|x| fmt_f64(*x))).collect());
    }
    table.to_bytes()
}

#[derive(Serialize)]
struct LinearizationDump {
    nq: usize,
    nrho: usize,
    steps: Vec<LinearizationEntry>,
}

#[derive(Serialize)]
struct LinearizationEntry {
    k: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

/// Forward rollout with energy and constraint diagnostics.
pub fn simulate_cmd(opts: &RunOptions) -> CliResult<()> {
    let exp = Experiment::prepare(opts)?;
    let rho = exp.simulation_rho()?;
    let mut out = Outputs::create(&opts.out)?;

    let t = Instant::now();
    let force = exp.open_loop(&exp.grid)?;
    let force = force.as_ref().map(|f| f as &dyn ExternalForce);
    let (traj, results) = rollout(&exp.model, force, &exp.q0, &exp.v0, &rho, &exp.grid, &exp.solver)?;
    out.time("simulate", t);

    out.write("trajectory.csv", &trajectory_table(&traj).to_bytes())?;
    out.write("trajectory.json", &trajectory_json(&traj, &exp.model_hash, &rho, &exp.solver_meta()))?;

    let mut energy = Table::new(vec!["k".into(), "t_start".into(), "t_end".into(), "energy".into()]);
    for (k, e) in energy_series(&exp.model, &traj, &rho).into_iter().enumerate() {
        energy.push(vec![k.to_string(), fmt_f64(exp.grid.time(k)), fmt_f64(exp.grid.time(k + 1)), fmt_f64(e)]);
    }
    out.write("energy.csv", &energy.to_bytes())?;

    let mut constraints = Table::new(vec!["k".into(), "t".into(), "residual".into()]);
    for (k, s) in traj.states.iter().enumerate() {
        let r = constraint_residual(&exp.model, &s.q, &rho);
        constraints.push(vec![k.to_string(), fmt_f64(exp.grid.time(k)), fmt_f64(r)]);
    }
    out.write("constraints.csv", &constraints.to_bytes())?;

    if opts.dump_linearization {
        let t = Instant::now();
        let sens = match force {
            Some(f) => linearize_trajectory(&WithForce::new(&exp.model, f), &traj, Some(&results), &rho, None)?,
            None => linearize_trajectory(&exp.model, &traj, Some(&results), &rho, None)?,
        };
        out.time("linearize", t);
        let dump = LinearizationDump {
            nq: exp.model.dims().nq,
            nrho: exp.nrho(),
            steps: sens
                .iter()
                .map(|s| LinearizationEntry {
                    k: s.step_index,
                    a: matrix_rows(&s.a),
                    b: matrix_rows(&s.b),
                })
                .collect(),
        };
        out.write("linearization.json", &to_json_bytes(&dump))?;
    }
    out.finish("simulate", &exp)
}

/// Inputs of a derivative check run.
pub struct CheckSetup<'a> {
    pub model: &'a dyn Model,
    pub q0: DVector<f64>,
    pub v0: DVector<f64>,
    pub rho: DVector<f64>,
    pub grid: TimeGrid,
    pub force: Option<&'a dyn ExternalForce>,
    pub observation: Arc<dyn Observation>,
    pub solver: SolverSettings,
}

/// Finite-difference checks of the model, slot derivatives and step
/// linearization at points of a short rollout, plus the adjoint gradient
/// against differences of a cost whose targets come from perturbed parameters.
pub fn run_checks(setup: &CheckSetup<'_>) -> CliResult<CheckReport> {
    let with = |f: &dyn Fn(&dyn Model) -> vimech::Result<Vec<vimech::diagnostics::Check>>| match setup.force {
        Some(extra) => f(&WithForce::new(setup.model, extra)),
        None => f(setup.model),
    };
    let grid = setup.grid;
    let (traj, _) = rollout(setup.model, setup.force, &setup.q0, &setup.v0, &setup.rho, &grid, &setup.solver)?;
    let steps = grid.steps();
    let mut report = CheckReport::default();
    // Interior nodes only: at the initial rest pose the spring deflections, and
    // with them B, vanish.
    let mut nodes: Vec<usize> = (1..=CHECK_POINTS).map(|i| i * steps / (CHECK_POINTS + 1)).collect();
    nodes.dedup();
    for k in nodes {
        let iv = Interval::of(&grid, k);
        let (qa, qb) = (&traj.states[k].q, &traj.states[k + 1].q);
        let v = (qb - qa) / iv.dt;
        let state = &traj.states[k];
        let rho = &setup.rho;
        report.extend(with(&|m| check_model(m, qa, &v, rho, iv.midpoint_time()))?);
        report.extend(with(&|m| check_slots(m, qa, qb, rho, &iv))?);
        report.extend(with(&|m| check_step(m, state, rho, &iv))?);
    }
    if !setup.rho.is_empty() {
        let shifted = setup.rho.map(|r| 1.1 * r + 0.05);
        let (data, _) = rollout(setup.model, setup.force, &setup.q0, &setup.v0, &shifted, &grid, &setup.solver)?;
        let configurations: Vec<DVector<f64>> = data.configurations().cloned().collect();
        let spec = CostSpec::from_configurations(setup.observation.clone(), &configurations)?;
        let problem = IdentificationProblem {
            model: setup.model,
            q0: setup.q0.clone(),
            v0: setup.v0.clone(),
            grid,
            spec,
            solver: setup.solver,
            force: setup.force,
        };
        report.extend([check_adjoint(&problem, &setup.rho)?]);
    }
    Ok(report)
}

/// `v0` plus a fixed velocity pattern projected onto the constraint tangent
/// space. Starting from rest, parameter sensitivities of the first steps are
/// tiny and their differences are dominated by round-off.
pub fn kicked_velocity(model: &dyn Model, q0: &DVector<f64>, v0: &DVector<f64>, rho: &DVector<f64>) -> DVector<f64> {
    let kick = DVector::from_fn(q0.len(), |i, _| 0.5 * (1.7 * i as f64 + 0.5).cos());
    let kick = match model.constraint(q0, rho) {
        Some(c) => {
            let gram = &c.dh * c.dh.transpose();
            match gram.lu().solve(&(&c.dh * &kick)) {
                Some(y) => &kick - c.dh.transpose() * y,
                None => kick,
            }
        }
        None => kick,
    };
    v0 + kick
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    max_rel_err: f64,
    tolerance: f64,
    passed: bool,
}

pub fn report_lines(report: &CheckReport) -> Vec<String> {
    report
        .summary()
        .iter()
        .map(|c| {
            let tag = if c.passed() { "PASS" } else { "FAIL" };
            format!("{tag} {} max_rel_err={:e} tol={:e}", c.name, c.max_rel_err, c.tolerance)
        })
        .collect()
}

/// Run every derivative check on the configured model; exits 4 if any fails.
pub fn check(opts: &RunOptions) -> CliResult<()> {
    let exp = Experiment::prepare(opts)?;
    let rho = match exp.simulation_rho() {
        Ok(r) => r,
        Err(_) => DVector::from_element(exp.nrho(), 1.0),
    };
    let mut out = Outputs::create(&opts.out)?;
    let steps = exp.grid.steps().min(CHECK_STEPS);
    let grid = TimeGrid::new(exp.grid.t0(), exp.grid.dt(), steps)?;
    let na = exp.actuated().len();
    // Feedback toward the initial pose keeps the force Jacobians in play.
    let force = if na > 0 {
        let torques = SampledSeries::new(&grid, exp.torque_samples(&grid))?;
        let reference = SampledSeries::new(&grid, vec![exp.actuated_part(&exp.q0); grid.len()])?;
        let gain = DVector::from_vec(exp.loaded.config.feedback_gain()?);
        Some(feedback_force(torques, reference, gain, exp.actuated().to_vec(), exp.model.dims().nq)?)
    } else {
        None
    };
    let observation = match exp.loaded.config.observation {
        Some(_) => exp.observation()?,
        None => {
            let nq = exp.model.dims().nq;
            Arc::new(CoordinateObservation::new((0..nq).collect(), nq)?)
        }
    };
    let t = Instant::now();
    let report = run_checks(&CheckSetup {
        model: &exp.model,
        q0: exp.q0.clone(),
        v0: kicked_velocity(&exp.model, &exp.q0, &exp.v0, &rho),
        rho,
        grid,
        force: force.as_ref().map(|f| f as &dyn ExternalForce),
        observation,
        solver: exp.solver,
    })?;
    out.time("checks", t);

    for line in report_lines(&report) {
        println!("{line}");
    }
    let lines: Vec<CheckLine> = report
        .summary()
        .into_iter()
        .map(|c| CheckLine {
            passed: c.passed(),
            name: c.name,
            max_rel_err: c.max_rel_err,
            tolerance: c.tolerance,
        })
        .collect();
    out.write("check.json", &to_json_bytes(&lines))?;
    out.finish("check", &exp)?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report.summary().into_iter().filter(|c| !c.passed()).map(|c| c.name).collect();
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    iteration: usize,
    rho: &'a [f64],
    cost: f64,
    gradient: &'a [f64],
    projected_grad_norm: f64,
    step: Option<f64>,
    backtracks: usize,
    next_cost: Option<f64>,
}

#[derive(Serialize)]
struct ResultOut<'a> {
    termination: &'a str,
    iterations: usize,
    rho0: &'a [f64],
    rho_opt: &'a [f64],
    rho_true: Option<&'a [f64]>,
    /// `max_i |rho_opt_i - rho_true_i| / |rho_true_i|`.
    relative_error: Option<f64>,
    final_cost: f64,
    cost_history: &'a [f64],
    grad_norm_history: &'a [f64],
    records: Vec<RecordOut<'a>>,
}

fn result_doc<'a>(res: &'a IdentificationResult, rho0: &'a DVector<f64>, rho_true: Option<&'a DVector<f64>>) -> ResultOut<'a> {
    let rho_opt = res.rho_opt.values();
    let relative_error = rho_true.map(|t| {
        rho_opt
            .iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max)
    });
    ResultOut {
        termination: res.termination.as_str(),
        iterations: res.iterations,
        rho0: rho0.as_slice(),
        rho_opt: rho_opt.as_slice(),
        rho_true: rho_true.map(|r| r.as_slice()),
        relative_error,
        final_cost: *res.cost_history.last().expect("at least one evaluation"),
        cost_history: &res.cost_history,
        grad_norm_history: &res.grad_norm_history,
        records: res
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| RecordOut {
                iteration: i,
                rho: r.rho.as_slice(),
                cost: r.cost,
                gradient: r.gradient.as_slice(),
                projected_grad_norm: r.projected_grad_norm,
                step: r.step,
                backtracks: r.backtracks,
                next_cost: r.next_cost,
            })
            .collect(),
    }
}

/// Identify the parameters from measured coordinates and torques.
pub fn identify_cmd(opts: &RunOptions) -> CliResult<()> {
    let exp = Experiment::prepare(opts)?;
    exp.require_actuated()?;
    let c = &exp.loaded.config;
    let rho0 = exp.rho0()?.ok_or_else(|| CliError::Config("identify needs rho0".into()))?;
    let start = ParameterVector::new(rho0.clone(), c.lower_bounds(exp.nrho())?)?;
    let rho_true = exp.rho_true()?;
    let obs = exp.measured_observation()?;
    let settings = c.descent_settings();
    settings.validate()?;
    let na = exp.actuated().len();

    let measured_path = exp.data_path(&c.data.measured, &opts.out, "measured.csv");
    let torques_path = exp.data_path(&c.data.torques, &opts.out, "torques.csv");
    let measured = read_series(&measured_path, &exp.grid, na)?;
    let torques = read_series(&torques_path, &exp.grid, na)?;

    // Targets: the observation of the initial pose with the measured coordinates substituted.
    let targets: Vec<DVector<f64>> = measured
        .iter()
        .map(|b| {
            let mut q = exp.q0.clone();
            for (j, &i) in exp.actuated().iter().enumerate() {
                q[i] = b[j];
            }
            obs.eval(&q)
        })
        .collect();
    let n = targets.len();
    let spec = CostSpec::weighted(obs, targets, vec![c.cost.weight; n], c.cost.terminal_weight)?;
    let force = feedback_force(
        SampledSeries::new(&exp.grid, torques)?,
        SampledSeries::new(&exp.grid, measured)?,
        DVector::from_vec(c.feedback_gain()?),
        exp.actuated().to_vec(),
        exp.model.dims().nq,
    )?;
    let problem = IdentificationProblem {
        model: &exp.model,
        q0: exp.q0.clone(),
        v0: exp.v0.clone(),
        grid: exp.grid,
        spec,
        solver: exp.solver,
        force: Some(&force),
    };

    let mut out = Outputs::create(&opts.out)?;
    let t = Instant::now();
    let res = identify(&problem, &start, &settings)?;
    out.time("identify", t);
    let fit = problem.simulate(res.rho_opt.values())?;

    out.write("result.json", &to_json_bytes(&result_doc(&res, &rho0, rho_true.as_ref())))?;
    out.write("convergence.csv", &convergence_table(&res).to_bytes())?;
    if settings.record_paths {
        out.write("paths.csv", &paths_table(&exp.grid, &res).to_bytes())?;
    }
    out.write("fit_trajectory.csv", &trajectory_table(&fit).to_bytes())?;
    out.finish("identify", &exp)?;

    let rho: Vec<String> = res.rho_opt.values().iter().map(|x| fmt_f64(*x)).collect();
    println!(
        "termination={} iterations={} rho=[{}] cost={:e}",
        res.termination.as_str(),
        res.iterations,
        rho.join(","),
        res.cost_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// One row per evaluated iterate.
fn convergence_table(res: &IdentificationResult) -> Table {
    let nrho = res.rho_opt.len();
    let header = ["iteration", "cost", "projected_grad_norm", "step", "backtracks"]
        .into_iter()
        .map(String::from)
        .chain(indexed("rho", nrho))
        .chain(indexed("grad", nrho))
        .collect();
    let mut table = Table::new(header);
    for (i, r) in res.records.iter().enumerate() {
        let row = [
            i.to_string(),
            fmt_f64(r.cost),
            fmt_f64(r.projected_grad_norm),
            r.step.map(fmt_f64).unwrap_or_default(),
            r.backtracks.to_string(),
        ]
        .into_iter()
        .chain(r.rho.iter().map(|x| fmt_f64(*x)))
        .chain(r.gradient.iter().map(|x| fmt_f64(*x)))
        .collect();
        table.push(row);
    }
    table
}

/// Simulated observation path of every iterate, stacked.
fn paths_table(grid: &TimeGrid, res: &IdentificationResult) -> Table {
    let dim = res.paths.first().and_then(|p| p.first()).map_or(0, |w| w.len());
    let header = ["iteration", "k", "t"].into_iter().map(String::from).chain(indexed("w", dim)).collect();
    let mut table = Table::new(header);
    for (i, path) in res.paths.iter().enumerate() {
        for (k, w) in path.iter().enumerate() {
            let row = [i.to_string(), k.to_string(), fmt_f64(grid.time(k))]
                .into_iter()
                .chain(w.iter().map(|x| fmt_f64(*x)))
                .collect();
            table.push(row);
        }
    }
    table
}
