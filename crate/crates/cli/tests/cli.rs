mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DVector;
use serde_json::json;

use vimech::estimation::CoordinateObservation;
use vimech::integrator::SolverSettings;
use vimech::model::{Dims, LagrangianTerms};
use vimech::models::{Pendulum, StiffnessGrouping};
use vimech::types::TimeGrid;
use vimech::Model;
use vimech_cli::commands::{kicked_velocity, run_checks, CheckSetup};

fn short_pendulum(steps: usize) -> serde_json::Value {
    let mut c = load_config("pendulum.json");
    c["grid"]["steps"] = json!(steps);
    c
}

#[test]
fn pendulum_simulation_writes_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &short_pendulum(250));
    let out = dir.path().join("out");
    let o = vimech("simulate", &cfg, &out, &["--dump-linearization"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(header, ["k", "t", "q_0", "p_0"]);
    assert_eq!(rows.len(), 251);
    assert_eq!(rows[0][2], 0.4);
    assert_eq!(read_csv(&out.join("energy.csv")).1.len(), 250);
    assert_eq!(read_csv(&out.join("constraints.csv")).1.len(), 251);
    let lin = read_json(&out.join("linearization.json"));
    let steps = lin["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 250);
    assert_eq!(steps[0]["a"].as_array().unwrap().len(), 2);
    assert_eq!(steps[0]["b"][0].as_array().unwrap().len(), 1);
    let traj = read_json(&out.join("trajectory.json"));
    assert_eq!(traj["states"].as_array().unwrap().len(), 251);
    assert_eq!(traj["rho"][0], json!(2.5));
    assert_eq!(traj["model_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn loop_simulation_stays_on_constraint_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load_config("loop6.json");
    c["grid"]["steps"] = json!(400);
    let cfg = write_config(dir.path(), "c.json", &c);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(vimech("simulate", &cfg, &a, &[]).status.success());
    assert!(vimech("simulate", &cfg, &b, &[]).status.success());
    let (_, rows) = read_csv(&a.join("constraints.csv"));
    let worst = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
    for f in ["trajectory.csv", "trajectory.json", "energy.csv", "constraints.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn noiseless_generation_reproduces_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &short_pendulum(100));
    let out = dir.path().join("out");
    assert!(vimech("generate", &cfg, &out, &[]).status.success());
    let (header, measured) = read_csv(&out.join("measured.csv"));
    assert_eq!(header, ["t", "q_0"]);
    let (_, traj) = read_csv(&out.join("trajectory.csv"));
    let (_, obs) = read_csv(&out.join("observations.csv"));
    for k in 0..=100 {
        assert_eq!(measured[k][1], traj[k][2]);
        assert_eq!(obs[k][1], traj[k][2]);
    }
    assert_eq!(
        std::fs::read(out.join("measured.csv")).unwrap(),
        std::fs::read(out.join("measured_noiseless.csv")).unwrap()
    );
    assert_eq!(read_csv(&out.join("torques.csv")).0, ["t", "tau_0"]);
}

#[test]
fn noise_has_the_requested_spread_and_follows_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = short_pendulum(2500);
    c["noise_std"] = json!(0.005);
    let cfg = write_config(dir.path(), "c.json", &c);
    let (a, b, d) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("d"));
    assert!(vimech("generate", &cfg, &a, &[]).status.success());
    assert!(vimech("generate", &cfg, &b, &[]).status.success());
    assert!(vimech("generate", &cfg, &d, &["--seed", "99"]).status.success());
    let noisy = read_csv(&a.join("measured.csv")).1;
    let clean = read_csv(&a.join("measured_noiseless.csv")).1;
    let dev: Vec<f64> = noisy.iter().zip(&clean).map(|(n, c)| n[1] - c[1]).collect();
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let std = (dev.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (dev.len() - 1) as f64).sqrt();
    assert!((std / 0.005 - 1.0).abs() < 0.1, "sample std {std}");
    for f in ["measured.csv", "torques.csv", "trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.join("measured.csv")).unwrap(), std::fs::read(d.join("measured.csv")).unwrap());
    // Torque noise is off by default.
    assert_eq!(
        std::fs::read(a.join("torques.csv")).unwrap(),
        std::fs::read(a.join("torques_noiseless.csv")).unwrap()
    );
}

#[test]
fn generated_data_feeds_identification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &short_pendulum(300));
    let out = dir.path().join("out");
    assert!(vimech("generate", &cfg, &out, &[]).status.success());
    let o = vimech("identify", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("termination=grad_tol"));
    let res = read_json(&out.join("result.json"));
    let rho = res["rho_opt"][0].as_f64().unwrap();
    assert!((rho - 2.5).abs() < 1e-3 * 2.5, "{rho}");
    let costs: Vec<f64> = res["cost_history"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    let (_, conv) = read_csv(&out.join("convergence.csv"));
    assert_eq!(conv.len(), res["records"].as_array().unwrap().len());
    let (header, paths) = read_csv(&out.join("paths.csv"));
    assert_eq!(header, ["iteration", "k", "t", "w_0"]);
    assert_eq!(paths.len(), conv.len() * 301);
    assert_eq!(read_csv(&out.join("fit_trajectory.csv")).1.len(), 301);
    let manifest = read_json(&out.join("manifest.json"));
    assert!(manifest["timings_s"]["identify"].as_f64().unwrap() > 0.0);
    let files: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["result.json", "convergence.csv", "paths.csv", "fit_trajectory.csv"]);
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let o = vimech("simulate", &dir.path().join("missing.json"), &out, &[]);
    assert_eq!(failure(&o), (2, Some((2, "io".into()))));

    let mut c = short_pendulum(10);
    c["colour"] = json!("red");
    let cfg = write_config(dir.path(), "unknown.json", &c);
    assert_eq!(failure(&vimech("simulate", &cfg, &out, &[])), (2, Some((2, "config".into()))));

    let mut c = short_pendulum(10);
    c["rho_true"] = json!([1.0, 2.0]);
    let cfg = write_config(dir.path(), "rho.json", &c);
    assert_eq!(failure(&vimech("simulate", &cfg, &out, &[])), (2, Some((2, "config".into()))));

    // Observation of an unmeasured coordinate.
    let mut c = load_config("loop6.json");
    c["observation"] = json!({"kind": "link_position", "link": 3});
    let cfg = write_config(dir.path(), "obs.json", &c);
    assert_eq!(failure(&vimech("identify", &cfg, &out, &[])), (2, Some((2, "config".into()))));

    let o = std::process::Command::new(env!("CARGO_BIN_EXE_vimech")).arg("simulate").output().unwrap();
    let (code, parsed) = failure(&o);
    assert_eq!((code, parsed.map(|p| p.1)), (2, Some("usage".into())));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn misaligned_data_is_an_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &short_pendulum(20));
    let out = dir.path().join("out");
    assert!(vimech("generate", &cfg, &out, &[]).status.success());
    let path = out.join("measured.csv");
    let text = std::fs::read_to_string(&path).unwrap().replacen("0.01,", "0.0100001,", 1);
    std::fs::write(&path, text).unwrap();
    let o = vimech("identify", &cfg, &out, &[]);
    assert_eq!(failure(&o), (2, Some((2, "ingestion".into()))));
    assert_eq!(stderr(&o).lines().count(), 1);

    let mut c = short_pendulum(21);
    c["data"] = json!({"measured": "out/measured_noiseless.csv"});
    let cfg = write_config(dir.path(), "longer.json", &c);
    assert_eq!(failure(&vimech("identify", &cfg, &out, &[])), (2, Some((2, "ingestion".into()))));
}

#[test]
fn solver_failures_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "stretched.json", &stretched_loop_config());
    let o = vimech("simulate", &cfg, &out, &[]);
    assert_eq!(failure(&o), (3, Some((3, "singular_kkt".into()))));
    assert!(stderr(&o).contains("constraint rank"));

    let mut c = load_config("loop6.json");
    c["grid"]["steps"] = json!(10);
    c["initial"] = json!({"q0": [0.6, 1.0, 1.0, 1.0, 1.0, 1.0]});
    let cfg = write_config(dir.path(), "infeasible.json", &c);
    assert_eq!(failure(&vimech("simulate", &cfg, &out, &[])), (3, Some((3, "infeasible_start".into()))));
}

#[test]
fn line_search_failure_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = short_pendulum(100);
    c["descent"] = json!({"initial_step": 1e6, "max_backtracks": 0});
    let cfg = write_config(dir.path(), "c.json", &c);
    let out = dir.path().join("out");
    assert!(vimech("generate", &cfg, &out, &[]).status.success());
    let o = vimech("identify", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = read_json(&out.join("result.json"));
    assert_eq!(res["termination"], json!("line_search_failure"));
    assert_eq!(res["rho_opt"], json!([1.0]));
}

#[test]
fn check_passes_on_stock_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load_config("loop6.json");
    c["grid"]["steps"] = json!(40);
    let loop_cfg = write_config(dir.path(), "loop.json", &c);
    let pend_cfg = write_config(dir.path(), "pend.json", &short_pendulum(40));
    for cfg in [pend_cfg, loop_cfg] {
        let out = dir.path().join("out");
        let o = vimech("check", &cfg, &out, &[]);
        assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
        let text = stdout(&o);
        assert!(text.lines().all(|l| l.starts_with("PASS ")));
        for name in ["Lq", "D2D1Ld", "A", "B", "adjoint"] {
            assert!(text.lines().any(|l| l.split(' ').nth(1) == Some(name)), "{name}");
        }
        let report = read_json(&out.join("check.json"));
        assert!(report.as_array().unwrap().iter().all(|c| c["passed"] == json!(true)));
    }
    // The loop has multipliers, so their sensitivities are checked too.
    let report = read_json(&dir.path().join("out/check.json"));
    assert!(report.as_array().unwrap().iter().any(|c| c["name"] == json!("dlambda/dq")));
}

/// Pendulum whose `Lq` is off by a constant.
struct CorruptedLq(Pendulum);

impl Model for CorruptedLq {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>, rho: &DVector<f64>) -> LagrangianTerms {
        let mut l = self.0.lagrangian(q, v, rho);
        l.lq[0] += 0.1;
        l
    }
}

#[test]
fn corrupted_model_fails_and_names_the_block() {
    let p = CorruptedLq(Pendulum::builder().stiffness(true).build().unwrap());
    let q0 = DVector::from_vec(vec![0.3]);
    let rho = DVector::from_vec(vec![1.0]);
    let setup = CheckSetup {
        model: &p,
        v0: kicked_velocity(&p, &q0, &DVector::zeros(1), &rho),
        q0,
        rho,
        grid: TimeGrid::new(0.0, 0.01, 20).unwrap(),
        force: None,
        observation: Arc::new(CoordinateObservation::new(vec![0], 1).unwrap()),
        solver: SolverSettings::default(),
    };
    let report = run_checks(&setup).unwrap();
    assert!(!report.passed());
    let failed: Vec<String> = report.summary().into_iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    assert!(failed.iter().any(|n| n == "Lq"), "{failed:?}");
    assert!(!failed.iter().any(|n| n == "Lv" || n == "Lvv"), "{failed:?}");
}

#[test]
fn kick_is_tangent_to_the_loop() {
    let m = vimech::models::ClosedLoopModel::regular_polygon(6, 0.355, 0.132, 9.81, &StiffnessGrouping::alternating(6), 0.0)
        .unwrap();
    let q = m.feasible_configuration().clone();
    let rho = DVector::from_vec(vec![1.0, 1.0]);
    let v = kicked_velocity(&m, &q, &DVector::zeros(6), &rho);
    let dh = m.constraint(&q, &rho).unwrap().dh;
    assert!((dh * &v).amax() < 1e-12);
    assert!(v.amax() > 0.1);
}
