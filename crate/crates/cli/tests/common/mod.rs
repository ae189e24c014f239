#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load_config(name: &str) -> Value {
    let text = std::fs::read_to_string(configs_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

pub fn vimech(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vimech"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Exit code and the parsed `error code=N kind=K: ...` line, if any.
pub fn failure(o: &Output) -> (i32, Option<(i32, String)>) {
    let code = o.status.code().unwrap_or(-1);
    let err = stderr(o);
    let line = err.lines().find(|l| l.starts_with("error code="));
    let parsed = line.map(|l| {
        let rest = &l["error code=".len()..];
        let (n, rest) = rest.split_once(' ').unwrap();
        let kind = rest.trim_start_matches("kind=").split(':').next().unwrap().to_string();
        (n.parse().unwrap(), kind)
    });
    (code, parsed)
}

/// Header and numeric rows of a CSV file.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// A stretched three-link loop: the closure Jacobian loses rank at the only
/// feasible configuration.
pub fn stretched_loop_config() -> Value {
    serde_json::json!({
        "model": {
            "kind": "closed_loop",
            "link_lengths": [1.0, 1.0, 1.0],
            "link_masses": [1.0, 1.0, 1.0],
            "rest_angles": [0.0, 0.0, 0.0],
            "stiffness_map": [0, 0, 0],
            "anchor": [3.0, 0.0]
        },
        "grid": { "steps": 10 },
        "rho_true": [1.0]
    })
}
