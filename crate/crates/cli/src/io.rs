//! File formats. Floats are written in Rust's shortest round-trip form, so a
//! value read back parses to the identical `f64`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};
use vimech::types::{TimeGrid, Trajectory};

use crate::error::{CliError, CliResult};

/// Data files must sample the grid to within this many seconds.
pub const TIME_ALIGN_TOL: f64 = 1e-9;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Header plus rows of already formatted cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

pub fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn cells(v: &DVector<f64>) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| fmt_f64(*x))
}

/// `k,t,q_0..,p_0..,lambda_0..`, one row per grid node.
pub fn trajectory_table(traj: &Trajectory) -> Table {
    let s0 = &traj.states[0];
    let (nq, nh) = (s0.q.len(), s0.lambda.len());
    let header = ["k".to_string(), "t".to_string()]
        .into_iter()
        .chain(indexed("q", nq))
        .chain(indexed("p", nq))
        .chain(indexed("lambda", nh))
        .collect();
    let mut table = Table::new(header);
    for (k, s) in traj.states.iter().enumerate() {
        let row = [k.to_string(), fmt_f64(traj.grid.time(k))]
            .into_iter()
            .chain(cells(&s.q))
            .chain(cells(&s.p))
            .chain(cells(&s.lambda))
            .collect();
        table.push(row);
    }
    table
}

/// `t,<name>_0..` for a series sampled on `grid`.
pub fn series_table(grid: &TimeGrid, prefix: &str, samples: &[DVector<f64>]) -> Table {
    let n = samples.first().map_or(0, |s| s.len());
    let header = std::iter::once("t".to_string()).chain(indexed(prefix, n)).collect();
    let mut table = Table::new(header);
    for (k, s) in samples.iter().enumerate() {
        table.push(std::iter::once(fmt_f64(grid.time(k))).chain(cells(s)).collect());
    }
    table
}

#[derive(Serialize)]
pub struct GridMeta {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl From<&TimeGrid> for GridMeta {
    fn from(g: &TimeGrid) -> Self {
        Self {
            t0: g.t0(),
            dt: g.dt(),
            steps: g.steps(),
        }
    }
}

#[derive(Serialize)]
pub struct SolverMeta {
    pub newton_tol: f64,
    pub max_iters: usize,
    pub predictor: String,
}

#[derive(Serialize)]
struct StateRow<'a> {
    k: usize,
    t: f64,
    q: &'a [f64],
    p: &'a [f64],
    lambda: &'a [f64],
}

#[derive(Serialize)]
struct TrajectoryDoc<'a> {
    model_hash: &'a str,
    rho: &'a [f64],
    grid: GridMeta,
    solver: &'a SolverMeta,
    states: Vec<StateRow<'a>>,
}

/// JSON mirror of the trajectory CSV with run metadata.
pub fn trajectory_json(traj: &Trajectory, model_hash: &str, rho: &DVector<f64>, solver: &SolverMeta) -> Vec<u8> {
    let states = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| StateRow {
            k,
            t: traj.grid.time(k),
            q: s.q.as_slice(),
            p: s.p.as_slice(),
            lambda: s.lambda.as_slice(),
        })
        .collect();
    to_json_bytes(&TrajectoryDoc {
        model_hash,
        rho: rho.as_slice(),
        grid: GridMeta::from(&traj.grid),
        solver,
        states,
    })
}

/// Row-major nested arrays.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Read a `t,<channel...>` series and check it samples `grid` with `channels`
/// columns.
pub fn read_series(path: &Path, grid: &TimeGrid, channels: usize) -> CliResult<Vec<DVector<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("t") {
        return Err(CliError::ingestion(path, "first column must be 't'"));
    }
    if header.len() != channels + 1 {
        return Err(CliError::ingestion(
            path,
            format!("expected {channels} data columns, found {}", header.len() - 1),
        ));
    }
    let mut out = Vec::with_capacity(grid.len());
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let values = record
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::ingestion(path, format!("row {k}: {e}")))?;
        if k >= grid.len() {
            return Err(CliError::ingestion(path, format!("more than {} rows", grid.len())));
        }
        let expected = grid.time(k);
        if !((values[0] - expected).abs() <= TIME_ALIGN_TOL) {
            return Err(CliError::ingestion(
                path,
                format!("row {k}: t = {} does not match grid time {expected}", values[0]),
            ));
        }
        out.push(DVector::from_column_slice(&values[1..]));
    }
    if out.len() != grid.len() {
        return Err(CliError::ingestion(
            path,
            format!("expected {} rows, found {}", grid.len(), out.len()),
        ));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::ingestion(path, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 4.45252, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn series_are_read_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let grid = TimeGrid::new(0.0, 0.01, 3).unwrap();
        let samples: Vec<_> = (0..4).map(|k| DVector::from_vec(vec![k as f64 / 3.0, -0.1 * k as f64])).collect();
        write_atomic(&path, &series_table(&grid, "q", &samples).to_bytes()).unwrap();
        assert_eq!(read_series(&path, &grid, 2).unwrap(), samples);
    }

    #[test]
    fn misaligned_or_short_series_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let grid = TimeGrid::new(0.0, 0.01, 2).unwrap();
        std::fs::write(&path, "t,q_0\n0,1\n0.01,1\n0.0200001,1\n").unwrap();
        assert!(matches!(read_series(&path, &grid, 1), Err(CliError::Ingestion { .. })));
        std::fs::write(&path, "t,q_0\n0,1\n0.01,1\n").unwrap();
        assert!(matches!(read_series(&path, &grid, 1), Err(CliError::Ingestion { .. })));
        std::fs::write(&path, "t,q_0\n0,1\n0.01,1\n0.02,1\n").unwrap();
        assert!(read_series(&path, &grid, 2).is_err());
        std::fs::write(&path, "time,q_0\n0,1\n0.01,1\n0.02,1\n").unwrap();
        assert!(read_series(&path, &grid, 1).is_err());
    }

    #[test]
    fn sub_nanosecond_jitter_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let grid = TimeGrid::new(0.0, 0.01, 1).unwrap();
        std::fs::write(&path, "t,q_0\n0.0000000001,1\n0.01,2\n").unwrap();
        assert_eq!(read_series(&path, &grid, 1).unwrap()[1][0], 2.0);
    }
}
