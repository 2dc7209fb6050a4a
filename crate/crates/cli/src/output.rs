//! Writers for diagnostics CSV, JSON summaries, and binary frame snapshots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nonlocal_pme::energy::PathFunction;
use nonlocal_pme::solver::{ConvergenceReport, DiagnosticsRow};
use serde::Serialize;

use crate::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_diagnostics_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_convergence_csv(path: &Path, report: &ConvergenceReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["level", "r", "n", "successive_difference", "oracle_error"]).map_err(|e| io_err(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for row in &report.rows {
        w.write_record([
            row.level.to_string(),
            format!("{:e}", row.r),
            row.n.to_string(),
            opt(row.successive_difference),
            opt(row.oracle_error),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))
}

/// One file per frame: `u64 N`, `u64 M`, `f64 R`, `f64 t`, then the values,
/// all little-endian.
pub fn write_frames(dir: &Path, path: &PathFunction) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let grid = path.grid();
    for (k, frame) in path.frames().iter().enumerate() {
        let file = dir.join(format!("frame_{k:06}.bin"));
        let mut w = BufWriter::new(File::create(&file).map_err(|e| io_err(&file, e))?);
        let mut bytes = Vec::with_capacity(32 + 8 * frame.values().len());
        bytes.extend_from_slice(&(grid.dims() as u64).to_le_bytes());
        bytes.extend_from_slice(&(grid.points() as u64).to_le_bytes());
        bytes.extend_from_slice(&grid.halfwidth().to_le_bytes());
        bytes.extend_from_slice(&path.time(k).to_le_bytes());
        for v in frame.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(|e| io_err(&file, e))?;
        w.flush().map_err(|e| io_err(&file, e))?;
    }
    Ok(())
}
