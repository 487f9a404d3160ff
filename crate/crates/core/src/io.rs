//! Artifact files: diagnostics CSV, snapshot CSVs and the trajectory summary.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so every value
//! reads back bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::field::{Field, FieldKind};
use crate::initial_data::InterpolationResult;
use crate::solver::{FlowTrajectory, Termination};

pub const DIAGNOSTICS_HEADER: &str = "t,sup_u,grad_max,l2,h1_grad,sup_phi,barrier_margin";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn parse_f64(cell: &str, line: usize) -> Result<f64> {
    cell.trim()
        .parse()
        .map_err(|_| Error::Io(format!("line {line}: cannot parse {cell:?} as a number")))
}

fn parse_opt(cell: &str, line: usize) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(cell, line).map(Some)
    }
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in records {
        let cells = [
            format_f64(r.t),
            format_f64(r.sup_u),
            format_f64(r.grad_max),
            format_f64(r.l2),
            format_f64(r.h1_grad),
            format_opt(r.sup_phi),
            format_opt(r.barrier_margin),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == DIAGNOSTICS_HEADER => {}
        other => return Err(Error::Io(format!("expected header {DIAGNOSTICS_HEADER:?}, got {other:?}"))),
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::Io(format!("line {n}: expected 7 cells, got {}", cells.len())));
        }
        records.push(DiagnosticsRecord {
            t: parse_f64(cells[0], n)?,
            sup_u: parse_f64(cells[1], n)?,
            grad_max: parse_f64(cells[2], n)?,
            l2: parse_f64(cells[3], n)?,
            h1_grad: parse_f64(cells[4], n)?,
            sup_phi: parse_opt(cells[5], n)?,
            barrier_margin: parse_opt(cells[6], n)?,
        });
    }
    Ok(records)
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    fs::write(path, diagnostics_csv(records))?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    parse_diagnostics_csv(&fs::read_to_string(path)?)
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("t{t:.6}.csv")
}

pub fn snapshot_csv(field: &Field) -> String {
    let mut out = String::from(match field.kind {
        FieldKind::Line => "x,u\n",
        FieldKind::Radial => "r,u\n",
    });
    for (x, u) in field.nodes.iter().zip(&field.values) {
        out.push_str(&format_f64(*x));
        out.push(',');
        out.push_str(&format_f64(*u));
        out.push('\n');
    }
    out
}

/// Snapshot contents: the grid kind from the header, nodes and values.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: FieldKind,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn parse_snapshot_csv(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines();
    let kind = match lines.next().map(str::trim) {
        Some("x,u") => FieldKind::Line,
        Some("r,u") => FieldKind::Radial,
        other => return Err(Error::Io(format!("expected header \"x,u\" or \"r,u\", got {other:?}"))),
    };
    let (mut nodes, mut values) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 2;
        let (x, u) = line
            .split_once(',')
            .ok_or_else(|| Error::Io(format!("line {n}: expected 2 cells")))?;
        nodes.push(parse_f64(x, n)?);
        values.push(parse_f64(u, n)?);
    }
    Ok(Snapshot { kind, nodes, values })
}

pub fn write_snapshot(dir: &Path, t: f64, field: &Field) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(snapshot_file_name(t));
    fs::write(&path, snapshot_csv(field))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    parse_snapshot_csv(&fs::read_to_string(path)?)
}

/// Writes the modified data `u_tilde` as an initial-condition file (`r,u`).
pub fn write_initial_condition(path: &Path, res: &InterpolationResult) -> Result<()> {
    fs::write(path, snapshot_csv(&res.u_tilde))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub termination: Termination,
    pub steps: usize,
    pub rejected_steps: usize,
    pub final_time: f64,
    pub final_record: Option<DiagnosticsRecord>,
    pub violation: Option<String>,
}

impl TrajectorySummary {
    pub fn of(traj: &FlowTrajectory) -> Self {
        TrajectorySummary {
            termination: traj.termination,
            steps: traj.steps,
            rejected_steps: traj.rejected_steps,
            final_time: traj.final_time(),
            final_record: traj.records.last().copied(),
            violation: traj.violation.clone(),
        }
    }
}

/// Writes `diagnostics.csv`, `snapshots/t*.csv` and `summary.json` into `dir`.
pub fn write_trajectory(dir: &Path, traj: &FlowTrajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_diagnostics(&dir.join(DIAGNOSTICS_FILE), &traj.records)?;
    let snaps = dir.join(SNAPSHOT_DIR);
    for (t, f) in &traj.snapshots {
        write_snapshot(&snaps, *t, f)?;
    }
    write_json(&dir.join(SUMMARY_FILE), &TrajectorySummary::of(traj))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
