//! CSV layouts for trajectories and sweep summaries.

use std::io::{Read, Write};

use hocbf::{ConstraintTag, TrajectoryRecord};
use thiserror::Error;

pub const TRAJECTORY_HEADER: [&str; 12] = [
    "t",
    "z",
    "v",
    "u",
    "delta_acc",
    "b",
    "psi1",
    "hocbf_slack",
    "clf_slack",
    "active_hocbf",
    "active_clf",
    "qp_status",
];

pub const SWEEP_HEADER: [&str; 7] =
    ["value", "min_u", "min_b", "min_psi1", "infeasible_at", "reached_vd", "brake_conflict"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected header: got [{got}], expected [{expected}]")]
    Header { got: String, expected: String },
    #[error("row {row}: column '{column}': cannot parse '{text}' as a number")]
    Number { row: usize, column: &'static str, text: String },
    #[error("no data rows")]
    Empty,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_trajectory<W: Write>(out: W, rec: &TrajectoryRecord) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &rec.steps {
        let hocbf = s.row_index(ConstraintTag::HocbfSafety);
        let clf = s.row_index(ConstraintTag::Clf);
        let slack = |i: Option<usize>| i.map_or(String::new(), |i| fmt17(s.slack[i]));
        let active = |i: Option<usize>| i.map_or("0", |i| flag(s.active[i]));
        let psi = &s.psi[0];
        w.write_record([
            fmt17(s.t),
            fmt17(s.state[0]),
            fmt17(s.state[1]),
            fmt17(s.u[0]),
            fmt17(s.relax.first().copied().unwrap_or(0.0)),
            fmt17(psi[0]),
            psi.get(1).map_or(String::new(), |v| fmt17(*v)),
            slack(hocbf),
            slack(clf),
            active(hocbf).to_string(),
            active(clf).to_string(),
            s.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Minimum over feasible steps.
    pub min_u: f64,
    /// `−∞` when the run stopped on an infeasible QP.
    pub effective_min_u: f64,
    pub min_b: f64,
    pub min_psi1: f64,
    pub max_v: f64,
    pub terminal_v: f64,
    pub infeasible_at: Option<f64>,
}

impl RunSummary {
    pub fn of(rec: &TrajectoryRecord) -> Self {
        let psi = &rec.summary.min_psi[0];
        Self {
            min_u: rec.summary.min_u[0],
            effective_min_u: rec.summary.effective_min_u()[0],
            min_b: psi[0],
            min_psi1: psi.get(1).copied().unwrap_or(f64::NAN),
            max_v: rec.steps.iter().map(|s| s.state[1]).fold(f64::NEG_INFINITY, f64::max),
            terminal_v: rec.final_state[1],
            infeasible_at: rec.summary.infeasible_at,
        }
    }
}

pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
    pub v_d: f64,
    pub brake_limit: f64,
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.value.to_string(),
            fmt17(s.effective_min_u),
            fmt17(s.min_b),
            fmt17(s.min_psi1),
            s.infeasible_at.map_or(String::new(), fmt17),
            (s.max_v >= r.v_d - 0.1).to_string(),
            (s.effective_min_u < r.brake_limit).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(data row number, t, b, psi1)` per row of a trajectory CSV.
pub type GapRow = (usize, f64, f64, f64);

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<GapRow>, RecordError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER.iter().copied()) {
        return Err(RecordError::Header {
            got: header.iter().collect::<Vec<_>>().join(","),
            expected: TRAJECTORY_HEADER.join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |idx: usize, column: &'static str| -> Result<f64, RecordError> {
            let text = rec.get(idx).unwrap_or("");
            text.trim().parse::<f64>().map_err(|_| RecordError::Number { row, column, text: text.to_string() })
        };
        rows.push((row, num(0, "t")?, num(5, "b")?, num(6, "psi1")?));
    }
    if rows.is_empty() {
        return Err(RecordError::Empty);
    }
    Ok(rows)
}
