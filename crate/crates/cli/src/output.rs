//! Trace, iterate and summary files.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tosqap::qap::QapResult;
use tosqap::tos::TraceRecord;
use tosqap::Matrix;

pub const TRACE_HEADER: [&str; 7] = [
    "t",
    "objective",
    "coupling_or_gap",
    "certificate",
    "infeasibility",
    "nonstationarity",
    "elapsed_seconds",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes the trace as CSV. Elapsed times are left empty unless
/// `record_time` is set, so repeated runs give identical files.
pub fn write_trace(path: &Path, trace: &[TraceRecord], record_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        w.write_record([
            r.t.to_string(),
            fmt_opt(r.objective),
            fmt_f64(r.coupling_norm),
            fmt_opt(r.certificate),
            fmt_opt(r.infeasibility),
            fmt_opt(r.nonstationarity),
            if record_time {
                fmt_f64(r.elapsed_seconds)
            } else {
                String::new()
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed trace line; empty fields become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub values: [Option<f64>; 6],
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        bail!("{}: unexpected trace header {header:?}", path.display());
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t = rec[0].parse().context("trace: bad iteration index")?;
        let mut values = [None; 6];
        for (k, v) in values.iter_mut().enumerate() {
            let field = &rec[k + 1];
            if !field.is_empty() {
                *v = Some(field.parse().with_context(|| format!("trace: bad number {field:?}"))?);
            }
        }
        rows.push(TraceRow { t, values });
    }
    Ok(rows)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::parse).collect::<Result<_, _>>()?);
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// SHA-256 of the row-major little-endian bytes of `m`, in hex.
pub fn matrix_sha256(m: &Matrix) -> String {
    let mut h = Sha256::new();
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub instance: String,
    pub n: usize,
    pub solver: String,
    pub seed: u64,
    pub step: String,
    pub step_size: Option<f64>,
    pub iteration_cap: usize,
    pub iterations: usize,
    pub tau: Option<usize>,
    pub tolerance: f64,
    pub converged: bool,
    pub infeasibility: f64,
    pub nonstationarity: f64,
    pub relaxed_value: f64,
    pub rounded_value: f64,
    /// One-based images, `permutation[i]` is the location of facility `i + 1`.
    pub permutation: Vec<usize>,
    pub best_known: Option<f64>,
    pub assignment_error: Option<f64>,
    pub y1_sha256: String,
    pub wall_time_seconds: f64,
}

pub struct SummaryContext<'a> {
    pub instance: &'a str,
    pub solver: &'a str,
    pub seed: u64,
    pub step: String,
    pub iteration_cap: usize,
    pub tolerance: f64,
    pub best_known: Option<f64>,
    pub y1_sha256: String,
}

pub fn summarize(ctx: SummaryContext<'_>, r: &QapResult) -> RunSummary {
    RunSummary {
        instance: ctx.instance.to_owned(),
        n: r.permutation.len(),
        solver: ctx.solver.to_owned(),
        seed: ctx.seed,
        step: ctx.step,
        step_size: r.step_size.is_finite().then_some(r.step_size),
        iteration_cap: ctx.iteration_cap,
        iterations: r.iterations,
        tau: r.tau,
        tolerance: ctx.tolerance,
        converged: r.infeasibility < ctx.tolerance && r.nonstationarity < ctx.tolerance,
        infeasibility: r.infeasibility,
        nonstationarity: r.nonstationarity,
        relaxed_value: r.relaxed_value,
        rounded_value: r.rounded_value,
        permutation: r.permutation.to_one_based(),
        best_known: ctx.best_known,
        assignment_error: r.assignment_error,
        y1_sha256: ctx.y1_sha256,
        wall_time_seconds: r.wall_time,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Paths of the three artifacts of one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub iterate: PathBuf,
}

impl Artifacts {
    pub fn new(dir: &Path, instance: &str, solver: &str) -> Self {
        let stem = format!("{instance}.{solver}");
        Self {
            trace: dir.join(format!("{stem}.trace.csv")),
            summary: dir.join(format!("{stem}.summary.json")),
            iterate: dir.join(format!("{stem}.iterate.csv")),
        }
    }

    pub fn write(&self, summary: &RunSummary, r: &QapResult, record_time: bool) -> Result<()> {
        write_trace(&self.trace, &r.trace, record_time)?;
        write_matrix(&self.iterate, &r.relaxed_iterate)?;
        write_json(&self.summary, summary)
    }
}
