//! `tosqap bench`: every (instance, solver) cell of a manifest from a shared
//! per-instance start, followed by a comparison table and a win/tie/loss
//! tally per solver pair.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tosqap::qap::{initial_point, load_qaplib, QapInstance, DEFAULT_TOLERANCE};
use tosqap::Matrix;

use crate::output::{fmt_f64, matrix_sha256, summarize, write_json, Artifacts, SummaryContext};
use crate::run::{parse_output_policy, run_solver, RunSettings, SolverTag, StepArg};
use crate::solve::{load_best_known_table, OUT_DIR_ENV};

/// Set to any value to run cells one at a time.
pub const SERIAL_ENV: &str = "TOSQAP_SERIAL";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub instances: Vec<ManifestInstance>,
    #[serde(default)]
    pub solvers: Vec<SolverTag>,
    #[serde(default)]
    pub config: ManifestConfig,
    pub out_dir: Option<PathBuf>,
    pub best_known_table: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInstance {
    pub path: PathBuf,
    pub best_known: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestConfig {
    pub iters: usize,
    pub tol: f64,
    pub step: String,
    pub output: String,
    /// Instance `k` (0-based, manifest order) uses seed `seed + k`.
    pub seed: u64,
}

impl Default for ManifestConfig {
    fn default() -> Self {
        Self {
            iters: 100_000,
            tol: DEFAULT_TOLERANCE,
            step: "invL".into(),
            output: "last".into(),
            seed: 1,
        }
    }
}

impl ManifestConfig {
    fn settings(&self) -> Result<RunSettings> {
        let step: StepArg = self.step.parse().map_err(anyhow::Error::msg)?;
        let output = parse_output_policy(&self.output).map_err(anyhow::Error::msg)?;
        let s = RunSettings {
            iters: self.iters,
            seed: self.seed,
            step,
            tol: self.tol,
            output,
        };
        s.validate()?;
        Ok(s)
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = toml::from_str(text).context("invalid manifest")?;
    if m.instances.is_empty() {
        bail!("manifest lists no instances");
    }
    if m.solvers.is_empty() {
        bail!("manifest lists no solvers");
    }
    let mut seen = m.solvers.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != m.solvers.len() {
        bail!("manifest lists a solver twice");
    }
    if m.workers == Some(0) {
        bail!("workers must be at least 1");
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub instance: String,
    pub solver: SolverTag,
    pub seed: u64,
    pub y1_sha256: Option<String>,
    pub ok: bool,
    pub error: Option<String>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub infeasibility: Option<f64>,
    pub nonstationarity: Option<f64>,
    pub rounded_value: Option<f64>,
    pub best_known: Option<f64>,
    pub assignment_error: Option<f64>,
}

/// Outcomes of `first` against `second` over instances where both ran.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct PairTally {
    pub first: SolverTag,
    pub second: SolverTag,
    /// `first` found a strictly smaller rounded objective.
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Instances where either cell failed.
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub out_dir: PathBuf,
    pub cells: Vec<CellReport>,
    pub tally: Vec<PairTally>,
}

impl BenchReport {
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| !c.ok)
    }
}

struct Prepared {
    name: String,
    seed: u64,
    loaded: Result<(QapInstance, Matrix), String>,
}

fn prepare(path: &Path, best_known: Option<f64>, seed: u64) -> Prepared {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let loaded = (|| -> Result<(QapInstance, Matrix)> {
        let inst = load_qaplib(path)?.with_best_known(best_known);
        let y1 = initial_point(inst.n(), seed)?;
        Ok((inst, y1))
    })()
    .map_err(|e| format!("{e:#}"));
    Prepared { name, seed, loaded }
}

fn run_cell(
    prep: &Prepared,
    tag: SolverTag,
    settings: &RunSettings,
    out_dir: &Path,
    record_time: bool,
) -> CellReport {
    let mut report = CellReport {
        instance: prep.name.clone(),
        solver: tag,
        seed: prep.seed,
        y1_sha256: None,
        ok: false,
        error: None,
        iterations: None,
        converged: None,
        infeasibility: None,
        nonstationarity: None,
        rounded_value: None,
        best_known: None,
        assignment_error: None,
    };
    let (inst, y1) = match &prep.loaded {
        Ok(v) => v,
        Err(e) => {
            report.error = Some(e.clone());
            return report;
        }
    };
    let hash = matrix_sha256(y1);
    report.y1_sha256 = Some(hash.clone());
    report.best_known = inst.best_known;
    let settings = RunSettings {
        seed: prep.seed,
        ..settings.clone()
    };
    let outcome = run_solver(inst, tag, &settings, y1).and_then(|r| {
        let summary = summarize(
            SummaryContext {
                instance: &inst.name,
                solver: tag.as_str(),
                seed: settings.seed,
                step: settings.step.to_string(),
                iteration_cap: settings.iters,
                tolerance: settings.tol,
                best_known: inst.best_known,
                y1_sha256: hash,
            },
            &r,
        );
        Artifacts::new(out_dir, &inst.name, tag.as_str()).write(&summary, &r, record_time)?;
        Ok(summary)
    });
    match outcome {
        Ok(s) => {
            report.ok = true;
            report.iterations = Some(s.iterations);
            report.converged = Some(s.converged);
            report.infeasibility = Some(s.infeasibility);
            report.nonstationarity = Some(s.nonstationarity);
            report.rounded_value = Some(s.rounded_value);
            report.assignment_error = s.assignment_error;
        }
        Err(e) => report.error = Some(format!("{e:#}")),
    }
    report
}

/// Pairwise comparison of rounded objective values, `solvers` in manifest order.
pub fn tally(cells: &[CellReport], solvers: &[SolverTag], instances: &[String]) -> Vec<PairTally> {
    let value = |inst: &str, tag: SolverTag| {
        cells
            .iter()
            .find(|c| c.instance == inst && c.solver == tag && c.ok)
            .and_then(|c| c.rounded_value)
    };
    let mut out = Vec::new();
    for (i, &first) in solvers.iter().enumerate() {
        for &second in &solvers[i + 1..] {
            let mut t = PairTally {
                first,
                second,
                wins: 0,
                ties: 0,
                losses: 0,
                skipped: 0,
            };
            for inst in instances {
                match (value(inst, first), value(inst, second)) {
                    (Some(a), Some(b)) if a < b => t.wins += 1,
                    (Some(a), Some(b)) if a > b => t.losses += 1,
                    (Some(_), Some(_)) => t.ties += 1,
                    _ => t.skipped += 1,
                }
            }
            out.push(t);
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_tables(report: &BenchReport) -> Result<()> {
    let dir = &report.out_dir;
    let mut w = csv::Writer::from_path(dir.join("bench_cells.csv"))?;
    w.write_record([
        "instance",
        "solver",
        "seed",
        "status",
        "iterations",
        "converged",
        "infeasibility",
        "nonstationarity",
        "rounded_value",
        "best_known",
        "assignment_error",
        "y1_sha256",
        "error",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.instance.clone(),
            c.solver.to_string(),
            c.seed.to_string(),
            if c.ok { "ok" } else { "failed" }.to_string(),
            c.iterations.map(|v| v.to_string()).unwrap_or_default(),
            c.converged.map(|v| v.to_string()).unwrap_or_default(),
            opt(c.infeasibility),
            opt(c.nonstationarity),
            opt(c.rounded_value),
            opt(c.best_known),
            opt(c.assignment_error),
            c.y1_sha256.clone().unwrap_or_default(),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("bench_tally.csv"))?;
    w.write_record(["first", "second", "wins", "ties", "losses", "skipped"])?;
    for t in &report.tally {
        w.write_record([
            t.first.to_string(),
            t.second.to_string(),
            t.wins.to_string(),
            t.ties.to_string(),
            t.losses.to_string(),
            t.skipped.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&dir.join("bench_summary.json"), report)
}

/// Human-readable table of assignment errors (or rounded values) and the tally.
pub fn render(report: &BenchReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<16} {:<11} {:>8} {:>10} {:>12} {:>12} {:>14} {:>12}\n",
        "instance", "solver", "status", "iters", "infeas", "nonstat", "rounded", "assign_err"
    ));
    for c in &report.cells {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<16} {:<11} {:>8} {:>10} {:>12} {:>12} {:>14} {:>12}\n",
            c.instance,
            c.solver.as_str(),
            if c.ok { "ok" } else { "failed" },
            c.iterations.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            num(c.infeasibility),
            num(c.nonstationarity),
            c.rounded_value.map(|v| format!("{v}")).unwrap_or_else(|| "-".into()),
            num(c.assignment_error),
        ));
    }
    s.push('\n');
    for t in &report.tally {
        s.push_str(&format!(
            "{} vs {}: {} wins, {} ties, {} losses, {} skipped\n",
            t.first, t.second, t.wins, t.ties, t.losses, t.skipped
        ));
    }
    s
}

pub fn cmd_bench(manifest_path: &Path, record_time: bool) -> Result<BenchReport> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest = parse_manifest(&text).with_context(|| manifest_path.display().to_string())?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let settings = manifest.config.settings()?;

    let out_dir = match std::env::var_os(OUT_DIR_ENV) {
        Some(d) => PathBuf::from(d),
        None => base.join(manifest.out_dir.clone().unwrap_or_else(|| "bench-out".into())),
    };
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let table = match &manifest.best_known_table {
        Some(p) => load_best_known_table(&base.join(p))?,
        None => Default::default(),
    };
    let prepared: Vec<Prepared> = manifest
        .instances
        .iter()
        .enumerate()
        .map(|(k, mi)| {
            let path = base.join(&mi.path);
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            let best = mi
                .best_known
                .or_else(|| stem.and_then(|s| table.get(&s).copied()));
            prepare(&path, best, settings.seed.wrapping_add(k as u64))
        })
        .collect();
    let names: Vec<String> = prepared.iter().map(|p| p.name.clone()).collect();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != names.len() {
        bail!("manifest lists two instances with the same file stem");
    }

    let jobs: Vec<(usize, SolverTag)> = (0..prepared.len())
        .flat_map(|i| manifest.solvers.iter().map(move |&s| (i, s)))
        .collect();
    let workers = if std::env::var_os(SERIAL_ENV).is_some() {
        1
    } else {
        manifest
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(jobs.len()).max(1))
        .build()?;
    let cells: Vec<CellReport> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, tag)| run_cell(&prepared[i], tag, &settings, &out_dir, record_time))
            .collect()
    });

    let tally = tally(&cells, &manifest.solvers, &names);
    let report = BenchReport {
        out_dir,
        cells,
        tally,
    };
    write_tables(&report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_is_rejected() {
        assert!(parse_manifest("").is_err());
        assert!(parse_manifest("solvers = [\"fw\"]").is_err());
        assert!(parse_manifest("[[instances]]\npath = \"a.dat\"").is_err());
        assert!(parse_manifest("solvers = [\"fw\", \"fw\"]\n[[instances]]\npath = \"a.dat\"").is_err());
        assert!(parse_manifest("solvers = [\"sa\"]\n[[instances]]\npath = \"a.dat\"").is_err());
    }

    #[test]
    fn manifest_defaults() {
        let m = parse_manifest("solvers = [\"tos-split2\", \"fw\"]\n[[instances]]\npath = \"a.dat\"\nbest_known = 3\n")
            .unwrap();
        assert_eq!(m.solvers, vec![SolverTag::TosSplit2, SolverTag::Fw]);
        assert_eq!(m.instances[0].best_known, Some(3.0));
        let s = m.config.settings().unwrap();
        assert_eq!(s.iters, 100_000);
        assert_eq!(s.step, StepArg::InverseSmoothness);
    }

    fn cell(inst: &str, solver: SolverTag, value: Option<f64>) -> CellReport {
        CellReport {
            instance: inst.into(),
            solver,
            seed: 0,
            y1_sha256: None,
            ok: value.is_some(),
            error: None,
            iterations: None,
            converged: None,
            infeasibility: None,
            nonstationarity: None,
            rounded_value: value,
            best_known: None,
            assignment_error: None,
        }
    }

    #[test]
    fn tally_accounting() {
        use SolverTag::*;
        let cells = vec![
            cell("a", TosSplit2, Some(1.0)),
            cell("a", Fw, Some(2.0)),
            cell("b", TosSplit2, Some(2.0)),
            cell("b", Fw, Some(2.0)),
            cell("c", TosSplit2, Some(3.0)),
            cell("c", Fw, Some(1.0)),
            cell("d", TosSplit2, None),
            cell("d", Fw, Some(1.0)),
        ];
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let t = tally(&cells, &[TosSplit2, Fw], &names);
        assert_eq!(
            t,
            vec![PairTally {
                first: TosSplit2,
                second: Fw,
                wins: 1,
                ties: 1,
                losses: 1,
                skipped: 1
            }]
        );
    }
}
