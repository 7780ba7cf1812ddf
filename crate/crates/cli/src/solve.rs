//! `tosqap solve`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tosqap::qap::{initial_point, load_qaplib, parse_best_known, SplitChoice};

use crate::args::SolveArgs;
use crate::output::{matrix_sha256, summarize, Artifacts, RunSummary, SummaryContext};
use crate::run::{run_solver, RunSettings, SolverTag};

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "TOSQAP_OUT_DIR";

pub fn resolve_solver(name: &str, split: Option<SplitChoice>) -> Result<SolverTag> {
    let tag = match name {
        "tos" => match split.unwrap_or(SplitChoice::Split2) {
            SplitChoice::Split1 => SolverTag::TosSplit1,
            SplitChoice::Split2 => SolverTag::TosSplit2,
        },
        other => other.parse::<SolverTag>().map_err(anyhow::Error::msg)?,
    };
    match (tag.split(), split) {
        (None, Some(_)) => bail!("--split does not apply to the fw solver"),
        (Some(a), Some(b)) if a != b => bail!("--solver {name} conflicts with --split {}", b.name()),
        _ => Ok(tag),
    }
}

pub fn load_best_known_table(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_best_known(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}

pub struct SolveOutcome {
    pub summary: RunSummary,
    pub artifacts: Artifacts,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<SolveOutcome> {
    let tag = resolve_solver(&args.solver, args.split)?;
    let settings = RunSettings {
        iters: args.iters,
        seed: args.seed,
        step: args.step,
        tol: args.tol,
        output: args.output,
    };
    settings.validate()?;

    let mut inst = load_qaplib(&args.instance)?;
    let best_known = match (args.best_known, &args.best_known_table) {
        (Some(v), _) => Some(v),
        (None, Some(table)) => load_best_known_table(table)?.get(&inst.name).copied(),
        (None, None) => None,
    };
    inst = inst.with_best_known(best_known);

    let y1 = initial_point(inst.n(), settings.seed)?;
    let result = run_solver(&inst, tag, &settings, &y1)?;

    let dir = output_dir(args.out.as_deref());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let artifacts = Artifacts::new(&dir, &inst.name, tag.as_str());
    let summary = summarize(
        SummaryContext {
            instance: &inst.name,
            solver: tag.as_str(),
            seed: settings.seed,
            step: settings.step.to_string(),
            iteration_cap: settings.iters,
            tolerance: settings.tol,
            best_known,
            y1_sha256: matrix_sha256(&y1),
        },
        &result,
    );
    artifacts.write(&summary, &result, args.record_time)?;
    Ok(SolveOutcome { summary, artifacts })
}
