//! Solver selection and single runs.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tosqap::fw::{fw_relax_and_round_from, FwConfig};
use tosqap::lap::Permutation;
use tosqap::qap::{estimate_smoothness, relax_and_round_from, QapInstance, QapResult, SplitChoice};
use tosqap::tos::{OutputPolicy, SolverConfig, StepPolicy, TraceSchedule};
use tosqap::Matrix;

/// Solver cell of a run or a bench manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverTag {
    #[serde(rename = "tos-split1")]
    TosSplit1,
    #[serde(rename = "tos-split2")]
    TosSplit2,
    #[serde(rename = "fw")]
    Fw,
}

impl SolverTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverTag::TosSplit1 => "tos-split1",
            SolverTag::TosSplit2 => "tos-split2",
            SolverTag::Fw => "fw",
        }
    }

    pub fn split(self) -> Option<SplitChoice> {
        match self {
            SolverTag::TosSplit1 => Some(SplitChoice::Split1),
            SolverTag::TosSplit2 => Some(SplitChoice::Split2),
            SolverTag::Fw => None,
        }
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tos-split1" => Ok(SolverTag::TosSplit1),
            "tos-split2" => Ok(SolverTag::TosSplit2),
            "fw" => Ok(SolverTag::Fw),
            other => Err(format!("unknown solver {other:?} (tos-split1, tos-split2, fw)")),
        }
    }
}

/// `theory`, `invL` or `fixed:<gamma>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepArg {
    Theory,
    InverseSmoothness,
    Fixed(f64),
}

impl FromStr for StepArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "theory" => Ok(StepArg::Theory),
            "invL" | "invl" => Ok(StepArg::InverseSmoothness),
            _ => {
                let gamma = s
                    .strip_prefix("fixed:")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| format!("invalid step {s:?} (theory, invL or fixed:<gamma>)"))?;
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(StepArg::Fixed(gamma))
                } else {
                    Err(format!("fixed step must be positive, got {gamma}"))
                }
            }
        }
    }
}

impl fmt::Display for StepArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepArg::Theory => f.write_str("theory"),
            StepArg::InverseSmoothness => f.write_str("invL"),
            StepArg::Fixed(g) => write!(f, "fixed:{g}"),
        }
    }
}

pub fn parse_output_policy(s: &str) -> Result<OutputPolicy, String> {
    match s {
        "last" => Ok(OutputPolicy::LastIterate),
        "random" => Ok(OutputPolicy::RandomIterate),
        other => Err(format!("unknown output policy {other:?} (last, random)")),
    }
}

/// Parameters shared by every cell of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub iters: usize,
    pub seed: u64,
    pub step: StepArg,
    pub tol: f64,
    pub output: OutputPolicy,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            bail!("--iters must be at least 1");
        }
        if !(self.tol >= 0.0) {
            bail!("--tol must be nonnegative");
        }
        Ok(())
    }
}

/// Runs one solver from `y1` and returns the relax-and-round result.
pub fn run_solver(inst: &QapInstance, tag: SolverTag, settings: &RunSettings, y1: &Matrix) -> Result<QapResult> {
    settings.validate()?;
    match tag.split() {
        Some(split) => {
            let step = match settings.step {
                StepArg::Theory => StepPolicy::TwoIndicators,
                StepArg::InverseSmoothness => StepPolicy::InverseSmoothness(
                    estimate_smoothness(inst).context("estimating the smoothness constant")?,
                ),
                StepArg::Fixed(g) => StepPolicy::Fixed(g),
            };
            let config = SolverConfig::new(settings.iters, step)
                .with_seed(settings.seed)
                .with_output(settings.output)
                .with_trace(TraceSchedule::PowersOfTwo)
                .with_certificate_reference(tosqap::lap::permutation_to_matrix(&Permutation::identity(
                    inst.n(),
                )));
            Ok(relax_and_round_from(inst, split, &config, Some(settings.tol), y1)?)
        }
        None => {
            let config = FwConfig::new(settings.iters, settings.tol)
                .with_seed(settings.seed)
                .with_trace(TraceSchedule::PowersOfTwo);
            Ok(fw_relax_and_round_from(inst, y1, &config)?)
        }
    }
}
