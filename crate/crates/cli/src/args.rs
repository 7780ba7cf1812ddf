use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tosqap::qap::SplitChoice;
use tosqap::tos::OutputPolicy;

use crate::run::{parse_output_policy, StepArg};

#[derive(Debug, Parser)]
#[command(
    name = "tosqap",
    version,
    about = "Three operator splitting and Frank-Wolfe for relax-and-round QAP"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one QAPLIB instance and write its trace, summary and final iterate.
    Solve(SolveArgs),
    /// Run every (instance, solver) cell of a manifest and tabulate the results.
    Bench(BenchArgs),
    /// Run the fast invariant checks and report pass/fail per group.
    Selftest(SelftestArgs),
}

fn parse_split(s: &str) -> Result<SplitChoice, String> {
    match s {
        "split1" | "1" => Ok(SplitChoice::Split1),
        "split2" | "2" => Ok(SplitChoice::Split2),
        other => Err(format!("unknown split {other:?} (split1, split2)")),
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance file in QAPLIB format (n, then A, then B).
    pub instance: PathBuf,

    /// Solver: tos (split chosen by --split), tos-split1, tos-split2 or fw.
    #[arg(long, default_value = "tos")]
    pub solver: String,

    /// Splitting of the Birkhoff polytope for --solver tos: split1
    /// (row-/column-stochastic) or split2 (box / affine). Default split2.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitChoice>,

    /// Iteration cap.
    #[arg(long, default_value_t = 100_000)]
    pub iters: usize,

    /// Seed of the initial point and of the random output index.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Step size: theory (D / (2 G_f T^{2/3})), invL (1 / L_f) or fixed:<gamma>.
    /// Ignored by fw, which uses exact line search.
    #[arg(long, default_value = "invL")]
    pub step: StepArg,

    /// Stop once infeasibility and nonstationarity are both below this,
    /// checked at t = 1, 2, 4, 8, ...
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,

    /// Returned iterate: last or random (uniform over the executed iterations).
    #[arg(long, default_value = "last", value_parser = parse_output_policy)]
    pub output: OutputPolicy,

    /// Output directory [default: $TOSQAP_OUT_DIR, else the current directory].
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Best known objective value, for the assignment error.
    #[arg(long)]
    pub best_known: Option<f64>,

    /// Table of best known values ("name value" lines), looked up by
    /// instance file stem when --best-known is absent.
    #[arg(long)]
    pub best_known_table: Option<PathBuf>,

    /// Fill the elapsed_seconds trace column (makes traces run-dependent).
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Manifest file (TOML). Relative paths inside it resolve against its directory.
    pub manifest: PathBuf,

    /// Fill the elapsed_seconds trace column.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Corrupt a component to check that the selftest notices.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}
