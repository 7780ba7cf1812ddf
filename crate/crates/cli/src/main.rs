use std::process::ExitCode;

use clap::Parser;
use tosqap_cli::args::{Cli, Command};
use tosqap_cli::bench::{cmd_bench, render};
use tosqap_cli::selftest::{run_selftest, Fault};
use tosqap_cli::solve::cmd_solve;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => match cmd_solve(&args) {
            Ok(out) => {
                let s = &out.summary;
                println!(
                    "{} {}: {} iterations, infeasibility {:.3e}, nonstationarity {:.3e}, rounded {}",
                    s.instance, s.solver, s.iterations, s.infeasibility, s.nonstationarity, s.rounded_value
                );
                println!("trace: {}", out.artifacts.trace.display());
                println!("summary: {}", out.artifacts.summary.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Command::Bench(args) => match cmd_bench(&args.manifest, args.record_time) {
            Ok(report) => {
                print!("{}", render(&report));
                for c in report.cells.iter().filter(|c| !c.ok) {
                    eprintln!(
                        "cell {} {} failed: {}",
                        c.instance,
                        c.solver,
                        c.error.as_deref().unwrap_or("unknown error")
                    );
                }
                if report.all_failed() {
                    eprintln!("error: every cell failed");
                    ExitCode::FAILURE
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::Selftest(args) => {
            let fault = match args.inject_fault.as_deref().map(str::parse::<Fault>) {
                None => None,
                Some(Ok(f)) => Some(f),
                Some(Err(e)) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let results = run_selftest(fault);
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
