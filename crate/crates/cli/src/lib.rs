//! Command-line harness for the `tosqap` solvers.

pub mod args;
pub mod bench;
pub mod output;
pub mod run;
pub mod selftest;
pub mod solve;
