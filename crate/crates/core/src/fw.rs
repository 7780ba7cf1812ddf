//! Frank-Wolfe over the Birkhoff polytope with exact line search, for
//! quadratic objectives. The linear minimization oracle is the Hungarian
//! method.

use std::time::Instant;

use crate::error::{invalid, Result};
use crate::lap::birkhoff_lmo;
use crate::matrix::Matrix;
use crate::oracles::{GradientOracle, SquaredDistance};
use crate::qap::{initial_point, qap_gradient, qap_objective, summarize, QapInstance, QapResult, RunInfo};
use crate::tos::{TraceRecord, TraceSchedule};

/// Slack allowed on the row/column sums and signs of the start.
pub const START_FEASIBILITY_TOL: f64 = 1e-9;

/// A quadratic along lines: `f(X + eta D) = f(X) + eta <grad f(X), D> + eta^2 curvature(D)`.
pub trait QuadraticObjective: GradientOracle {
    fn curvature(&self, d: &Matrix) -> f64;
}

impl QuadraticObjective for QapInstance {
    fn curvature(&self, d: &Matrix) -> f64 {
        qap_objective(self, d).expect("curvature: shape checked by the solver")
    }
}

impl QuadraticObjective for SquaredDistance {
    fn curvature(&self, d: &Matrix) -> f64 {
        0.5 * d.norm().powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwConfig {
    pub max_iters: usize,
    /// Stop once `gap / max(f, 1)` is at most this.
    pub gap_tolerance: f64,
    /// Seed of the default start when none is supplied.
    pub seed: u64,
    pub trace: TraceSchedule,
}

impl FwConfig {
    pub fn new(max_iters: usize, gap_tolerance: f64) -> Self {
        Self {
            max_iters,
            gap_tolerance,
            seed: 0,
            trace: TraceSchedule::PowersOfTwo,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace(mut self, trace: TraceSchedule) -> Self {
        self.trace = trace;
        self
    }
}

#[derive(Debug, Clone)]
pub struct FwResult {
    pub iterate: Matrix,
    /// Gradient evaluations performed.
    pub iterations: usize,
    pub gap: f64,
    pub trace: Vec<TraceRecord>,
    pub wall_time: f64,
}

/// Exact minimizer on `[0, 1]` of `q(eta) = eta b + eta^2 a`.
pub fn line_search(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.0, 1.0)
    } else if a + b <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Frank-Wolfe gap `<grad f(X), X - S>` with `S` the vertex minimizing
/// `<grad f(X), .>`.
pub fn fw_gap(inst: &QapInstance, x: &Matrix) -> Result<f64> {
    let grad = qap_gradient(inst, x)?;
    let s = birkhoff_lmo(&grad)?;
    Ok(grad.inner(x)? - grad.inner(&s)?)
}

fn check_doubly_stochastic(x: &Matrix) -> Result<()> {
    let tol = START_FEASIBILITY_TOL;
    let ok_sum = |s: &f64| (s - 1.0).abs() <= tol;
    let feasible = x.is_square()
        && x.row_sums().iter().all(ok_sum)
        && x.col_sums().iter().all(ok_sum)
        && x.as_slice().iter().all(|&v| v >= -tol);
    if feasible {
        Ok(())
    } else {
        Err(invalid("Frank-Wolfe start is not doubly stochastic"))
    }
}

/// Runs Frank-Wolfe from the doubly stochastic `y1`. Iteration `t` evaluates
/// the gap at `X_t` and, unless it stops there, moves to
/// `X_{t+1} = X_t + eta_t (S_t - X_t)`.
pub fn run_fw(f: &dyn QuadraticObjective, y1: &Matrix, config: &FwConfig) -> Result<FwResult> {
    let start = Instant::now();
    if config.max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    if !(config.gap_tolerance >= 0.0) {
        return Err(invalid("gap tolerance must be nonnegative"));
    }
    check_doubly_stochastic(y1)?;

    let mut x = y1.clone();
    let mut trace = Vec::new();
    let mut t = 1;
    loop {
        let grad = f.gradient(&x);
        grad.ensure_shape("run_fw: gradient", x.shape())?;
        let s = birkhoff_lmo(&grad)?;
        let gap = grad.inner(&x)? - grad.inner(&s)?;
        let value = f.value(&x);
        let normalized = gap.abs() / value.max(1.0);
        let stop = normalized <= config.gap_tolerance || t == config.max_iters;

        if config.trace.contains(t, stop) {
            trace.push(TraceRecord {
                t,
                objective: Some(value),
                coupling_norm: gap,
                certificate: None,
                infeasibility: Some(0.0),
                nonstationarity: Some(normalized),
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        }
        if stop {
            return Ok(FwResult {
                iterate: x,
                iterations: t,
                gap,
                trace,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }

        let d = &s - &x;
        let eta = line_search(f.curvature(&d), -gap);
        if eta > 0.0 {
            x = x.axpy(eta, &d);
        }
        t += 1;
    }
}

/// Frank-Wolfe relax-and-round on a QAP instance. Infeasibility is zero by
/// construction.
pub fn fw_relax_and_round_from(inst: &QapInstance, y1: &Matrix, config: &FwConfig) -> Result<QapResult> {
    let run = run_fw(inst, y1, config)?;
    summarize(
        inst,
        run.iterate,
        0.0,
        RunInfo {
            iterations: run.iterations,
            step_size: f64::NAN,
            tau: None,
            trace: run.trace,
            wall_time: run.wall_time,
        },
    )
}

/// As [`fw_relax_and_round_from`], from the default start of `config.seed`.
pub fn fw_relax_and_round(inst: &QapInstance, config: &FwConfig) -> Result<QapResult> {
    let y1 = initial_point(inst.n(), config.seed)?;
    fw_relax_and_round_from(inst, &y1, config)
}
