//! Quadratic assignment: instances, the relaxed objective
//! `f(X) = trace(A X B^T X^T)` over the Birkhoff polytope, error metrics and
//! the relax-and-round pipeline.
//!
//! Matrices are used verbatim in file order (first `A`, then `B`); at a
//! permutation `p` the objective equals `sum_ij A_ij B_{p(i) p(j)}`.

use std::collections::BTreeMap;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::lap::{permutation_to_matrix, solve_lap_max, solve_lap_min, Permutation};
use crate::matrix::Matrix;
use crate::oracles::GradientOracle;
use crate::prox::{ConvexSet, Indicator};
use crate::rng::RngState;
use crate::tos::{
    gaussian_birkhoff_start, run_tos_observed, CompositeProblem, IterationView, Observer,
    ProblemConstants, SolverConfig, StepPolicy, TraceRecord,
};

/// Rounds of alternating projections used to build the default start.
pub const INIT_ROUNDS: usize = 1000;

/// Default stopping threshold for both error metrics.
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct QapInstance {
    pub name: String,
    pub a: Matrix,
    pub b: Matrix,
    pub best_known: Option<f64>,
}

impl QapInstance {
    pub fn new(name: impl Into<String>, a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.ensure_square("QapInstance: A")?;
        b.ensure_shape("QapInstance: B", (n, n))?;
        Ok(Self {
            name: name.into(),
            a,
            b,
            best_known: None,
        })
    }

    pub fn with_best_known(mut self, value: Option<f64>) -> Self {
        self.best_known = value;
        self
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// `sum_ij A_ij B_{p(i) p(j)}`.
    pub fn permutation_objective(&self, p: &Permutation) -> Result<f64> {
        let n = self.n();
        if p.len() != n {
            return Err(invalid(format!(
                "permutation of length {} for instance of size {n}",
                p.len()
            )));
        }
        let mut total = 0.0;
        for i in 0..n {
            let bi = self.b.row(p.apply(i));
            for (j, &aij) in self.a.row(i).iter().enumerate() {
                total += aij * bi[p.apply(j)];
            }
        }
        Ok(total)
    }
}

/// Parses the QAPLIB layout: `n`, then `n^2` entries of `A`, then `n^2` of `B`,
/// separated by arbitrary whitespace. Positions in errors are 1-based token
/// indices.
pub fn parse_qaplib(name: &str, text: &str) -> Result<QapInstance> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let first = tokens.first().ok_or(Error::Parse {
        position: 1,
        message: "empty input, expected the dimension n".into(),
    })?;
    let n: usize = match first.parse::<i64>() {
        Ok(v) if v > 0 => v as usize,
        Ok(v) => {
            return Err(Error::Parse {
                position: 1,
                message: format!("dimension must be positive, found {v}"),
            })
        }
        Err(_) => {
            return Err(Error::Parse {
                position: 1,
                message: format!("expected the dimension n, found {first:?}"),
            })
        }
    };
    let expected = n
        .checked_mul(n)
        .and_then(|m| m.checked_mul(2))
        .and_then(|m| m.checked_add(1))
        .ok_or(Error::Parse {
            position: 1,
            message: format!("dimension {n} is too large"),
        })?;
    if tokens.len() != expected {
        return Err(Error::Parse {
            position: tokens.len().min(expected) + 1,
            message: format!("expected {expected} tokens, found {}", tokens.len()),
        });
    }
    let mut values = Vec::with_capacity(expected - 1);
    for (k, tok) in tokens.iter().enumerate().skip(1) {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(Error::Parse {
                    position: k + 1,
                    message: format!("expected a finite number, found {tok:?}"),
                })
            }
        }
    }
    let b = values.split_off(n * n);
    QapInstance::new(name, Matrix::new(n, n, values)?, Matrix::new(n, n, b)?)
}

/// Reads a QAPLIB file; the instance is named after the file stem.
pub fn load_qaplib(path: &Path) -> Result<QapInstance> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_qaplib(&name, &text)
}

/// Parses a best-known table: one `name value` pair per line, `#` comments.
pub fn parse_best_known(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut table = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [name, value] => value.parse::<f64>().ok().map(|v| (name.to_string(), v)),
            _ => None,
        };
        let (name, value) = parsed.ok_or_else(|| Error::Parse {
            position: lineno + 1,
            message: format!("expected `name value`, found {line:?}"),
        })?;
        table.insert(name, value);
    }
    Ok(table)
}

/// `trace(A X B^T X^T) = <A X B^T, X>`.
pub fn qap_objective(inst: &QapInstance, x: &Matrix) -> Result<f64> {
    x.ensure_shape("qap_objective", inst.a.shape())?;
    inst.a.matmul(x)?.matmul_transpose(&inst.b)?.inner(x)
}

/// `A X B^T + A^T X B`.
pub fn qap_gradient(inst: &QapInstance, x: &Matrix) -> Result<Matrix> {
    x.ensure_shape("qap_gradient", inst.a.shape())?;
    let left = inst.a.matmul(x)?.matmul_transpose(&inst.b)?;
    let right = inst.a.transpose().matmul(x)?.matmul(&inst.b)?;
    Ok(&left + &right)
}

impl GradientOracle for QapInstance {
    fn value(&self, x: &Matrix) -> f64 {
        qap_objective(self, x).expect("qap objective: shape checked by the solver")
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        qap_gradient(self, x).expect("qap gradient: shape checked by the solver")
    }
}

/// Lipschitz constant of the gradient: the spectral norm of the self-adjoint
/// map `X -> A X B^T + A^T X B`, by power iteration from a fixed start.
pub fn estimate_smoothness(inst: &QapInstance) -> Result<f64> {
    const MAX_ITERS: usize = 100_000;
    const REL_TOL: f64 = 1e-12;
    let n = inst.n();
    let mut x = RngState::new(0).gaussian_matrix(n, n);
    x = x.scaled(1.0 / x.norm());
    let mut estimate = 0.0;
    for _ in 0..MAX_ITERS {
        let y = qap_gradient(inst, &x)?;
        let norm = y.norm();
        if norm == 0.0 {
            return Err(invalid(format!(
                "instance {:?} has a zero quadratic form; supply a fixed step",
                inst.name
            )));
        }
        let done = (norm - estimate).abs() <= REL_TOL * norm;
        estimate = norm;
        x = y.scaled(1.0 / norm);
        if done {
            break;
        }
    }
    Ok(estimate)
}

/// The two splittings of the Birkhoff polytope into `G` and `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitChoice {
    /// `G` row-stochastic, `H` column-stochastic.
    Split1,
    /// `G` the unit box, `H` the affine set of unit row and column sums.
    Split2,
}

impl SplitChoice {
    pub fn sets(self) -> (ConvexSet, ConvexSet) {
        match self {
            SplitChoice::Split1 => (ConvexSet::RowStochastic, ConvexSet::ColumnStochastic),
            SplitChoice::Split2 => (ConvexSet::UNIT_BOX, ConvexSet::AffineDoublyStochastic),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitChoice::Split1 => "split1",
            SplitChoice::Split2 => "split2",
        }
    }

    /// Diameter of `G` for `n x n` matrices.
    pub fn diameter(self, n: usize) -> f64 {
        self.sets().0.diameter(n, n).expect("G is bounded in both splits")
    }

    /// `sup ||X||` over `G`.
    pub fn max_norm(self, n: usize) -> f64 {
        match self {
            SplitChoice::Split1 => (n as f64).sqrt(),
            SplitChoice::Split2 => n as f64,
        }
    }
}

/// Constants for the theory step: `D_G` of the split and the gradient bound
/// `L_f sup_G ||X||` (the gradient is linear in `X`).
pub fn problem_constants(inst: &QapInstance, split: SplitChoice) -> Result<ProblemConstants> {
    let n = inst.n();
    let lf = estimate_smoothness(inst)?;
    Ok(ProblemConstants {
        diameter: split.diameter(n),
        gradient_bound: lf * split.max_norm(n),
        lipschitz_g: 0.0,
        lipschitz_h: 0.0,
    })
}

/// `dist(X, H) / sqrt(n)` for the split's second set.
pub fn infeasibility_error(x: &Matrix, split: SplitChoice) -> Result<f64> {
    let n = x.ensure_square("infeasibility_error")?;
    let p = split.sets().1.project(x)?;
    Ok((x - &p).norm() / (n as f64).sqrt())
}

/// `|<grad f(X), X> - min_P <grad f(X), P>| / max(f(X), 1)`, the minimum
/// over permutation matrices `P` (the vertices of the Birkhoff polytope).
pub fn nonstationarity_error(inst: &QapInstance, x: &Matrix) -> Result<f64> {
    let grad = qap_gradient(inst, x)?;
    let (_, min) = solve_lap_min(&grad)?;
    let numerator = (grad.inner(x)? - min).abs();
    Ok(numerator / qap_objective(inst, x)?.max(1.0))
}

/// Frobenius-nearest permutation: the maximizer of `<X, P>`.
pub fn round_to_permutation(x: &Matrix) -> Result<Permutation> {
    Ok(solve_lap_max(x)?.0)
}

/// `(rounded - best) / max(best, 1)`.
pub fn assignment_error(rounded_value: f64, best_known: f64) -> f64 {
    (rounded_value - best_known) / best_known.max(1.0)
}

/// Default start for both splits: Gaussian entries followed by
/// [`INIT_ROUNDS`] rounds of alternating projections.
pub fn initial_point(n: usize, seed: u64) -> Result<Matrix> {
    gaussian_birkhoff_start(n, seed, INIT_ROUNDS)
}

#[derive(Debug, Clone)]
pub struct QapResult {
    pub relaxed_iterate: Matrix,
    pub permutation: Permutation,
    pub relaxed_value: f64,
    pub rounded_value: f64,
    pub infeasibility: f64,
    pub nonstationarity: f64,
    /// `None` when no best-known value is available.
    pub assignment_error: Option<f64>,
    pub iterations: usize,
    pub step_size: f64,
    pub tau: Option<usize>,
    pub trace: Vec<TraceRecord>,
    pub wall_time: f64,
}

/// Rounds `relaxed` and assembles the final metrics.
pub fn summarize(
    inst: &QapInstance,
    relaxed: Matrix,
    infeasibility: f64,
    run: RunInfo,
) -> Result<QapResult> {
    let permutation = round_to_permutation(&relaxed)?;
    let rounded_value = qap_objective(inst, &permutation_to_matrix(&permutation))?;
    Ok(QapResult {
        relaxed_value: qap_objective(inst, &relaxed)?,
        nonstationarity: nonstationarity_error(inst, &relaxed)?,
        assignment_error: inst.best_known.map(|b| assignment_error(rounded_value, b)),
        relaxed_iterate: relaxed,
        permutation,
        rounded_value,
        infeasibility,
        iterations: run.iterations,
        step_size: run.step_size,
        tau: run.tau,
        trace: run.trace,
        wall_time: run.wall_time,
    })
}

/// Solver bookkeeping carried into a [`QapResult`].
#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    pub iterations: usize,
    pub step_size: f64,
    pub tau: Option<usize>,
    pub trace: Vec<TraceRecord>,
    pub wall_time: f64,
}

/// Fills the QAP metrics at trace points and stops once both fall below
/// the tolerance.
pub struct QapMonitor<'a> {
    pub inst: &'a QapInstance,
    pub split: SplitChoice,
    pub tolerance: Option<f64>,
    pub error: Option<Error>,
}

impl Observer for QapMonitor<'_> {
    fn on_trace(&mut self, view: &IterationView<'_>, record: &mut TraceRecord) -> ControlFlow<()> {
        let metrics = infeasibility_error(view.z, self.split)
            .and_then(|i| Ok((i, nonstationarity_error(self.inst, view.z)?)));
        match metrics {
            Ok((infeas, nonstat)) => {
                record.infeasibility = Some(infeas);
                record.nonstationarity = Some(nonstat);
                match self.tolerance {
                    Some(tol) if infeas < tol && nonstat < tol => ControlFlow::Break(()),
                    _ => ControlFlow::Continue(()),
                }
            }
            Err(e) => {
                self.error = Some(e);
                ControlFlow::Break(())
            }
        }
    }
}

/// Relax-and-round from the default start [`initial_point`] of `config.seed`.
pub fn relax_and_round(
    inst: &QapInstance,
    split: SplitChoice,
    config: &SolverConfig,
    tolerance: Option<f64>,
) -> Result<QapResult> {
    let y1 = initial_point(inst.n(), config.seed)?;
    relax_and_round_from(inst, split, config, tolerance, &y1)
}

/// Runs three operator splitting on the split's indicators with `f` the QAP
/// objective, stopping at trace points once both errors are below
/// `tolerance`, then rounds the returned iterate.
pub fn relax_and_round_from(
    inst: &QapInstance,
    split: SplitChoice,
    config: &SolverConfig,
    tolerance: Option<f64>,
    y1: &Matrix,
) -> Result<QapResult> {
    let n = inst.n();
    let (g_set, h_set) = split.sets();
    let (g, h) = (Indicator(g_set), Indicator(h_set));
    let mut problem = CompositeProblem::new(inst, &g, &h, (n, n));
    if matches!(
        config.step,
        StepPolicy::Lipschitz | StepPolicy::IndicatorLipschitz | StepPolicy::TwoIndicators
    ) {
        problem = problem.with_constants(problem_constants(inst, split)?);
    }
    let mut monitor = QapMonitor {
        inst,
        split,
        tolerance,
        error: None,
    };
    let run = run_tos_observed(&problem, config, y1, &mut monitor)?;
    if let Some(e) = monitor.error {
        return Err(e);
    }
    let infeasibility = infeasibility_error(&run.output, split)?;
    summarize(
        inst,
        run.output,
        infeasibility,
        RunInfo {
            iterations: run.iterations,
            step_size: run.step_size,
            tau: run.tau,
            trace: run.trace,
            wall_time: run.wall_time,
        },
    )
}
