//! Three operator splitting for `min f(x) + g(x) + h(x)` with `f` smooth
//! (possibly nonconvex) and `g`, `h` convex with cheap proximal operators.
//!
//! One iteration with step `gamma`:
//!
//! ```text
//! z_t     = prox_{gamma g}(y_t)
//! x_t     = prox_{gamma h}(2 z_t - y_t - gamma u_t)      u_t ~ grad f(z_t)
//! y_{t+1} = y_t - z_t + x_t
//! ```
//!
//! The run returns either the last `z_T` or `z_tau` for `tau` uniform over
//! the executed iterations.

use std::ops::ControlFlow;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::oracles::{minibatch_gradient, GradientOracle, StochasticGradientOracle};
use crate::prox::{project_birkhoff_alternating, ProxOperator};
use crate::rng::RngState;

const TAU_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

/// Problem constants used by the theory step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Diameter of `dom g`.
    pub diameter: f64,
    /// Bound on `||grad f||` over `dom g`.
    pub gradient_bound: f64,
    pub lipschitz_g: f64,
    pub lipschitz_h: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.diameter,
            self.gradient_bound,
            self.lipschitz_g,
            self.lipschitz_h,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("problem constants must be finite and nonnegative"));
        }
        if self.diameter <= 0.0 {
            return Err(invalid("domain diameter must be positive"));
        }
        Ok(())
    }
}

/// The smooth term, with either exact gradients or minibatch estimates.
#[derive(Clone, Copy)]
pub enum SmoothTerm<'a> {
    Exact(&'a dyn GradientOracle),
    Stochastic {
        oracle: &'a dyn StochasticGradientOracle,
        batch: usize,
        /// Optional exact objective, used only for trace values.
        objective: Option<&'a dyn GradientOracle>,
    },
}

impl SmoothTerm<'_> {
    fn objective(&self) -> Option<&dyn GradientOracle> {
        match *self {
            SmoothTerm::Exact(f) => Some(f),
            SmoothTerm::Stochastic { objective, .. } => objective,
        }
    }
}

pub struct CompositeProblem<'a> {
    pub smooth: SmoothTerm<'a>,
    pub prox_g: &'a dyn ProxOperator,
    pub prox_h: &'a dyn ProxOperator,
    pub constants: Option<ProblemConstants>,
    pub shape: (usize, usize),
}

impl<'a> CompositeProblem<'a> {
    pub fn new(
        f: &'a dyn GradientOracle,
        prox_g: &'a dyn ProxOperator,
        prox_h: &'a dyn ProxOperator,
        shape: (usize, usize),
    ) -> Self {
        Self {
            smooth: SmoothTerm::Exact(f),
            prox_g,
            prox_h,
            constants: None,
            shape,
        }
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn with_smooth(mut self, smooth: SmoothTerm<'a>) -> Self {
        self.smooth = smooth;
        self
    }
}

/// `D_g / (2 (G_f + L_g + L_h) T^{2/3})`: fixed step for Lipschitz `g` and `h`.
pub fn step_size_lipschitz(
    diameter: f64,
    gradient_bound: f64,
    lipschitz_g: f64,
    lipschitz_h: f64,
    iterations: usize,
) -> Result<f64> {
    let constants = ProblemConstants {
        diameter,
        gradient_bound,
        lipschitz_g,
        lipschitz_h,
    };
    constants.validate()?;
    if iterations == 0 {
        return Err(invalid("step size: iterations must be at least 1"));
    }
    let sum = gradient_bound + lipschitz_g + lipschitz_h;
    if sum <= 0.0 {
        return Err(invalid("step size: G_f + L_g + L_h must be positive"));
    }
    Ok(diameter / (2.0 * sum * (iterations as f64).powf(2.0 / 3.0)))
}

/// `D_G / (2 (G_f + L_h) T^{2/3})`: `g` an indicator, `h` Lipschitz.
pub fn step_size_indicator_lipschitz(
    diameter: f64,
    gradient_bound: f64,
    lipschitz_h: f64,
    iterations: usize,
) -> Result<f64> {
    step_size_lipschitz(diameter, gradient_bound, 0.0, lipschitz_h, iterations)
}

/// `D_G / (2 G_f T^{2/3})`: both `g` and `h` indicators.
pub fn step_size_two_indicators(diameter: f64, gradient_bound: f64, iterations: usize) -> Result<f64> {
    if !(gradient_bound > 0.0) {
        return Err(invalid("step size: G_f must be positive"));
    }
    step_size_lipschitz(diameter, gradient_bound, 0.0, 0.0, iterations)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// [`step_size_lipschitz`] from the problem constants.
    Lipschitz,
    /// [`step_size_indicator_lipschitz`] from the problem constants.
    IndicatorLipschitz,
    /// [`step_size_two_indicators`] from the problem constants.
    TwoIndicators,
    Fixed(f64),
    /// `1 / L_f` for an `L_f`-smooth `f`.
    InverseSmoothness(f64),
}

impl StepPolicy {
    pub fn resolve(&self, constants: Option<&ProblemConstants>, iterations: usize) -> Result<f64> {
        let need = || constants.ok_or_else(|| invalid("theory step size needs problem constants"));
        match *self {
            StepPolicy::Lipschitz => {
                let c = need()?;
                step_size_lipschitz(
                    c.diameter,
                    c.gradient_bound,
                    c.lipschitz_g,
                    c.lipschitz_h,
                    iterations,
                )
            }
            StepPolicy::IndicatorLipschitz => {
                let c = need()?;
                step_size_indicator_lipschitz(c.diameter, c.gradient_bound, c.lipschitz_h, iterations)
            }
            StepPolicy::TwoIndicators => {
                let c = need()?;
                step_size_two_indicators(c.diameter, c.gradient_bound, iterations)
            }
            StepPolicy::Fixed(gamma) if gamma > 0.0 && gamma.is_finite() => Ok(gamma),
            StepPolicy::Fixed(_) => Err(invalid("fixed step size must be positive")),
            StepPolicy::InverseSmoothness(l) if l > 0.0 && l.is_finite() => Ok(1.0 / l),
            StepPolicy::InverseSmoothness(_) => Err(invalid("smoothness constant must be positive")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputPolicy {
    /// `z_tau` with `tau` uniform over the executed iterations.
    RandomIterate,
    #[default]
    LastIterate,
}

/// Iterations at which a [`TraceRecord`] is written.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TraceSchedule {
    /// `t = 1, 2, 4, 8, ...` and the final iteration.
    #[default]
    PowersOfTwo,
    /// Every `k`-th iteration and the final one.
    Every(usize),
    /// Exactly these iterations.
    At(Vec<usize>),
    Never,
}

impl TraceSchedule {
    pub fn contains(&self, t: usize, is_final: bool) -> bool {
        match self {
            TraceSchedule::PowersOfTwo => t.is_power_of_two() || is_final,
            TraceSchedule::Every(k) => (*k > 0 && t.is_multiple_of(*k)) || is_final,
            TraceSchedule::At(ts) => ts.contains(&t),
            TraceSchedule::Never => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub step: StepPolicy,
    pub output: OutputPolicy,
    pub seed: u64,
    pub trace: TraceSchedule,
    /// Reference point in `dom phi` for the per-iteration certificate.
    pub certificate_reference: Option<Matrix>,
}

impl SolverConfig {
    pub fn new(iterations: usize, step: StepPolicy) -> Self {
        Self {
            iterations,
            step,
            output: OutputPolicy::default(),
            seed: 0,
            trace: TraceSchedule::default(),
            certificate_reference: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_output(mut self, output: OutputPolicy) -> Self {
        self.output = output;
        self
    }

    pub fn with_trace(mut self, trace: TraceSchedule) -> Self {
        self.trace = trace;
        self
    }

    pub fn with_certificate_reference(mut self, reference: Matrix) -> Self {
        self.certificate_reference = Some(reference);
        self
    }
}

/// One logged iteration. The infeasibility and nonstationarity slots are
/// filled by application observers (see [`Observer::on_trace`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: Option<f64>,
    /// `||x_t - z_t||` (product space: `max_i ||z_t^(i) - x_t||`).
    pub coupling_norm: f64,
    pub certificate: Option<f64>,
    pub infeasibility: Option<f64>,
    pub nonstationarity: Option<f64>,
    pub elapsed_seconds: f64,
}

impl TraceRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_values(&self, other: &TraceRecord) -> bool {
        let bits = |v: Option<f64>| v.map(f64::to_bits);
        self.t == other.t
            && bits(self.objective) == bits(other.objective)
            && self.coupling_norm.to_bits() == other.coupling_norm.to_bits()
            && bits(self.certificate) == bits(other.certificate)
            && bits(self.infeasibility) == bits(other.infeasibility)
            && bits(self.nonstationarity) == bits(other.nonstationarity)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// `z_tau` or `z_T` (product space: the consensus iterate).
    pub output: Matrix,
    pub tau: Option<usize>,
    /// Iterations actually executed.
    pub iterations: usize,
    pub step_size: f64,
    pub last_z: Matrix,
    pub last_x: Matrix,
    pub last_y: Matrix,
    pub trace: Vec<TraceRecord>,
    pub wall_time: f64,
}

impl RunResult {
    /// Bitwise equality of iterates and trace, ignoring timings.
    pub fn same_outcome(&self, other: &RunResult) -> bool {
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        self.tau == other.tau
            && self.iterations == other.iterations
            && bits(&self.output) == bits(&other.output)
            && bits(&self.last_y) == bits(&other.last_y)
            && self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(&other.trace)
                .all(|(a, b)| a.same_values(b))
    }
}

/// The quantities of one iteration, handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct IterationView<'a> {
    pub t: usize,
    pub gamma: f64,
    pub y: &'a Matrix,
    pub z: &'a Matrix,
    /// Gradient (or estimate) used at `z`.
    pub u: &'a Matrix,
    pub x: &'a Matrix,
    pub y_next: &'a Matrix,
}

/// Hooks into a running solver.
pub trait Observer {
    /// Called after every iteration.
    fn on_iteration(&mut self, _view: &IterationView<'_>) {}

    /// Called at trace points; may fill metric slots and request a stop.
    fn on_trace(&mut self, _view: &IterationView<'_>, _record: &mut TraceRecord) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl Observer for () {}

/// Values of `g` and `h` needed by [`certificate_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateValues {
    pub g_z: f64,
    pub g_ref: f64,
    pub h_x: f64,
    pub h_ref: f64,
}

/// LHS minus RHS of the per-iteration descent inequality
///
/// ```text
/// <u_t, x_t - x> + g(z_t) - g(x) + h(x_t) - h(x)
///     <= (||y_t - x||^2 - ||y_{t+1} - x||^2 - ||x_t - z_t||^2) / (2 gamma)
/// ```
///
/// which holds for every `x` in `dom phi` when `g` and `h` are convex, so
/// the residual is nonpositive up to round-off. The difference of squares
/// is evaluated as `<y_t - y_{t+1}, y_t + y_{t+1} - 2x>`.
pub fn certificate_residual(view: &IterationView<'_>, x_ref: &Matrix, values: CertificateValues) -> Result<f64> {
    let shape = view.z.shape();
    for m in [view.u, view.x, view.y, view.y_next, x_ref] {
        m.ensure_shape("certificate_residual", shape)?;
    }
    let n = view.z.as_slice().len();
    let (u, x, z) = (view.u.as_slice(), view.x.as_slice(), view.z.as_slice());
    let (y, y1, r) = (view.y.as_slice(), view.y_next.as_slice(), x_ref.as_slice());
    let mut linear = 0.0;
    let mut telescoped = 0.0;
    let mut coupling = 0.0;
    for k in 0..n {
        linear += u[k] * (x[k] - r[k]);
        telescoped += (y[k] - y1[k]) * (y[k] + y1[k] - 2.0 * r[k]);
        coupling += (x[k] - z[k]) * (x[k] - z[k]);
    }
    let lhs = linear + values.g_z - values.g_ref + values.h_x - values.h_ref;
    let rhs = (telescoped - coupling) / (2.0 * view.gamma);
    Ok(lhs - rhs)
}

/// `max_x <grad, z - x> + p(z) - p(x)` where `lmo(grad)` returns the
/// minimizer over the feasible set of `<grad, x> + p(x)`. Without a penalty
/// this is the Frank-Wolfe gap `<grad, z> - min_x <grad, x>`.
pub fn stationarity_gap(
    grad: &Matrix,
    z: &Matrix,
    lmo: &dyn Fn(&Matrix) -> Result<Matrix>,
    penalty: Option<&dyn Fn(&Matrix) -> f64>,
) -> Result<f64> {
    let s = lmo(grad)?;
    s.ensure_shape("stationarity_gap", z.shape())?;
    let mut gap = grad.inner(z)? - grad.inner(&s)?;
    if let Some(p) = penalty {
        gap += p(z) - p(&s);
    }
    Ok(gap)
}

/// Gaussian matrix with i.i.d. standard entries drawn from `seed`, pushed
/// toward the Birkhoff polytope by `rounds` of alternating projections.
pub fn gaussian_birkhoff_start(n: usize, seed: u64, rounds: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(invalid("initial point: dimension must be positive"));
    }
    let mut rng = RngState::with_stream(seed, INIT_STREAM);
    let g = rng.gaussian_matrix(n, n);
    project_birkhoff_alternating(&g, rounds)
}

fn ensure_finite(m: &Matrix, iteration: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

/// Runs three operator splitting from `y1`.
pub fn run_tos(problem: &CompositeProblem<'_>, config: &SolverConfig, y1: &Matrix) -> Result<RunResult> {
    run_tos_observed(problem, config, y1, &mut ())
}

pub fn run_tos_observed(
    problem: &CompositeProblem<'_>,
    config: &SolverConfig,
    y1: &Matrix,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    let start = Instant::now();
    let iterations = config.iterations;
    if iterations == 0 {
        return Err(invalid("iterations must be at least 1"));
    }
    if let Some(c) = &problem.constants {
        c.validate()?;
    }
    let shape = problem.shape;
    y1.ensure_shape("run_tos: initial point", shape)?;
    if let Some(r) = &config.certificate_reference {
        r.ensure_shape("run_tos: certificate reference", shape)?;
    }
    let gamma = config.step.resolve(problem.constants.as_ref(), iterations)?;
    let random_output = config.output == OutputPolicy::RandomIterate;

    let mut tau_rng = RngState::with_stream(config.seed, TAU_STREAM);
    let mut sample_rng = RngState::with_stream(config.seed, SAMPLE_STREAM);
    let reference_values = config
        .certificate_reference
        .as_ref()
        .map(|r| (problem.prox_g.value(r), problem.prox_h.value(r)));

    let mut y = y1.clone();
    let mut kept: Option<(usize, Matrix)> = None;
    let mut trace = Vec::new();
    let mut last = None;

    for t in 1..=iterations {
        let z = problem.prox_g.prox(&y, gamma)?;
        z.ensure_shape("run_tos: prox_g output", shape)?;
        ensure_finite(&z, t)?;

        let u = match problem.smooth {
            SmoothTerm::Exact(f) => f.gradient(&z),
            SmoothTerm::Stochastic { oracle, batch, .. } => {
                minibatch_gradient(oracle, &z, batch, &mut sample_rng)?
            }
        };
        u.ensure_shape("run_tos: gradient", shape)?;

        let mut reflected = Matrix::zeros(shape.0, shape.1);
        for (((r, &zk), &yk), &uk) in reflected
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(y.as_slice())
            .zip(u.as_slice())
        {
            *r = 2.0 * zk - yk - gamma * uk;
        }
        let x = problem.prox_h.prox(&reflected, gamma)?;
        x.ensure_shape("run_tos: prox_h output", shape)?;
        ensure_finite(&x, t)?;

        let y_next = &(&y - &z) + &x;
        ensure_finite(&y_next, t)?;

        let view = IterationView {
            t,
            gamma,
            y: &y,
            z: &z,
            u: &u,
            x: &x,
            y_next: &y_next,
        };
        observer.on_iteration(&view);

        // size-one reservoir: after t steps every index is kept with prob 1/t
        if random_output && tau_rng.draw_uniform_index(t)? == 1 {
            kept = Some((t, z.clone()));
        }

        let mut stop = false;
        if config.trace.contains(t, t == iterations) {
            let certificate = match (&config.certificate_reference, reference_values) {
                (Some(r), Some((g_ref, h_ref))) => Some(certificate_residual(
                    &view,
                    r,
                    CertificateValues {
                        g_z: problem.prox_g.value(&z),
                        g_ref,
                        h_x: problem.prox_h.value(&x),
                        h_ref,
                    },
                )?),
                _ => None,
            };
            let mut record = TraceRecord {
                t,
                objective: problem.smooth.objective().map(|f| f.value(&z)),
                coupling_norm: (&x - &z).norm(),
                certificate,
                infeasibility: None,
                nonstationarity: None,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            };
            stop = observer.on_trace(&view, &mut record).is_break();
            trace.push(record);
        }

        if stop || t == iterations {
            last = Some((t, z, x, y_next));
            break;
        }
        y = y_next;
    }

    let (executed, last_z, last_x, last_y) = last.expect("at least one iteration runs");
    let (tau, output) = match kept {
        Some((tau, z)) => (Some(tau), z),
        None => (None, last_z.clone()),
    };
    Ok(RunResult {
        output,
        tau,
        iterations: executed,
        step_size: gamma,
        last_z,
        last_x,
        last_y,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Three operator splitting on the product-space reformulation of
/// `min f(x) + sum_i g_i(x)`.
///
/// Block 0 carries `f` (its prox is the identity); block `i >= 1` carries
/// `g_i`. Each iteration computes `z^(i) = prox_{gamma g_i}(y^(i))`, the
/// consensus point
/// `x = (sum_i (2 z^(i) - y^(i)) - gamma grad f(z^(0))) / (m + 1)`, and
/// `y^(i) <- y^(i) - z^(i) + x`.
///
/// `y1` holds either one matrix shared by all blocks or one per block
/// (`m + 1` matrices, block 0 first). The output is the consensus iterate.
pub fn run_tos_product_space(
    f: &dyn GradientOracle,
    g_list: &[&dyn ProxOperator],
    config: &SolverConfig,
    y1: &[Matrix],
) -> Result<RunResult> {
    let start = Instant::now();
    if g_list.is_empty() {
        return Err(invalid("product space: at least one prox operator required"));
    }
    let iterations = config.iterations;
    if iterations == 0 {
        return Err(invalid("iterations must be at least 1"));
    }
    let blocks = g_list.len() + 1;
    let mut ys: Vec<Matrix> = match y1.len() {
        1 => vec![y1[0].clone(); blocks],
        k if k == blocks => y1.to_vec(),
        k => {
            return Err(invalid(format!(
                "product space: expected 1 or {blocks} initial blocks, got {k}"
            )))
        }
    };
    let shape = ys[0].shape();
    for y in &ys {
        y.ensure_shape("run_tos_product_space: initial point", shape)?;
    }
    let gamma = config.step.resolve(None, iterations)?;
    let random_output = config.output == OutputPolicy::RandomIterate;
    let mut tau_rng = RngState::with_stream(config.seed, TAU_STREAM);
    let scale = 1.0 / blocks as f64;

    let mut kept: Option<(usize, Matrix)> = None;
    let mut trace = Vec::new();
    let mut last = None;

    for t in 1..=iterations {
        let mut zs = Vec::with_capacity(blocks);
        zs.push(ys[0].clone());
        for (g, y) in g_list.iter().zip(&ys[1..]) {
            let z = g.prox(y, gamma)?;
            z.ensure_shape("run_tos_product_space: prox output", shape)?;
            ensure_finite(&z, t)?;
            zs.push(z);
        }
        let grad = f.gradient(&zs[0]);
        grad.ensure_shape("run_tos_product_space: gradient", shape)?;

        let mut x = grad.scaled(-gamma);
        for (z, y) in zs.iter().zip(&ys) {
            for ((xk, &zk), &yk) in x.as_mut_slice().iter_mut().zip(z.as_slice()).zip(y.as_slice()) {
                *xk += 2.0 * zk - yk;
            }
        }
        let x = x.scaled(scale);
        ensure_finite(&x, t)?;

        if random_output && tau_rng.draw_uniform_index(t)? == 1 {
            kept = Some((t, x.clone()));
        }
        if config.trace.contains(t, t == iterations) {
            let residual = zs.iter().map(|z| (z - &x).norm()).fold(0.0, f64::max);
            trace.push(TraceRecord {
                t,
                objective: Some(f.value(&x)),
                coupling_norm: residual,
                certificate: None,
                infeasibility: None,
                nonstationarity: None,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        }

        for (y, z) in ys.iter_mut().zip(&zs) {
            *y = &(&*y - z) + &x;
        }
        if t == iterations {
            last = Some((zs.swap_remove(0), x));
        }
    }

    let (last_z, last_x) = last.expect("at least one iteration runs");
    let (tau, output) = match kept {
        Some((tau, x)) => (Some(tau), x),
        None => (None, last_x.clone()),
    };
    Ok(RunResult {
        output,
        tau,
        iterations,
        step_size: gamma,
        last_z,
        last_x,
        last_y: ys.swap_remove(0),
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
