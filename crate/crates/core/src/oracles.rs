//! First-order oracles for the smooth term, exact and stochastic.

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// Value and gradient of a differentiable (possibly nonconvex) function.
pub trait GradientOracle: Send + Sync {
    fn value(&self, x: &Matrix) -> f64;
    fn gradient(&self, x: &Matrix) -> Matrix;
}

/// Unbiased stochastic gradient `grad f~(x, xi)` with
/// `E ||grad f~(x, xi) - grad f(x)||^2 <= sigma^2`.
pub trait StochasticGradientOracle: Send + Sync {
    fn sample(&self, x: &Matrix, rng: &mut RngState) -> Matrix;

    /// The declared variance bound `sigma^2`.
    fn variance_bound(&self) -> f64;
}

/// Mean of `batch` independent samples at `x`.
///
/// The mean is accumulated incrementally, `m_k = m_{k-1} + (s_k - m_{k-1}) / k`,
/// so a batch of identical samples returns that sample bit for bit.
pub fn minibatch_gradient(
    oracle: &dyn StochasticGradientOracle,
    x: &Matrix,
    batch: usize,
    rng: &mut RngState,
) -> Result<Matrix> {
    if batch == 0 {
        return Err(invalid("minibatch_gradient: batch must be at least 1"));
    }
    let mut mean = oracle.sample(x, rng);
    for k in 2..=batch {
        let s = oracle.sample(x, rng);
        let w = 1.0 / k as f64;
        for (m, v) in mean.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *m += (v - *m) * w;
        }
    }
    Ok(mean)
}

fn ceil_batch(t: usize, denom: f64) -> usize {
    let b = ((t as f64).powf(2.0 / 3.0) / denom).ceil();
    (b as usize).max(1)
}

/// Batch size `ceil(T^{2/3} / (2 (G_f + L_g + L_h)^2))` for the
/// Lipschitz-regularized stochastic setting.
pub fn batch_schedule_lipschitz(
    iterations: usize,
    gradient_bound: f64,
    lipschitz_g: f64,
    lipschitz_h: f64,
) -> Result<usize> {
    if iterations == 0 {
        return Err(invalid("batch schedule: iterations must be at least 1"));
    }
    if !(gradient_bound > 0.0 && lipschitz_g >= 0.0 && lipschitz_h >= 0.0) {
        return Err(invalid(
            "batch schedule: constants must be positive (G_f) and nonnegative (L_g, L_h)",
        ));
    }
    let sum = gradient_bound + lipschitz_g + lipschitz_h;
    Ok(ceil_batch(iterations, 2.0 * sum * sum))
}

/// Batch size `ceil(T^{2/3} / (2 G_f^2))` for the two-indicator setting.
pub fn batch_schedule_indicator(iterations: usize, gradient_bound: f64) -> Result<usize> {
    if iterations == 0 {
        return Err(invalid("batch schedule: iterations must be at least 1"));
    }
    if !(gradient_bound > 0.0) {
        return Err(invalid("batch schedule: G_f must be positive"));
    }
    Ok(ceil_batch(
        iterations,
        2.0 * gradient_bound * gradient_bound,
    ))
}

/// Exact gradient plus isotropic Gaussian noise with `E ||noise||^2 = sigma^2`
/// (per-entry standard deviation `sigma / sqrt(rows * cols)`).
pub struct GaussianNoiseOracle<O> {
    pub inner: O,
    pub sigma: f64,
}

impl<O: GradientOracle> GaussianNoiseOracle<O> {
    pub fn new(inner: O, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("GaussianNoiseOracle: sigma must be finite and nonnegative"));
        }
        Ok(Self { inner, sigma })
    }
}

impl<O: GradientOracle> StochasticGradientOracle for GaussianNoiseOracle<O> {
    fn sample(&self, x: &Matrix, rng: &mut RngState) -> Matrix {
        let mut g = self.inner.gradient(x);
        if self.sigma == 0.0 {
            return g;
        }
        let sd = self.sigma / ((g.rows() * g.cols()) as f64).sqrt();
        for v in g.as_mut_slice() {
            *v += sd * rng.standard_normal();
        }
        g
    }

    fn variance_bound(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// `f(x) = 0.5 ||x - center||^2`.
#[derive(Debug, Clone)]
pub struct SquaredDistance {
    pub center: Matrix,
}

impl GradientOracle for SquaredDistance {
    fn value(&self, x: &Matrix) -> f64 {
        0.5 * (x - &self.center).norm().powi(2)
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        x - &self.center
    }
}

/// `f(x) = <c, x>`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub coefficients: Matrix,
}

impl GradientOracle for Linear {
    fn value(&self, x: &Matrix) -> f64 {
        self.coefficients.inner(x).expect("Linear: shape mismatch")
    }

    fn gradient(&self, _x: &Matrix) -> Matrix {
        self.coefficients.clone()
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy)]
pub struct ZeroFunction {
    pub shape: (usize, usize),
}

impl GradientOracle for ZeroFunction {
    fn value(&self, _x: &Matrix) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &Matrix) -> Matrix {
        Matrix::zeros(self.shape.0, self.shape.1)
    }
}
