//! Proximal operators and Euclidean projections.
//!
//! The projections cover both splittings of the Birkhoff polytope:
//! row-/column-stochastic matrices, and the `[0, 1]` box paired with the
//! affine set `{X : X 1 = 1, X^T 1 = 1}`.

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

/// Slack used when evaluating indicator functions on computed points.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Closed convex sets with a cheap projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexSet {
    /// Entrywise `lo <= x_ij <= hi`.
    Box { lo: f64, hi: f64 },
    /// Nonnegative matrices whose rows sum to one.
    RowStochastic,
    /// Nonnegative matrices whose columns sum to one.
    ColumnStochastic,
    /// Square matrices with unit row and column sums (entries unrestricted).
    AffineDoublyStochastic,
}

impl ConvexSet {
    pub const UNIT_BOX: ConvexSet = ConvexSet::Box { lo: 0.0, hi: 1.0 };

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        match *self {
            ConvexSet::Box { lo, hi } => Ok(x.map(|v| v.clamp(lo, hi))),
            ConvexSet::RowStochastic => project_row_stochastic(x),
            ConvexSet::ColumnStochastic => project_col_stochastic(x),
            ConvexSet::AffineDoublyStochastic => project_affine_doubly_stochastic(x),
        }
    }

    pub fn contains(&self, x: &Matrix, tol: f64) -> bool {
        let unit_sums = |sums: Vec<f64>| sums.iter().all(|s| (s - 1.0).abs() <= tol);
        let nonneg = || x.as_slice().iter().all(|&v| v >= -tol);
        match *self {
            ConvexSet::Box { lo, hi } => x.as_slice().iter().all(|&v| v >= lo - tol && v <= hi + tol),
            ConvexSet::RowStochastic => nonneg() && unit_sums(x.row_sums()),
            ConvexSet::ColumnStochastic => nonneg() && unit_sums(x.col_sums()),
            ConvexSet::AffineDoublyStochastic => {
                x.is_square() && unit_sums(x.row_sums()) && unit_sums(x.col_sums())
            }
        }
    }

    /// Euclidean diameter of the set restricted to `rows x cols` matrices.
    /// `None` for unbounded sets.
    pub fn diameter(&self, rows: usize, cols: usize) -> Option<f64> {
        match *self {
            ConvexSet::Box { lo, hi } => Some((hi - lo) * ((rows * cols) as f64).sqrt()),
            // each row (column) ranges over a simplex of diameter sqrt(2)
            ConvexSet::RowStochastic if cols > 1 => Some((2.0 * rows as f64).sqrt()),
            ConvexSet::ColumnStochastic if rows > 1 => Some((2.0 * cols as f64).sqrt()),
            ConvexSet::RowStochastic | ConvexSet::ColumnStochastic => Some(0.0),
            ConvexSet::AffineDoublyStochastic => None,
        }
    }
}

/// What a [`ProxOperator`] is the prox of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxDescriptor {
    Indicator(ConvexSet),
    L1Norm { weight: f64 },
    FrobeniusNorm { weight: f64 },
    Zero,
}

/// `prox_{scale * g}(point) = argmin_y g(y) + ||y - point||^2 / (2 scale)`
/// together with the value of `g` itself.
pub trait ProxOperator: Send + Sync {
    fn prox(&self, point: &Matrix, scale: f64) -> Result<Matrix>;

    /// `g(point)`; `+inf` outside the domain.
    fn value(&self, point: &Matrix) -> f64;

    fn descriptor(&self) -> ProxDescriptor;
}

/// Indicator of a [`ConvexSet`]. The scale is ignored: the prox of an
/// indicator is the projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indicator(pub ConvexSet);

impl ProxOperator for Indicator {
    fn prox(&self, point: &Matrix, _scale: f64) -> Result<Matrix> {
        self.0.project(point)
    }

    fn value(&self, point: &Matrix) -> f64 {
        if self.0.contains(point, MEMBERSHIP_TOL) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn descriptor(&self) -> ProxDescriptor {
        ProxDescriptor::Indicator(self.0)
    }
}

/// `weight * sum |x_ij|`, prox by soft thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    pub weight: f64,
}

impl ProxOperator for L1Norm {
    fn prox(&self, point: &Matrix, scale: f64) -> Result<Matrix> {
        let t = self.weight * scale;
        Ok(point.map(|v| v.signum() * (v.abs() - t).max(0.0)))
    }

    fn value(&self, point: &Matrix) -> f64 {
        self.weight * point.as_slice().iter().map(|v| v.abs()).sum::<f64>()
    }

    fn descriptor(&self) -> ProxDescriptor {
        ProxDescriptor::L1Norm {
            weight: self.weight,
        }
    }
}

/// `weight * ||x||_F`, prox by block soft thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrobeniusNorm {
    pub weight: f64,
}

impl ProxOperator for FrobeniusNorm {
    fn prox(&self, point: &Matrix, scale: f64) -> Result<Matrix> {
        let norm = point.norm();
        let t = self.weight * scale;
        if norm <= t {
            return Ok(Matrix::zeros(point.rows(), point.cols()));
        }
        Ok(point.scaled(1.0 - t / norm))
    }

    fn value(&self, point: &Matrix) -> f64 {
        self.weight * point.norm()
    }

    fn descriptor(&self) -> ProxDescriptor {
        ProxDescriptor::FrobeniusNorm {
            weight: self.weight,
        }
    }
}

/// The zero function; its prox is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Zero;

impl ProxOperator for Zero {
    fn prox(&self, point: &Matrix, _scale: f64) -> Result<Matrix> {
        Ok(point.clone())
    }

    fn value(&self, _point: &Matrix) -> f64 {
        0.0
    }

    fn descriptor(&self) -> ProxDescriptor {
        ProxDescriptor::Zero
    }
}

/// Euclidean projection onto the unit simplex `{w >= 0, sum w = 1}`.
///
/// Sort-and-threshold: with `u` sorted in decreasing order the threshold is
/// `(sum_{k<=r} u_k - 1) / r` for the largest `r` with a positive residual.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(invalid("project_simplex: empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("project_simplex: non-finite entry"));
    }
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    simplex_into(v, &mut out, &mut scratch);
    Ok(out)
}

fn simplex_into(v: &[f64], out: &mut [f64], sorted: &mut Vec<f64>) {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
}

/// Entrywise clamp to `[0, 1]`.
pub fn project_box01(x: &Matrix) -> Matrix {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Projects every row onto the unit simplex.
pub fn project_row_stochastic(x: &Matrix) -> Result<Matrix> {
    if !x.is_finite() {
        return Err(invalid("project_row_stochastic: non-finite entry"));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut scratch = Vec::with_capacity(x.cols());
    for i in 0..x.rows() {
        simplex_into(x.row(i), out.row_mut(i), &mut scratch);
    }
    Ok(out)
}

/// Projects every column onto the unit simplex.
pub fn project_col_stochastic(x: &Matrix) -> Result<Matrix> {
    Ok(project_row_stochastic(&x.transpose())?.transpose())
}

/// Projection onto `{Y : Y 1 = 1, Y^T 1 = 1}`:
///
/// `Y = X + (I/n + (1^T X 1 / n^2) I - X/n) 1 1^T - (1/n) 1 1^T X`,
///
/// i.e. `Y_ij = X_ij - r_i/n - c_j/n + s/n^2 + 1/n` with row sums `r`,
/// column sums `c` and total `s`.
pub fn project_affine_doubly_stochastic(x: &Matrix) -> Result<Matrix> {
    let n = x.ensure_square("project_affine_doubly_stochastic")?;
    let nf = n as f64;
    let r = x.row_sums();
    let c = x.col_sums();
    let s: f64 = r.iter().sum();
    let shift = s / (nf * nf) + 1.0 / nf;
    Ok(Matrix::from_fn(n, n, |i, j| {
        x[(i, j)] - r[i] / nf - c[j] / nf + shift
    }))
}

/// Alternating projections between the column- and row-stochastic sets,
/// `iters` rounds of (columns, then rows). The result is exactly
/// row-stochastic and approximately column-stochastic.
pub fn project_birkhoff_alternating(x: &Matrix, iters: usize) -> Result<Matrix> {
    x.ensure_square("project_birkhoff_alternating")?;
    if iters == 0 {
        return Err(invalid("project_birkhoff_alternating: iters must be at least 1"));
    }
    let mut y = x.clone();
    for _ in 0..iters {
        y = project_col_stochastic(&y)?;
        y = project_row_stochastic(&y)?;
    }
    Ok(y)
}
