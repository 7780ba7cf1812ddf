//! Linear assignment by the Hungarian method (shortest augmenting paths
//! with dual potentials), `O(n^3)`.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// A bijection on `0..n`: row `i` is assigned column `mapping[i]`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        if n == 0 {
            return Err(invalid("permutation must be nonempty"));
        }
        let mut seen = vec![false; n];
        for &j in &mapping {
            if j >= n || seen[j] {
                return Err(invalid(format!("not a permutation of 0..{n}: {mapping:?}")));
            }
            seen[j] = true;
        }
        Ok(Self { mapping })
    }

    /// From 1-based images, as printed in QAPLIB solution files.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return Err(invalid("one-based permutation contains 0"));
        }
        Self::new(images.iter().map(|&j| j - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            inv[j] = i;
        }
        Self { mapping: inv }
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.mapping.iter().map(|j| j + 1).collect()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.mapping)
    }
}

/// Optimal assignment with the dual potentials that certify it:
/// `cost[i][j] - row_potential[i] - col_potential[j] >= 0` everywhere, with
/// equality on the assigned entries.
#[derive(Debug, Clone)]
pub struct LapSolution {
    pub permutation: Permutation,
    pub value: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

impl LapSolution {
    /// Smallest reduced cost `cost[i][j] - u[i] - v[j]`.
    pub fn min_reduced_cost(&self, cost: &Matrix) -> f64 {
        let n = self.permutation.len();
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                min = min.min(cost[(i, j)] - self.row_potential[i] - self.col_potential[j]);
            }
        }
        min
    }
}

/// Minimum-cost assignment, with duals.
pub fn solve_lap_min_with_duals(cost: &Matrix) -> Result<LapSolution> {
    let n = cost.ensure_square("solve_lap_min")?;
    if let Some(k) = cost.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry {
            row: k / n,
            col: k % n,
        });
    }

    // 1-based arrays; index 0 of `p` is the virtual column the current row starts from.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[p[j] - 1] = j - 1;
    }
    let value = mapping.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(LapSolution {
        permutation: Permutation { mapping },
        value,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    })
}

/// Permutation minimizing `sum_i cost[i][p(i)]`, and that sum.
pub fn solve_lap_min(cost: &Matrix) -> Result<(Permutation, f64)> {
    let s = solve_lap_min_with_duals(cost)?;
    Ok((s.permutation, s.value))
}

/// Permutation maximizing `sum_i profit[i][p(i)]`, and that sum.
pub fn solve_lap_max(profit: &Matrix) -> Result<(Permutation, f64)> {
    let (p, _) = solve_lap_min(&-profit)?;
    let value = assignment_value(profit, &p)?;
    Ok((p, value))
}

/// `sum_i m[i][p(i)]`.
pub fn assignment_value(m: &Matrix, p: &Permutation) -> Result<f64> {
    m.ensure_shape("assignment_value", (p.len(), p.len()))?;
    Ok(p.as_slice().iter().enumerate().map(|(i, &j)| m[(i, j)]).sum())
}

pub fn permutation_to_matrix(p: &Permutation) -> Matrix {
    let n = p.len();
    let mut m = Matrix::zeros(n, n);
    for (i, &j) in p.as_slice().iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// Reads back a 0/1 permutation matrix (entries within `tol` of 0 or 1).
pub fn matrix_to_permutation(m: &Matrix, tol: f64) -> Result<Permutation> {
    let n = m.ensure_square("matrix_to_permutation")?;
    let mut mapping = Vec::with_capacity(n);
    for i in 0..n {
        let mut hit = None;
        for (j, &v) in m.row(i).iter().enumerate() {
            if (v - 1.0).abs() <= tol {
                if hit.is_some() {
                    return Err(invalid(format!("row {i} has more than one unit entry")));
                }
                hit = Some(j);
            } else if v.abs() > tol {
                return Err(invalid(format!("entry ({i}, {j}) = {v} is neither 0 nor 1")));
            }
        }
        mapping.push(hit.ok_or_else(|| invalid(format!("row {i} has no unit entry")))?);
    }
    Permutation::new(mapping)
}

/// Linear minimization over the Birkhoff polytope: the permutation matrix
/// minimizing `<c, X>`.
pub fn birkhoff_lmo(c: &Matrix) -> Result<Matrix> {
    let (p, _) = solve_lap_min(c)?;
    Ok(permutation_to_matrix(&p))
}
