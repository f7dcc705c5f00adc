//! Dense LU factorization with partial pivoting.

use thiserror::Error;

use crate::scheme::{DiscreteSystem, Mesh, SchemeKind};

/// Pivots smaller than this are treated as exact zeros.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Upper limit on fixed-precision refinement sweeps in [`lu_solve`].
pub const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("matrix is singular: no usable pivot in column {column}")]
    SingularMatrix { column: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `P A = L U`, stored in place with unit lower diagonal implied.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factors a row-major `n x n` matrix. The pivot in each column is the
    /// entry of largest magnitude; ties go to the lowest row index.
    pub fn factor(matrix: &[f64], n: usize) -> Result<LuFactors, SolveError> {
        if n == 0 || matrix.len() != n * n {
            return Err(SolveError::Dimension(format!(
                "expected a non-empty {n}x{n} matrix, got {} entries",
                matrix.len()
            )));
        }
        let mut lu = matrix.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for r in k + 1..n {
                let v = lu[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best >= PIVOT_FLOOR) {
                return Err(SolveError::SingularMatrix { column: k });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let (upper, lower) = lu.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n..];
            let pivot = pivot_row[k];
            for row in lower.chunks_exact_mut(n) {
                let factor = row[k] / pivot;
                row[k] = factor;
                if factor != 0.0 {
                    for (dst, &src) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                        *dst -= factor * src;
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.n;
        if rhs.len() != n {
            return Err(SolveError::Dimension(format!(
                "rhs has {} entries, expected {n}",
                rhs.len()
            )));
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(l, y)| l * y).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&y[i + 1..])
                .map(|(u, x)| u * x)
                .sum();
            y[i] = (y[i] - s) / row[i];
        }
        Ok(y)
    }
}

pub fn solve_dense(matrix: &[f64], n: usize, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    LuFactors::factor(matrix, n)?.solve(rhs)
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum absolute row sum.
pub fn matrix_norm_inf(matrix: &[f64], n: usize) -> f64 {
    matrix
        .chunks_exact(n)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `b - A x`
pub fn residual(matrix: &[f64], n: usize, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    matrix
        .chunks_exact(n)
        .zip(rhs)
        .map(|(row, b)| b - row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>())
        .collect()
}

/// `|| A x - b ||_inf`
pub fn residual_inf(matrix: &[f64], n: usize, x: &[f64], rhs: &[f64]) -> f64 {
    norm_inf(&residual(matrix, n, x, rhs))
}

/// LU solve followed by up to [`REFINEMENT_STEPS`] sweeps of iterative
/// refinement. A sweep is kept only if it lowers the residual.
pub fn solve_refined(matrix: &[f64], n: usize, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    let lu = LuFactors::factor(matrix, n)?;
    let mut x = lu.solve(rhs)?;
    let mut r = residual(matrix, n, &x, rhs);
    let mut r_norm = norm_inf(&r);
    for _ in 0..REFINEMENT_STEPS {
        if r_norm == 0.0 {
            break;
        }
        let d = lu.solve(&r)?;
        let next: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + d).collect();
        let next_r = residual(matrix, n, &next, rhs);
        let next_norm = norm_inf(&next_r);
        if !(next_norm < r_norm) {
            break;
        }
        (x, r, r_norm) = (next, next_r, next_norm);
    }
    Ok(x)
}

/// Backward-error style certificate: `1e3 * eps_mach * ||A|| * ||x|| * n`.
pub fn residual_bound(matrix_norm: f64, solution_norm: f64, n: usize) -> f64 {
    1e3 * f64::EPSILON * matrix_norm * solution_norm * n as f64
}

/// Nodal solution including the boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    pub residual_inf: f64,
    pub residual_bound: f64,
    pub kind: SchemeKind,
}

impl Solution {
    pub fn residual_certified(&self) -> bool {
        self.residual_inf.is_finite() && self.residual_inf <= self.residual_bound
    }
}

pub fn lu_solve(sys: &DiscreteSystem, left: f64, right: f64) -> Result<Solution, SolveError> {
    let interior = solve_refined(&sys.matrix, sys.n, &sys.rhs)?;
    let residual = residual_inf(&sys.matrix, sys.n, &interior, &sys.rhs);
    let bound = residual_bound(
        matrix_norm_inf(&sys.matrix, sys.n),
        norm_inf(&interior),
        sys.n,
    );
    let mut values = Vec::with_capacity(sys.n + 2);
    values.push(left);
    values.extend_from_slice(&interior);
    values.push(right);
    Ok(Solution {
        mesh: sys.mesh.clone(),
        values,
        residual_inf: residual,
        residual_bound: bound,
        kind: sys.kind,
    })
}
