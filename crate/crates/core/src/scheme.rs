//! Uniform mesh, the exponentially fitted difference operator and assembly of
//! the dense linear system.
//!
//! At an interior node `x_i` the fitted operator reads
//!
//! ```text
//! sigma_i (u_{i-1} - 2 u_i + u_{i+1}) + (a_i / h)(u_{i+1} - u_i) - b_i u_i
//!     + lambda * sum_{j=0..N} w_j K(x_i, x_j) u_j = f_i
//! ```
//!
//! with `sigma_i = eps / psi_i^2 = a_i / (h (exp(a_i h / eps) - 1))` and
//! trapezoid weights `w_j`. For constant `a` and `b = 0` the difference
//! operator is exact: every combination `C1 + C2 exp(-a x / eps)` satisfies it
//! at the nodes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{Problem, ProblemError};

/// Largest argument for which `exp` is finite in double precision.
pub const EXP_OVERFLOW: f64 = 709.782712893384;

#[derive(Debug, Clone, Error)]
pub enum SchemeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("exponent {0} overflows double precision")]
    Overflow(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// Fitted second difference with a forward difference for u'.
    Fitted,
    /// Classical central differences for both derivatives.
    Standard,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Fitted => "fitted",
            SchemeKind::Standard => "standard",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fitted" => Ok(SchemeKind::Fitted),
            "standard" => Ok(SchemeKind::Standard),
            other => Err(SchemeError::InvalidArgument(format!(
                "unknown scheme `{other}`, expected `fitted` or `standard`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    intervals: usize,
    l: f64,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh {
    /// Uniform mesh of `intervals` cells on [0, l].
    pub fn uniform(intervals: usize, l: f64) -> Result<Mesh, SchemeError> {
        if intervals < 2 {
            return Err(SchemeError::InvalidArgument(format!(
                "a mesh needs at least 2 intervals, got {intervals}"
            )));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(SchemeError::InvalidArgument(format!(
                "domain length must be positive, got {l}"
            )));
        }
        let h = l / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        nodes[intervals] = l;
        Ok(Mesh {
            intervals,
            l,
            h,
            nodes,
        })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

pub fn make_mesh(intervals: usize, l: f64) -> Result<Mesh, SchemeError> {
    Mesh::uniform(intervals, l)
}

/// Fitted diffusion coefficient `eps / psi^2`, evaluated as
/// `a / (h * expm1(a h / eps))` so that neither tiny nor huge `a h / eps`
/// loses accuracy. Returns exactly 0 once `expm1` overflows; the true value is
/// then far below the smallest normal double.
pub fn fitted_coefficient(a: f64, eps: f64, h: f64) -> Result<f64, SchemeError> {
    if !(a > 0.0 && eps > 0.0 && h > 0.0) {
        return Err(SchemeError::InvalidArgument(format!(
            "fitted coefficient needs a, eps, h > 0 (a={a}, eps={eps}, h={h})"
        )));
    }
    let rho = a * h / eps;
    let denom = h * rho.exp_m1();
    if denom.is_finite() {
        Ok(a / denom)
    } else {
        Ok(0.0)
    }
}

/// Coefficients multiplying `u_{i-1}`, `u_i`, `u_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil3 {
    pub c_minus: f64,
    pub c_center: f64,
    pub c_plus: f64,
}

impl Stencil3 {
    pub fn apply(&self, u_minus: f64, u: f64, u_plus: f64) -> f64 {
        self.c_minus * u_minus + self.c_center * u + self.c_plus * u_plus
    }

    pub fn sum(&self) -> f64 {
        self.c_minus + self.c_center + self.c_plus
    }
}

/// Exact three-point scheme for `eps u'' + a u' - b u = 0` with constant
/// coefficients: both exponential solutions satisfy it at any three
/// consecutive nodes.
pub fn exact_constant_stencil(a: f64, b: f64, eps: f64, h: f64) -> Result<Stencil3, SchemeError> {
    if !(a > 0.0 && b >= 0.0 && eps > 0.0 && h > 0.0) {
        return Err(SchemeError::InvalidArgument(format!(
            "exact stencil needs a > 0, b >= 0, eps > 0, h > 0 (a={a}, b={b}, eps={eps}, h={h})"
        )));
    }
    let half = a * h / (2.0 * eps);
    let spread = h * (a * a + 4.0 * eps * b).sqrt() / (2.0 * eps);
    for arg in [half, spread] {
        if arg > EXP_OVERFLOW {
            return Err(SchemeError::Overflow(arg));
        }
    }
    Ok(Stencil3 {
        c_minus: -(-half).exp(),
        c_center: 2.0 * spread.cosh(),
        c_plus: -half.exp(),
    })
}

/// Composite trapezoid weights `h * eta_j` with `eta_0 = eta_N = 1/2`.
pub fn trapezoid_weights(mesh: &Mesh) -> Vec<f64> {
    let n = mesh.intervals;
    let mut w = vec![mesh.h; n + 1];
    w[0] = 0.5 * mesh.h;
    w[n] = 0.5 * mesh.h;
    w
}

/// Dense system for the interior unknowns `u_1 .. u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub n: usize,
    /// Row-major `n x n`; row `r` is the equation at node `r + 1`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Differential part of each row before the kernel term is added.
    pub differential: Vec<Stencil3>,
    pub mesh: Mesh,
    pub kind: SchemeKind,
    pub eps: f64,
    pub lambda: f64,
}

impl DiscreteSystem {
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n + col]
    }
}

/// Differential stencil at one interior node.
pub fn row_stencil(
    kind: SchemeKind,
    a: f64,
    b: f64,
    eps: f64,
    h: f64,
) -> Result<Stencil3, SchemeError> {
    Ok(match kind {
        SchemeKind::Fitted => {
            let sigma = fitted_coefficient(a, eps, h)?;
            let conv = a / h;
            Stencil3 {
                c_minus: sigma,
                c_center: -(2.0 * sigma + conv + b),
                c_plus: sigma + conv,
            }
        }
        SchemeKind::Standard => {
            let sigma = eps / (h * h);
            let conv = a / (2.0 * h);
            Stencil3 {
                c_minus: sigma - conv,
                c_center: -(2.0 * sigma + b),
                c_plus: sigma + conv,
            }
        }
    })
}

pub fn assemble(p: &Problem, mesh: &Mesh, kind: SchemeKind) -> Result<DiscreteSystem, SchemeError> {
    if (mesh.l - p.l).abs() > 1e-14 * p.l {
        return Err(SchemeError::InvalidArgument(format!(
            "mesh length {} does not match problem length {}",
            mesh.l, p.l
        )));
    }
    let big_n = mesh.intervals;
    let n = big_n - 1;
    let h = mesh.h;
    let x = &mesh.nodes;
    let w = trapezoid_weights(mesh);
    let f = p.forcing_at(&x[1..big_n])?;

    let mut matrix = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut differential = Vec::with_capacity(n);
    for r in 0..n {
        let xi = x[r + 1];
        let st = row_stencil(kind, p.a_at(xi)?, p.b_at(xi)?, p.eps, h)?;
        let row = &mut matrix[r * n..(r + 1) * n];
        if r > 0 {
            row[r - 1] += st.c_minus;
        }
        row[r] += st.c_center;
        if r + 1 < n {
            row[r + 1] += st.c_plus;
        }

        let mut b_i = f[r];
        if p.lambda != 0.0 {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry += p.lambda * w[c + 1] * p.kernel_at(xi, x[c + 1])?;
            }
            b_i -= p.lambda
                * (w[0] * p.kernel_at(xi, 0.0)? * p.left
                    + w[big_n] * p.kernel_at(xi, mesh.l)? * p.right);
        }
        if r == 0 {
            b_i -= st.c_minus * p.left;
        }
        if r == n - 1 {
            b_i -= st.c_plus * p.right;
        }
        rhs[r] = b_i;
        differential.push(st);
    }
    Ok(DiscreteSystem {
        n,
        matrix,
        rhs,
        differential,
        mesh: mesh.clone(),
        kind,
        eps: p.eps,
        lambda: p.lambda,
    })
}
