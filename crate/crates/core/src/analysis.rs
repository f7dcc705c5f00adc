//! Error measurement, convergence rates and diagnostics.
//!
//! A convergence study solves a [`ProblemFamily`] on a grid of perturbation
//! parameters and mesh sizes and records, for each cell, the maximum nodal
//! error against the exact solution
//!
//! ```text
//! E_eps^N = max_i |u_i - u(x_i)|,     P_eps^N = log2(E_eps^N / E_eps^2N)
//! ```
//!
//! together with the eps-uniform quantities `E^N = max_eps E_eps^N` and the
//! rate `P^N` computed from them.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::funcexpr::{Bindings, Expr, ExprError, Var};
use crate::linsolve::{lu_solve, Solution, SolveError};
use crate::problem::{Problem, ProblemError, ProblemFamily};
use crate::scheme::{assemble, trapezoid_weights, DiscreteSystem, Mesh, SchemeError, SchemeKind};

#[derive(Debug, Clone, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// `max_i |values[i] - exact(x_i)|` over all mesh nodes, boundary included.
pub fn max_error(sol: &Solution, exact: &Expr, eps: f64) -> Result<f64, ExprError> {
    let mut b = Bindings::new().with(Var::Eps, eps)?;
    let mut worst: f64 = 0.0;
    for (&x, &u) in sol.mesh.nodes().iter().zip(&sol.values) {
        b.set(Var::X, x)?;
        worst = worst.max((u - exact.eval(&b)?).abs());
    }
    Ok(worst)
}

/// Observed order between a mesh and its refinement by two.
pub fn rate(e_n: f64, e_2n: f64) -> Result<f64, AnalysisError> {
    if !(e_n > 0.0 && e_2n > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "rates need positive errors, got {e_n} and {e_2n}"
        )));
    }
    Ok((e_n / e_2n).ln() / std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBound {
    pub satisfied: bool,
    /// `alpha / max_i sum_j h eta_j |K(x_i, x_j)|`; infinite for a zero kernel.
    pub bound: f64,
    pub margin: f64,
}

impl LambdaBound {
    pub fn is_unbounded(&self) -> bool {
        self.bound == f64::INFINITY
    }
}

impl fmt::Display for LambdaBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.satisfied {
            "satisfied"
        } else {
            "violated"
        };
        if self.is_unbounded() {
            write!(f, "|lambda| bound: unbounded ({verdict})")
        } else {
            write!(
                f,
                "|lambda| bound: {:.6} ({verdict}, margin {:.6})",
                self.bound, self.margin
            )
        }
    }
}

/// Smallness condition on `lambda` under which the discrete solution is
/// known to converge uniformly. Diagnostic only; nothing refuses to solve
/// when it fails.
pub fn lambda_bound_check(p: &Problem, mesh: &Mesh) -> Result<LambdaBound, AnalysisError> {
    let report = p.validate();
    let alpha = report.alpha_estimate.ok_or_else(|| {
        AnalysisError::InvalidArgument(format!(
            "cannot estimate alpha: {}",
            report.violations.join("; ")
        ))
    })?;
    let w = trapezoid_weights(mesh);
    let nodes = mesh.nodes();
    let mut worst: f64 = 0.0;
    for &xi in &nodes[1..] {
        let mut row = 0.0;
        for (&s, &wj) in nodes.iter().zip(&w) {
            row += wj * p.kernel_at(xi, s)?.abs();
        }
        worst = worst.max(row);
    }
    let bound = if worst == 0.0 {
        f64::INFINITY
    } else {
        alpha / worst
    };
    let lambda = p.lambda.abs();
    Ok(LambdaBound {
        satisfied: lambda < bound,
        bound,
        margin: bound - lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilEntry {
    Sub,
    Diagonal,
    Super,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignViolation {
    /// Interior node index, 1-based like the mesh.
    pub node: usize,
    pub entry: StencilEntry,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinimumPrincipleReport {
    pub violations: Vec<SignViolation>,
}

impl MinimumPrincipleReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sign pattern of the differential part that makes the discrete comparison
/// argument work: off-diagonals non-negative, diagonal negative.
pub fn minimum_principle_diagnostic(sys: &DiscreteSystem) -> MinimumPrincipleReport {
    let mut violations = Vec::new();
    for (r, st) in sys.differential.iter().enumerate() {
        let node = r + 1;
        // boundary columns are eliminated; their coefficients still matter
        if !(st.c_minus >= 0.0) {
            violations.push(SignViolation {
                node,
                entry: StencilEntry::Sub,
                value: st.c_minus,
            });
        }
        if !(st.c_center < 0.0) {
            violations.push(SignViolation {
                node,
                entry: StencilEntry::Diagonal,
                value: st.c_center,
            });
        }
        if !(st.c_plus >= 0.0) {
            violations.push(SignViolation {
                node,
                entry: StencilEntry::Super,
                value: st.c_plus,
            });
        }
    }
    MinimumPrincipleReport { violations }
}

/// Assembles and solves one instance.
pub fn solve_problem(
    p: &Problem,
    intervals: usize,
    kind: SchemeKind,
) -> Result<Solution, AnalysisError> {
    let mesh = Mesh::uniform(intervals, p.l)?;
    let sys = assemble(p, &mesh, kind)?;
    Ok(lu_solve(&sys, p.left, p.right)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub eps: f64,
    pub n: usize,
    pub max_error: f64,
    /// Rate against the next mesh in the study, once that cell exists.
    pub rate: Option<f64>,
    pub residual_inf: f64,
    pub residual_bound: f64,
}

impl ErrorRecord {
    pub fn residual_certified(&self) -> bool {
        self.residual_inf.is_finite() && self.residual_inf <= self.residual_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Solved(ErrorRecord),
    Failed(String),
}

impl Cell {
    pub fn record(&self) -> Option<&ErrorRecord> {
        match self {
            Cell::Solved(r) => Some(r),
            Cell::Failed(_) => None,
        }
    }

    pub fn max_error(&self) -> Option<f64> {
        self.record().map(|r| r.max_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub kind: SchemeKind,
    pub eps_list: Vec<f64>,
    pub n_list: Vec<usize>,
    /// Indexed `[eps][n]`.
    pub records: Vec<Vec<Cell>>,
    /// `E^N`; `None` when any cell of the column failed.
    pub uniform_errors: Vec<Option<f64>>,
    /// `P^N` between consecutive meshes; one shorter than `n_list`.
    pub uniform_rates: Vec<Option<f64>>,
}

impl ConvergenceReport {
    pub fn cell(&self, eps_index: usize, n_index: usize) -> &Cell {
        &self.records[eps_index][n_index]
    }

    pub fn failures(&self) -> usize {
        self.records
            .iter()
            .flatten()
            .filter(|c| matches!(c, Cell::Failed(_)))
            .count()
    }

    pub fn rates_for(&self, eps_index: usize) -> Vec<Option<f64>> {
        self.records[eps_index][..self.n_list.len().saturating_sub(1)]
            .iter()
            .map(|c| c.record().and_then(|r| r.rate))
            .collect()
    }
}

fn rate_between(e_coarse: f64, e_fine: f64, n_coarse: usize, n_fine: usize) -> Option<f64> {
    let levels = (n_fine as f64 / n_coarse as f64).log2();
    rate(e_coarse, e_fine).ok().map(|r| r / levels)
}

fn validate_grid(eps_list: &[f64], n_list: &[usize]) -> Result<(), AnalysisError> {
    if eps_list.is_empty() {
        return Err(AnalysisError::InvalidArgument("eps_list is empty".into()));
    }
    if n_list.is_empty() {
        return Err(AnalysisError::InvalidArgument("N_list is empty".into()));
    }
    if let Some(eps) = eps_list.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
        return Err(AnalysisError::InvalidArgument(format!(
            "eps {eps} is outside (0,1]"
        )));
    }
    if let Some(n) = n_list.iter().find(|&&n| n < 2 || !n.is_power_of_two()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "N = {n} is not a power of two >= 2"
        )));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::InvalidArgument(
            "N_list must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn run_cell(
    family: &ProblemFamily,
    eps: f64,
    n: usize,
    kind: SchemeKind,
) -> Result<ErrorRecord, AnalysisError> {
    let p = family.at_eps(eps)?;
    let exact = p.exact.as_ref().ok_or(ProblemError::MissingExact)?;
    let sol = solve_problem(&p, n, kind)?;
    Ok(ErrorRecord {
        eps,
        n,
        max_error: max_error(&sol, exact, eps)?,
        rate: None,
        residual_inf: sol.residual_inf,
        residual_bound: sol.residual_bound,
    })
}

/// Solves every `(eps, N)` pair. Cells run in parallel; the report layout
/// depends only on the inputs. A failing cell is recorded, not propagated.
pub fn run_study(
    family: &ProblemFamily,
    eps_list: &[f64],
    n_list: &[usize],
    kind: SchemeKind,
) -> Result<ConvergenceReport, AnalysisError> {
    validate_grid(eps_list, n_list)?;
    if family.exact.is_none() {
        return Err(AnalysisError::InvalidArgument(
            "a convergence study needs an exact solution".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..eps_list.len())
        .flat_map(|e| (0..n_list.len()).map(move |k| (e, k)))
        .collect();
    let outcomes: Vec<Cell> = jobs
        .par_iter()
        .map(
            |&(e, k)| match run_cell(family, eps_list[e], n_list[k], kind) {
                Ok(rec) => Cell::Solved(rec),
                Err(err) => Cell::Failed(err.to_string()),
            },
        )
        .collect();

    let mut records: Vec<Vec<Cell>> = outcomes.chunks(n_list.len()).map(|c| c.to_vec()).collect();
    for row in &mut records {
        for k in 0..n_list.len().saturating_sub(1) {
            let fine = row[k + 1].max_error();
            if let (Cell::Solved(rec), Some(fine)) = (&mut row[k], fine) {
                rec.rate = rate_between(rec.max_error, fine, n_list[k], n_list[k + 1]);
            }
        }
    }

    let uniform_errors: Vec<Option<f64>> = (0..n_list.len())
        .map(|k| {
            records
                .iter()
                .map(|row| row[k].max_error())
                .try_fold(0.0f64, |m, e| e.map(|e| m.max(e)))
        })
        .collect();
    let uniform_rates = uniform_errors
        .windows(2)
        .enumerate()
        .map(|(k, w)| match (w[0], w[1]) {
            (Some(c), Some(f)) => rate_between(c, f, n_list[k], n_list[k + 1]),
            _ => None,
        })
        .collect();

    Ok(ConvergenceReport {
        kind,
        eps_list: eps_list.to_vec(),
        n_list: n_list.to_vec(),
        records,
        uniform_errors,
        uniform_rates,
    })
}
