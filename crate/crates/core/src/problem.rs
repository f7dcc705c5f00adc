//! Boundary value problem instances.
//!
//! A [`Problem`] is one fully specified instance
//!
//! ```text
//! eps u''(x) + a(x) u'(x) - b(x) u(x) + lambda * int_0^l K(x,s) u(s) ds = f(x),  0 < x < l
//! u(0) = A,  u(l) = B
//! ```
//!
//! A [`ProblemFamily`] keeps the boundary values as expressions in `eps`, so a
//! convergence study can instantiate the same problem across many values of
//! the perturbation parameter.

use rayon::prelude::*;
use thiserror::Error;

use crate::funcexpr::{Bindings, Expr, ExprError, Var};

/// Trapezoid intervals used to integrate the kernel against a manufactured solution.
pub const DEFAULT_QUAD_POINTS: usize = 1 << 15;
pub const MIN_QUAD_POINTS: usize = 1024;

const VALIDATION_SAMPLES: usize = 10_001;
const KERNEL_VALIDATION_SAMPLES: usize = 101;

#[derive(Debug, Clone, Error)]
pub enum ProblemError {
    #[error("{what} failed to evaluate at x = {x}: {source}")]
    Eval {
        what: &'static str,
        x: f64,
        #[source]
        source: ExprError,
    },
    #[error("{what} failed to evaluate: {source}")]
    Boundary {
        what: &'static str,
        #[source]
        source: ExprError,
    },
    #[error("quad_points must be at least {MIN_QUAD_POINTS}, got {0}")]
    QuadPoints(usize),
    #[error("manufactured forcing requires an exact solution")]
    MissingExact,
    #[error("invalid problem: {}", .0.violations.join("; "))]
    Invalid(ValidationReport),
}

/// Right-hand side of the equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Expr(Expr),
    /// Computed from the exact solution by applying the operator to it, with
    /// the integral evaluated by a composite trapezoid rule on `quad_points`
    /// intervals.
    Manufactured {
        quad_points: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub eps: f64,
    pub lambda: f64,
    pub l: f64,
    pub a: Expr,
    pub b: Expr,
    pub kernel: Expr,
    pub forcing: Forcing,
    /// u(0)
    pub left: f64,
    /// u(l)
    pub right: f64,
    pub exact: Option<Expr>,
}

/// A problem whose forcing is derived from a prescribed exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedProblem {
    pub eps: f64,
    pub lambda: f64,
    pub l: f64,
    pub a: Expr,
    pub b: Expr,
    pub kernel: Expr,
    pub left: f64,
    pub right: f64,
    pub exact: Expr,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Sampled minimum of a(x); the lower bound alpha of the theory.
    pub alpha_estimate: Option<f64>,
    /// Sampled minimum of b(x).
    pub beta_estimate: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn bind(x: f64, eps: f64) -> Result<Bindings, ExprError> {
    Bindings::new().with(Var::X, x)?.with(Var::Eps, eps)
}

fn eval_at(what: &'static str, e: &Expr, x: f64, eps: f64) -> Result<f64, ProblemError> {
    bind(x, eps)
        .and_then(|b| e.eval(&b))
        .map_err(|source| ProblemError::Eval { what, x, source })
}

fn eval_kernel(k: &Expr, x: f64, s: f64, eps: f64) -> Result<f64, ProblemError> {
    bind(x, eps)
        .and_then(|b| b.with(Var::S, s))
        .and_then(|b| k.eval(&b))
        .map_err(|source| ProblemError::Eval {
            what: "K(x,s)",
            x,
            source,
        })
}

fn composite_trapezoid(l: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let h = l / intervals as f64;
    let nodes: Vec<f64> = (0..=intervals)
        .map(|j| if j == intervals { l } else { j as f64 * h })
        .collect();
    let mut weights = vec![h; intervals + 1];
    weights[0] = 0.5 * h;
    weights[intervals] = 0.5 * h;
    (nodes, weights)
}

impl Problem {
    pub fn a_at(&self, x: f64) -> Result<f64, ProblemError> {
        eval_at("a(x)", &self.a, x, self.eps)
    }

    pub fn b_at(&self, x: f64) -> Result<f64, ProblemError> {
        eval_at("b(x)", &self.b, x, self.eps)
    }

    pub fn kernel_at(&self, x: f64, s: f64) -> Result<f64, ProblemError> {
        eval_kernel(&self.kernel, x, s, self.eps)
    }

    pub fn exact_at(&self, x: f64) -> Option<Result<f64, ProblemError>> {
        self.exact
            .as_ref()
            .map(|u| eval_at("exact u(x)", u, x, self.eps))
    }

    /// Forcing values at the given abscissae.
    pub fn forcing_at(&self, xs: &[f64]) -> Result<Vec<f64>, ProblemError> {
        match &self.forcing {
            Forcing::Expr(f) => xs
                .iter()
                .map(|&x| eval_at("f(x)", f, x, self.eps))
                .collect(),
            Forcing::Manufactured { quad_points } => {
                let exact = self.exact.as_ref().ok_or(ProblemError::MissingExact)?;
                let builder = ForcingBuilder::new(self, exact, *quad_points)?;
                xs.par_iter().map(|&x| builder.value(x)).collect()
            }
        }
    }

    /// Checks the standing hypotheses: eps in (0,1], l > 0, a(x) bounded below
    /// by a positive constant, and every expression evaluable on [0,l].
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let v = &mut report.violations;
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            v.push(format!("eps must lie in (0,1], got {}", self.eps));
        }
        if !self.lambda.is_finite() {
            v.push(format!("lambda must be finite, got {}", self.lambda));
        }
        if !self.left.is_finite() || !self.right.is_finite() {
            v.push(format!(
                "boundary values must be finite, got A={} B={}",
                self.left, self.right
            ));
        }
        for (name, e) in [("a", &self.a), ("b", &self.b)] {
            if e.depends_on(Var::S) {
                v.push(format!("{name}(x) must not depend on s"));
            }
        }
        match &self.forcing {
            Forcing::Expr(f) if f.depends_on(Var::S) => v.push("f(x) must not depend on s".into()),
            Forcing::Manufactured { .. } if self.exact.is_none() => {
                v.push("manufactured forcing requires an exact solution".into())
            }
            Forcing::Manufactured { quad_points } if *quad_points < MIN_QUAD_POINTS => v.push(
                format!("quad_points must be at least {MIN_QUAD_POINTS}, got {quad_points}"),
            ),
            _ => {}
        }
        if let Some(u) = &self.exact {
            if u.depends_on(Var::S) {
                v.push("exact u(x) must not depend on s".into());
            }
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            v.push(format!("l must be positive, got {}", self.l));
            return report;
        }
        if !v.is_empty() {
            // Sampling is meaningless with a malformed eps or misplaced variables.
            return report;
        }

        let h = self.l / (VALIDATION_SAMPLES - 1) as f64;
        let xs: Vec<f64> = (0..VALIDATION_SAMPLES).map(|i| i as f64 * h).collect();
        let sampled_min = |what: &'static str, e: &Expr, v: &mut Vec<String>| -> Option<f64> {
            let mut min = f64::INFINITY;
            for &x in &xs {
                match eval_at(what, e, x, self.eps) {
                    Ok(val) => min = min.min(val),
                    Err(err) => {
                        v.push(err.to_string());
                        return None;
                    }
                }
            }
            Some(min)
        };
        report.alpha_estimate = sampled_min("a(x)", &self.a, v);
        report.beta_estimate = sampled_min("b(x)", &self.b, v);
        if let Forcing::Expr(f) = &self.forcing {
            sampled_min("f(x)", f, v);
        }
        if let Some(u) = &self.exact {
            sampled_min("exact u(x)", u, v);
        }
        if let Some(alpha) = report.alpha_estimate {
            if alpha <= 0.0 {
                v.push(format!(
                    "a(x) must be positive on [0,l] (sampled minimum {alpha})"
                ));
            }
        }
        let hk = self.l / (KERNEL_VALIDATION_SAMPLES - 1) as f64;
        'kernel: for i in 0..KERNEL_VALIDATION_SAMPLES {
            for j in 0..KERNEL_VALIDATION_SAMPLES {
                let (x, s) = (i as f64 * hk, j as f64 * hk);
                if let Err(err) = self.kernel_at(x, s) {
                    v.push(format!("{err} (s = {s})"));
                    break 'kernel;
                }
            }
        }
        report
    }

    pub fn validated(self) -> Result<Problem, ProblemError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(ProblemError::Invalid(report))
        }
    }
}

impl ManufacturedProblem {
    /// Sets `left` and `right` from the exact solution at 0 and l.
    pub fn with_exact_boundary(mut self) -> Result<Self, ProblemError> {
        self.left = eval_at("exact u(x)", &self.exact, 0.0, self.eps)?;
        self.right = eval_at("exact u(x)", &self.exact, self.l, self.eps)?;
        Ok(self)
    }

    /// f(x) = eps u'' + a u' - b u + lambda Q(x), where Q is the composite
    /// trapezoid value of the kernel integral on `quad_points` intervals.
    pub fn forcing(&self, x: f64, quad_points: usize) -> Result<f64, ProblemError> {
        let p = self.clone().into_problem(quad_points);
        ForcingBuilder::new(&p, &self.exact, quad_points)?.value(x)
    }

    pub fn into_problem(self, quad_points: usize) -> Problem {
        Problem {
            eps: self.eps,
            lambda: self.lambda,
            l: self.l,
            a: self.a,
            b: self.b,
            kernel: self.kernel,
            forcing: Forcing::Manufactured { quad_points },
            left: self.left,
            right: self.right,
            exact: Some(self.exact),
        }
    }
}

/// Precomputed pieces for evaluating a manufactured forcing at many points.
struct ForcingBuilder<'a> {
    p: &'a Problem,
    exact: &'a Expr,
    du: Expr,
    d2u: Expr,
    quad_nodes: Vec<f64>,
    // weight_j * u(s_j)
    weighted_u: Vec<f64>,
}

impl<'a> ForcingBuilder<'a> {
    fn new(p: &'a Problem, exact: &'a Expr, quad_points: usize) -> Result<Self, ProblemError> {
        if quad_points < MIN_QUAD_POINTS {
            return Err(ProblemError::QuadPoints(quad_points));
        }
        let du = exact
            .differentiate(Var::X)
            .expect("x is a differentiation variable");
        let d2u = du
            .differentiate(Var::X)
            .expect("x is a differentiation variable");
        let (quad_nodes, weights) = composite_trapezoid(p.l, quad_points);
        let weighted_u = quad_nodes
            .iter()
            .zip(&weights)
            .map(|(&s, &w)| eval_at("exact u(x)", exact, s, p.eps).map(|u| w * u))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            p,
            exact,
            du,
            d2u,
            quad_nodes,
            weighted_u,
        })
    }

    fn integral(&self, x: f64) -> Result<f64, ProblemError> {
        let k = &self.p.kernel;
        if !k.depends_on(Var::S) {
            let kx = eval_kernel(k, x, 0.0, self.p.eps)?;
            return Ok(kx * self.weighted_u.iter().sum::<f64>());
        }
        let mut b = bind(x, self.p.eps).map_err(|source| ProblemError::Eval {
            what: "K(x,s)",
            x,
            source,
        })?;
        let mut acc = 0.0;
        for (&s, &wu) in self.quad_nodes.iter().zip(&self.weighted_u) {
            b.set(Var::S, s).expect("quadrature nodes are finite");
            let kv = k.eval(&b).map_err(|source| ProblemError::Eval {
                what: "K(x,s)",
                x,
                source,
            })?;
            acc += kv * wu;
        }
        Ok(acc)
    }

    fn value(&self, x: f64) -> Result<f64, ProblemError> {
        let p = self.p;
        let u = eval_at("exact u(x)", self.exact, x, p.eps)?;
        let du = eval_at("u'(x)", &self.du, x, p.eps)?;
        let d2u = eval_at("u''(x)", &self.d2u, x, p.eps)?;
        let mut f = p.eps * d2u + p.a_at(x)? * du - p.b_at(x)? * u;
        if p.lambda != 0.0 {
            f += p.lambda * self.integral(x)?;
        }
        Ok(f)
    }
}

/// A problem with the perturbation parameter left free. Boundary values are
/// expressions in `eps` and are evaluated when an instance is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFamily {
    pub lambda: f64,
    pub l: f64,
    pub a: Expr,
    pub b: Expr,
    pub kernel: Expr,
    pub forcing: Forcing,
    pub left: Expr,
    pub right: Expr,
    pub exact: Option<Expr>,
}

impl ProblemFamily {
    pub fn at_eps(&self, eps: f64) -> Result<Problem, ProblemError> {
        let boundary = |what: &'static str, e: &Expr| {
            Bindings::new()
                .with(Var::Eps, eps)
                .and_then(|b| e.eval(&b))
                .map_err(|source| ProblemError::Boundary { what, source })
        };
        Ok(Problem {
            eps,
            lambda: self.lambda,
            l: self.l,
            a: self.a.clone(),
            b: self.b.clone(),
            kernel: self.kernel.clone(),
            forcing: self.forcing.clone(),
            left: boundary("A", &self.left)?,
            right: boundary("B", &self.right)?,
            exact: self.exact.clone(),
        })
    }
}
