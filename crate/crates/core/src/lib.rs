//! Exponentially fitted finite differences for singularly perturbed Fredholm
//! integro-differential boundary value problems
//!
//! ```text
//! eps u''(x) + a(x) u'(x) - b(x) u(x) + lambda * int_0^l K(x,s) u(s) ds = f(x),   u(0) = A, u(l) = B
//! ```
//!
//! with `0 < eps <= 1` and `a(x) >= alpha > 0`, so a boundary layer of width
//! `O(eps)` forms at `x = 0`.
//!
//! The crate is organised bottom-up:
//!
//! * [`funcexpr`] parses, evaluates and differentiates the expressions that
//!   define coefficients, kernels and exact solutions.
//! * [`problem`] holds validated problem instances and manufactures forcing
//!   terms from known solutions.
//! * [`scheme`] builds the uniform mesh and assembles the fitted (or classical
//!   central) difference operator plus the trapezoid-discretized integral term.
//! * [`linsolve`] factors the dense system and certifies the residual.
//! * [`analysis`] measures errors and rates and runs convergence studies.
//! * [`cli`] loads JSON configs and drives the `spfide` binary.
//!
//! ```
//! use spfide::analysis::{max_error, solve_problem};
//! use spfide::problem::{Forcing, Problem, DEFAULT_QUAD_POINTS};
//! use spfide::scheme::SchemeKind;
//!
//! let eps: f64 = 2f64.powi(-6);
//! let p = Problem {
//!     eps,
//!     lambda: 1.0,
//!     l: 1.0,
//!     a: "1".parse()?,
//!     b: "0".parse()?,
//!     kernel: "x".parse()?,
//!     forcing: Forcing::Manufactured { quad_points: DEFAULT_QUAD_POINTS },
//!     left: 1.0,
//!     right: (-1.0 / eps).exp(),
//!     exact: Some("exp(-x/eps)".parse()?),
//! };
//! let sol = solve_problem(&p, 64, SchemeKind::Fitted)?;
//! let err = max_error(&sol, p.exact.as_ref().unwrap(), eps)?;
//! assert!(err < 1e-3);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod funcexpr;
pub mod linsolve;
pub mod problem;
pub mod scheme;

pub use analysis::{run_study, ConvergenceReport};
pub use funcexpr::{Bindings, Expr, Var};
pub use linsolve::{lu_solve, Solution};
pub use problem::{Forcing, ManufacturedProblem, Problem, ProblemFamily};
pub use scheme::{assemble, make_mesh, DiscreteSystem, Mesh, SchemeKind};

// Every chapter of the guide in `book/` is compiled and run as a doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    mod expressions {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/fitted-scheme.md")]
    mod fitted_scheme {}
    #[doc = include_str!("../../../book/src/assembly.md")]
    mod assembly {}
    #[doc = include_str!("../../../book/src/solving.md")]
    mod solving {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
