#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use spfide::analysis::minimum_principle_diagnostic;
use spfide::funcexpr::{parse, BinOp, Bindings, Expr, Func, Var};
use spfide::linsolve::solve_dense;
use spfide::scheme::trapezoid_weights;
use spfide::{assemble, Forcing, ManufacturedProblem, Mesh, Problem, ProblemFamily, SchemeKind};

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn expr(text: &str) -> Expr {
    text.parse().unwrap()
}

/// Arbitrary trees in the shape the parser produces: literals are
/// non-negative, negation is a node of its own.
pub fn any_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..1e6).prop_map(Expr::Num),
        (0u32..100).prop_map(|k| Expr::Num(k as f64)),
        prop_oneof![Just(Var::X), Just(Var::S), Just(Var::Eps)].prop_map(Expr::Var),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Bin(
                o,
                Box::new(l),
                Box::new(r)
            )),
            (proptest::sample::select(Func::ALL.to_vec()), inner)
                .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

/// Trees in x that are smooth and finite on [-1, 1].
pub fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-2.0f64..2.0).prop_map(Expr::Num), Just(Expr::Var(Var::X))];
    leaf.prop_recursive(3, 16, 2, |inner| {
        let b = |o: BinOp, l: Expr, r: Expr| Expr::Bin(o, Box::new(l), Box::new(r));
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| b(BinOp::Add, l, r)),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| b(BinOp::Sub, l, r)),
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| b(BinOp::Mul, l, r)),
            // positive denominator
            (inner.clone(), inner.clone()).prop_map(move |(l, r)| {
                b(
                    BinOp::Div,
                    l,
                    b(BinOp::Add, Expr::Num(1.5), b(BinOp::Pow, r, Expr::Num(2.0))),
                )
            }),
            (inner.clone(), 2u32..4).prop_map(move |(e, k)| b(BinOp::Pow, e, Expr::Num(k as f64))),
            inner
                .clone()
                .prop_map(|e| Expr::Call(Func::Sin, Box::new(e))),
            inner
                .clone()
                .prop_map(|e| Expr::Call(Func::Cos, Box::new(e))),
            inner
                .clone()
                .prop_map(|e| Expr::Call(Func::Exp, Box::new(Expr::Call(Func::Sin, Box::new(e))))),
            inner.clone().prop_map(move |e| {
                Expr::Call(
                    Func::Ln,
                    Box::new(b(
                        BinOp::Add,
                        Expr::Num(2.0),
                        Expr::Call(Func::Cos, Box::new(e)),
                    )),
                )
            }),
            inner.prop_map(move |e| {
                Expr::Call(
                    Func::Sqrt,
                    Box::new(b(BinOp::Add, Expr::Num(1.0), b(BinOp::Mul, e.clone(), e))),
                )
            }),
        ]
    })
}

/// `eps u'' + a u' = 0` with constant `a` on [0,1], plain boundary values.
pub fn constant_homogeneous(a: f64, eps: f64, left: f64, right: f64) -> Problem {
    Problem {
        eps,
        lambda: 0.0,
        l: 1.0,
        a: num(a),
        b: num(0.0),
        kernel: num(0.0),
        forcing: Forcing::Expr(num(0.0)),
        left,
        right,
        exact: None,
    }
}

/// Coefficients of `u = c1 + c2 exp(-a x / eps)` through `(0, left)` and `(1, right)`.
pub fn exponential_fit(a: f64, eps: f64, left: f64, right: f64) -> (f64, f64) {
    let e = (-a / eps).exp();
    let c2 = (left - right) / (1.0 - e);
    (left - c2, c2)
}

/// The layer benchmark: `eps u'' + u' + int_0^1 x u(s) ds = f` with
/// `u = exp(-x/eps)`.
pub fn layer_family() -> ProblemFamily {
    ProblemFamily {
        lambda: 1.0,
        l: 1.0,
        a: num(1.0),
        b: num(0.0),
        kernel: expr("x"),
        forcing: Forcing::Manufactured {
            quad_points: 1 << 15,
        },
        left: num(1.0),
        right: expr("exp(-1/eps)"),
        exact: Some(expr("exp(-x/eps)")),
    }
}

pub fn layer_problem(eps: f64) -> Problem {
    layer_family().at_eps(eps).unwrap()
}

/// Variable coefficients with a kernel that depends on both variables.
pub fn variable_family() -> ProblemFamily {
    ProblemFamily {
        lambda: 0.5,
        l: 1.0,
        a: expr("2+x"),
        b: num(1.0),
        kernel: expr("x*s"),
        forcing: Forcing::Manufactured {
            quad_points: 1 << 15,
        },
        left: expr("1"),
        right: expr("exp(-1/eps)+1"),
        exact: Some(expr("exp(-x/eps)+x^2")),
    }
}

pub fn manufactured(mp: ManufacturedProblem) -> Problem {
    mp.with_exact_boundary().unwrap().into_problem(1 << 15)
}

pub fn det3(m: &[f64; 9]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

// n x n embedded in 3x3 with identity padding
pub fn padded(m: &[f64], n: usize) -> [f64; 9] {
    let mut a = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            a[i * 3 + j] = if i < n && j < n {
                m[i * n + j]
            } else if i == j {
                1.0
            } else {
                0.0
            };
        }
    }
    a
}

pub fn cramer(m: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let a = padded(m, n);
    let mut b = [0.0; 3];
    b[..n].copy_from_slice(rhs);
    let d = det3(&a);
    (0..n)
        .map(|k| {
            let mut ak = a;
            for i in 0..3 {
                ak[i * 3 + k] = b[i];
            }
            det3(&ak) / d
        })
        .collect()
}

pub fn system(max: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-10.0f64..10.0, n * n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

pub fn check_round_trip(e: &Expr) -> Result<(), TestCaseError> {
    let text = e.to_string();
    prop_assert_eq!(&parse(&text).unwrap(), e, "{}", text);
    Ok(())
}

pub fn check_derivative(e: &Expr, x: f64) -> Result<(), TestCaseError> {
    let f = |x: f64| e.eval(&Bindings::new().with(Var::X, x).unwrap());
    let d = e.differentiate(Var::X).unwrap();
    let (Ok(dv), Ok(fx)) = (d.eval(&Bindings::new().with(Var::X, x).unwrap()), f(x)) else {
        return Err(TestCaseError::reject("not finite"));
    };
    let h = 1e-3;
    let vals: Vec<f64> = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| f(x + k * h).unwrap())
        .collect();
    let fd = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h);
    let scale = 1.0 + dv.abs() + fx.abs() + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    prop_assert!((dv - fd).abs() <= 1e-6 * scale, "{}: d={} fd={}", e, dv, fd);
    Ok(())
}

pub fn check_against_cramer(n: usize, m: &[f64], rhs: &[f64]) -> Result<(), TestCaseError> {
    let scale: f64 = m
        .chunks(n)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .product();
    if det3(&padded(m, n)).abs() <= 1e-2 * scale {
        return Err(TestCaseError::reject("nearly singular"));
    }
    let want = cramer(m, n, rhs);
    let got = solve_dense(m, n, rhs).unwrap();
    let size = want.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    for (g, w) in got.iter().zip(&want) {
        prop_assert!((g - w).abs() <= 1e-10 * size, "{:?} vs {:?}", got, want);
    }
    Ok(())
}

pub fn check_trapezoid(n: usize, l: f64, c0: f64, c1: f64) -> Result<(), TestCaseError> {
    let mesh = Mesh::uniform(n, l).unwrap();
    let w = trapezoid_weights(&mesh);
    prop_assert_eq!(w.len(), n + 1);
    let total: f64 = w.iter().sum();
    prop_assert!((total - l).abs() <= 1e-12 * l);
    let q: f64 = w
        .iter()
        .zip(mesh.nodes())
        .map(|(w, x)| w * (c0 + c1 * x))
        .sum();
    let exact = c0 * l + 0.5 * c1 * l * l;
    prop_assert!((q - exact).abs() <= 1e-11 * (c0.abs() * l + c1.abs() * l * l + 1e-300));
    Ok(())
}

pub fn check_sign_pattern(
    a0: f64,
    a1: f64,
    b0: f64,
    eps_exp: i32,
    n: usize,
) -> Result<(), TestCaseError> {
    let p = Problem {
        eps: 2f64.powi(-eps_exp),
        lambda: 0.0,
        l: 1.0,
        a: expr(&format!("{a0}+{a1}*x^2")),
        b: expr(&format!("{b0}*(1+sin(x)^2)")),
        kernel: num(0.0),
        forcing: Forcing::Expr(num(1.0)),
        left: 0.0,
        right: 0.0,
        exact: None,
    };
    let mesh = Mesh::uniform(n, 1.0).unwrap();
    let sys = assemble(&p, &mesh, SchemeKind::Fitted).unwrap();
    prop_assert!(minimum_principle_diagnostic(&sys).holds());
    for st in &sys.differential {
        prop_assert!(st.sum() <= 0.0);
    }
    Ok(())
}

pub fn sign_pattern_inputs() -> impl Strategy<Value = (f64, f64, f64, i32, usize)> {
    (
        0.05f64..5.0,
        0.0f64..3.0,
        0.0f64..5.0,
        0i32..30,
        2usize..200,
    )
}
