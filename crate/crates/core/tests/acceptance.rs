//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};

use common::*;
use spfide::analysis::{lambda_bound_check, minimum_principle_diagnostic, solve_problem};
use spfide::cli::{cmd_compare, Config, RunConfig};
use spfide::scheme::make_mesh;
use spfide::{assemble, run_study, ConvergenceReport, SchemeKind};

const LAYER_EPS: [f64; 5] = [
    1.0,
    1.0 / 64.0,
    1.0 / 4096.0,
    1.0 / 262144.0,
    1.0 / 16777216.0,
];
const LAYER_N: [usize; 5] = [64, 128, 256, 512, 1024];

/// Reference maximum errors for the layer benchmark, `[eps][N]`.
const TABLE: [[f64; 5]; 5] = [
    [7.803e-07, 1.951e-07, 4.877e-08, 1.220e-08, 3.042e-09],
    [4.869e-04, 1.236e-04, 3.102e-05, 7.764e-06, 1.942e-06],
    [2.962e-03, 1.452e-03, 6.818e-04, 2.934e-04, 1.052e-04],
    [3.056e-03, 1.547e-03, 7.776e-04, 3.893e-04, 1.942e-04],
    [3.057e-03, 1.548e-03, 7.792e-04, 3.908e-04, 1.957e-04],
];
const TABLE_UNIFORM_RATES: [f64; 4] = [0.98, 0.99, 1.00, 1.00];

struct Outcome {
    passed: bool,
    detail: String,
}

struct Certificates {
    solves: usize,
    failed: Vec<String>,
}

impl Certificates {
    fn record(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.solves += 1;
        if !ok {
            self.failed.push(what());
        }
    }

    fn report(&mut self, label: &str, r: &ConvergenceReport) {
        for (e, row) in r.records.iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                let ok = cell.record().is_some_and(|rec| rec.residual_certified());
                self.record(
                    || format!("{label} eps={} N={}", r.eps_list[e], r.n_list[k]),
                    ok,
                );
            }
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn layer_rates(certs: &mut Certificates) -> Outcome {
    let start = Instant::now();
    let r = run_study(&layer_family(), &LAYER_EPS, &LAYER_N, SchemeKind::Fitted).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    certs.report("layer", &r);
    let mut problems = Vec::new();
    if r.failures() > 0 {
        problems.push(format!("{} failed cells", r.failures()));
    }
    let rates = |e: usize| -> Vec<f64> {
        r.rates_for(e)
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect()
    };
    let regular = rates(0);
    if !regular.iter().all(|p| (p - 2.0).abs() <= 0.10) {
        problems.push(format!("eps=1 rates [{}]", fmt_list(&regular)));
    }
    for e in [3, 4] {
        let p = rates(e);
        if !p.iter().all(|p| (p - 1.0).abs() <= 0.05) {
            problems.push(format!("eps={:e} rates [{}]", LAYER_EPS[e], fmt_list(&p)));
        }
    }
    let uniform: Vec<f64> = r
        .uniform_rates
        .iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect();
    if !uniform
        .iter()
        .zip(TABLE_UNIFORM_RATES)
        .all(|(p, want)| (p - want).abs() <= 0.05)
    {
        problems.push(format!("uniform rates [{}]", fmt_list(&uniform)));
    }
    let mut worst_factor: f64 = 1.0;
    for (e, row) in TABLE.iter().enumerate() {
        for (k, &want) in row.iter().enumerate() {
            let got = r.cell(e, k).max_error().unwrap_or(f64::NAN);
            let factor = (got / want).max(want / got);
            worst_factor = if factor.is_nan() {
                f64::NAN
            } else {
                worst_factor.max(factor)
            };
        }
    }
    if worst_factor.is_nan() || worst_factor > 3.0 {
        problems.push(format!("error magnitude off by factor {worst_factor:.2}"));
    }
    if elapsed >= 60.0 {
        problems.push(format!("took {elapsed:.1}s"));
    }
    let detail = format!(
        "eps=1 rates [{}], uniform rates [{}], worst error factor {:.2}, E(2^-24,1024)={:.3e}, {:.1}s",
        fmt_list(&regular),
        fmt_list(&uniform),
        worst_factor,
        r.cell(4, 4).max_error().unwrap_or(f64::NAN),
        elapsed
    );
    Outcome {
        passed: problems.is_empty(),
        detail: if problems.is_empty() {
            detail
        } else {
            format!("{}; {detail}", problems.join("; "))
        },
    }
}

fn exactness(certs: &mut Certificates) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for a in [0.5, 1.0, 2.0] {
        for eps in [1.0, 1e-2, 1e-6] {
            for n in [4, 16, 64, 256] {
                for (left, right) in [(1.0, 0.0), (0.0, 1.0), (2.0, -3.0), (-1.5, 0.25)] {
                    let p = constant_homogeneous(a, eps, left, right);
                    let sol = solve_problem(&p, n, SchemeKind::Fitted).unwrap();
                    certs.record(
                        || format!("exactness a={a} eps={eps} N={n}"),
                        sol.residual_certified(),
                    );
                    let (c1, c2) = exponential_fit(a, eps, left, right);
                    let err = sol
                        .mesh
                        .nodes()
                        .iter()
                        .zip(&sol.values)
                        .map(|(x, u)| (u - (c1 + c2 * (-a * x / eps).exp())).abs())
                        .fold(0.0, f64::max);
                    worst = worst.max(err / (c1.abs() + c2.abs()));
                    cases += 1;
                }
            }
        }
    }
    Outcome {
        passed: worst <= 1e-9,
        detail: format!("{cases} solves, worst error / (|C1|+|C2|) = {worst:.2e} (limit 1e-9)"),
    }
}

fn first_order(certs: &mut Certificates) -> (Outcome, String) {
    let eps_list = [1.0, 1e-2, 1e-4, 1e-8];
    let r = run_study(&variable_family(), &eps_list, &LAYER_N, SchemeKind::Fitted).unwrap();
    certs.report("variable", &r);
    let ratios: Vec<f64> = r
        .uniform_errors
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(c), Some(f)) => c / f,
            _ => f64::NAN,
        })
        .collect();
    let halves = ratios.iter().all(|q| (1.6..=2.4).contains(q));
    let per_eps: Vec<String> = (0..eps_list.len())
        .map(|e| {
            let row: Vec<f64> = r.records[e]
                .windows(2)
                .map(|w| {
                    w[0].max_error().unwrap_or(f64::NAN) / w[1].max_error().unwrap_or(f64::NAN)
                })
                .collect();
            format!("eps={:e}: [{}]", eps_list[e], fmt_list(&row))
        })
        .collect();
    let at_least_halves = ratios.iter().all(|&q| q >= 1.6);
    let info = format!(
        "uniform error ratio >= 1.6 at every doubling: {}; per-eps ratios {}",
        if at_least_halves { "yes" } else { "no" },
        per_eps.join(", ")
    );
    (
        Outcome {
            passed: halves,
            detail: format!(
                "uniform error ratios E^N/E^2N [{}] (required 2 +/- 20%)",
                fmt_list(&ratios)
            ),
        },
        info,
    )
}

fn contrast(certs: &mut Certificates) -> Outcome {
    let cfg = Config {
        family: layer_family(),
        eps: None,
        run: RunConfig {
            eps_list: Some(vec![1.0, 1.0 / 262144.0]),
            n_list: Some(vec![64]),
            ..RunConfig::default()
        },
    };
    let out = cmd_compare(&cfg).unwrap();
    certs.report("compare fitted", &out.fitted);
    certs.report("compare standard", &out.standard);
    let regular = out.ratio(0, 0).unwrap_or(f64::NAN);
    let layer = out.ratio(1, 0).unwrap_or(f64::NAN);
    Outcome {
        passed: layer >= 10.0 && (0.2..=5.0).contains(&regular),
        detail: format!("standard/fitted at N=64: eps=1 -> {regular:.3}, eps=2^-18 -> {layer:.1}"),
    }
}

const PROPERTY_CASES: u32 = 1000;

fn properties() -> Outcome {
    fn run<S: Strategy>(
        name: &str,
        strategy: S,
        check: impl Fn(S::Value) -> Result<(), TestCaseError>,
        failures: &mut Vec<String>,
    ) {
        let config = RunnerConfig {
            failure_persistence: None,
            ..RunnerConfig::with_cases(PROPERTY_CASES)
        };
        let mut runner = TestRunner::new(config);
        if let Err(e) = runner.run(&strategy, check) {
            failures.push(format!("{name}: {e}"));
        }
    }
    let mut failures = Vec::new();
    run(
        "parser round trip",
        any_expr(),
        |e| check_round_trip(&e),
        &mut failures,
    );
    run(
        "derivative",
        (smooth_expr(), -1.0f64..1.0),
        |(e, x)| check_derivative(&e, x),
        &mut failures,
    );
    run(
        "lu vs cramer",
        system(3),
        |(n, m, rhs)| check_against_cramer(n, &m, &rhs),
        &mut failures,
    );
    run(
        "trapezoid",
        (2usize..2048, 1e-3f64..100.0, -10.0f64..10.0, -10.0f64..10.0),
        |(n, l, c0, c1)| check_trapezoid(n, l, c0, c1),
        &mut failures,
    );
    run(
        "sign pattern",
        sign_pattern_inputs(),
        |(a0, a1, b0, e, n)| check_sign_pattern(a0, a1, b0, e, n),
        &mut failures,
    );
    Outcome {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("5 properties x {PROPERTY_CASES} cases held")
        } else {
            failures.join("; ")
        },
    }
}

fn diagnostics(certs: &Certificates) -> Outcome {
    let p = layer_problem(1.0);
    let mesh = make_mesh(64, 1.0).unwrap();
    let lb = lambda_bound_check(&p, &mesh).unwrap();
    let p12 = layer_problem(1.0 / 4096.0);
    let sys = assemble(&p12, &mesh, SchemeKind::Fitted).unwrap();
    let signs = minimum_principle_diagnostic(&sys).holds();
    let bound_ok = (lb.bound - 1.0).abs() <= 1e-12 && !lb.satisfied;
    let certs_ok = certs.failed.is_empty();
    let mut detail = format!(
        "lambda bound {:.15} satisfied={}; residual certificate held on {}/{} solves; sign pattern at eps=2^-12 ok={}",
        lb.bound,
        lb.satisfied,
        certs.solves - certs.failed.len(),
        certs.solves,
        signs
    );
    if !certs_ok {
        detail += &format!(" (failed: {})", certs.failed.join(", "));
    }
    Outcome {
        passed: bound_ok && certs_ok && signs,
        detail,
    }
}

fn line(n: usize, name: &str, o: &Outcome) {
    let verdict = if o.passed { "PASS" } else { "FAIL" };
    println!("criterion {n} [{verdict}] {name}: {}", o.detail);
}

fn main() -> ExitCode {
    let mut certs = Certificates {
        solves: 0,
        failed: Vec::new(),
    };
    println!("\nrunning acceptance criteria");
    let c1 = layer_rates(&mut certs);
    line(1, "layer benchmark rates and magnitudes", &c1);
    let c2 = exactness(&mut certs);
    line(2, "exponential exactness", &c2);
    let (c3, info) = first_order(&mut certs);
    line(3, "uniform first-order halving", &c3);
    println!("    info: {info}");
    let c4 = contrast(&mut certs);
    line(4, "fitted vs standard contrast", &c4);
    let c5 = properties();
    line(5, "property suites", &c5);
    let c6 = diagnostics(&certs);
    line(6, "diagnostics", &c6);
    let failed = [&c1, &c2, &c3, &c4, &c5, &c6]
        .iter()
        .filter(|o| !o.passed)
        .count();
    println!("acceptance: {} of 6 criteria passed\n", 6 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
