//! JSON problem configs and the `spfide` command line.
//!
//! ```json
//! {
//!   "problem": {
//!     "eps": 0.015625, "lambda": 1, "l": 1,
//!     "a": "1", "b": "0", "K": "x",
//!     "exact": "exp(-x/eps)",
//!     "A": "1", "B": "exp(-1/eps)"
//!   },
//!   "run": { "N": 64, "eps_list": [1, 0.015625], "N_list": [64, 128] }
//! }
//! ```
//!
//! The forcing is `f` when given; otherwise it is manufactured from `exact`.
//! `A` and `B` may be numbers or expressions in `eps`. Unknown keys are errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{
    lambda_bound_check, max_error, run_study, solve_problem, AnalysisError, Cell, ConvergenceReport,
};
use crate::funcexpr::{parse, Expr};
use crate::linsolve::Solution;
use crate::problem::{Forcing, ProblemFamily, DEFAULT_QUAD_POINTS, MIN_QUAD_POINTS};
use crate::scheme::{Mesh, SchemeKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub eps: Option<f64>,
    pub lambda: f64,
    pub l: f64,
    pub a: String,
    pub b: String,
    #[serde(rename = "K")]
    pub kernel: String,
    pub f: Option<String>,
    pub exact: Option<String>,
    #[serde(rename = "A")]
    pub left: Scalar,
    #[serde(rename = "B")]
    pub right: Scalar,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    #[serde(rename = "N_list")]
    pub n_list: Option<Vec<usize>>,
    pub scheme: Option<SchemeKind>,
    pub quad_points: Option<usize>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// A config whose expressions are parsed and whose problem instances have
/// passed validation for every eps it names.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub family: ProblemFamily,
    pub eps: Option<f64>,
    pub run: RunConfig,
}

pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Config::from_raw(raw)
}

impl Config {
    pub fn from_raw(raw: RawConfig) -> Result<Config, CliError> {
        let mut errors = Vec::new();
        let p = &raw.problem;
        let mut field = |name: &str, text: &str| match parse(text) {
            Ok(e) => Some(e),
            Err(err) => {
                errors.push(format!("{name}: {err}"));
                None
            }
        };
        let scalar =
            |name: &str, s: &Scalar, field: &mut dyn FnMut(&str, &str) -> Option<Expr>| match s {
                Scalar::Number(v) => Some(Expr::num(*v)),
                Scalar::Text(t) => field(name, t),
            };
        let a = field("a", &p.a);
        let b = field("b", &p.b);
        let kernel = field("K", &p.kernel);
        let f = p.f.as_deref().map(|t| field("f", t));
        let exact = p.exact.as_deref().map(|t| field("exact", t));
        let left = scalar("A", &p.left, &mut field);
        let right = scalar("B", &p.right, &mut field);

        let quad_points = raw.run.quad_points.unwrap_or(DEFAULT_QUAD_POINTS);
        if quad_points < MIN_QUAD_POINTS {
            errors.push(format!(
                "quad_points must be at least {MIN_QUAD_POINTS}, got {quad_points}"
            ));
        }
        let forcing = match (&f, &exact) {
            (Some(Some(f)), _) => Some(Forcing::Expr(f.clone())),
            (None, Some(_)) => Some(Forcing::Manufactured { quad_points }),
            (None, None) => {
                errors.push("one of `f` or `exact` is required".into());
                None
            }
            _ => None,
        };

        let mut eps_values: Vec<f64> = p.eps.into_iter().collect();
        eps_values.extend(raw.run.eps_list.iter().flatten());
        if eps_values.is_empty() {
            errors.push("missing field `eps` (or `run.eps_list`)".into());
        }

        let (Some(a), Some(b), Some(kernel), Some(forcing), Some(left), Some(right)) =
            (a, b, kernel, forcing, left, right)
        else {
            return Err(CliError::Invalid(errors));
        };
        let family = ProblemFamily {
            lambda: p.lambda,
            l: p.l,
            a,
            b,
            kernel,
            forcing,
            left,
            right,
            exact: exact.flatten(),
        };
        for eps in eps_values {
            match family.at_eps(eps) {
                Ok(instance) => {
                    for v in instance.validate().violations {
                        let msg = format!("eps={eps}: {v}");
                        if !errors.contains(&msg) {
                            errors.push(msg);
                        }
                    }
                }
                Err(err) => errors.push(format!("eps={eps}: {err}")),
            }
        }
        if errors.is_empty() {
            Ok(Config {
                family,
                eps: p.eps,
                run: raw.run,
            })
        } else {
            Err(CliError::Invalid(errors))
        }
    }

    pub fn set_quad_points(&mut self, quad_points: usize) -> Result<(), CliError> {
        if quad_points < MIN_QUAD_POINTS {
            return Err(CliError::Invalid(vec![format!(
                "quad_points must be at least {MIN_QUAD_POINTS}, got {quad_points}"
            )]));
        }
        self.run.quad_points = Some(quad_points);
        if let Forcing::Manufactured { quad_points: q } = &mut self.family.forcing {
            *q = quad_points;
        }
        Ok(())
    }

    pub fn scheme(&self) -> SchemeKind {
        self.run.scheme.unwrap_or(SchemeKind::Fitted)
    }

    fn study_grid(&self) -> Result<(Vec<f64>, Vec<usize>), CliError> {
        let eps_list = self
            .run
            .eps_list
            .clone()
            .or_else(|| self.eps.map(|e| vec![e]));
        let n_list = self
            .run
            .n_list
            .clone()
            .or_else(|| self.run.n.map(|n| vec![n]));
        match (eps_list, n_list) {
            (Some(e), Some(n)) => Ok((e, n)),
            _ => Err(CliError::Invalid(vec![
                "a study needs `run.eps_list` and `run.N_list`".into(),
            ])),
        }
    }
}

/// C-style `%.3e`: three decimals and a signed exponent of at least two digits.
pub fn format_error(v: f64) -> String {
    let s = format!("{v:.3e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            format!("{mantissa}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

pub fn format_rate(v: f64) -> String {
    format!("{v:.2}")
}

/// `2^-6` for powers of two, plain decimal otherwise.
pub fn format_eps(eps: f64) -> String {
    let k = eps.log2().round();
    if k.abs() < 1100.0 && 2f64.powi(k as i32) == eps {
        format!("2^{}", k as i32)
    } else {
        format!("{eps:e}")
    }
}

pub struct SolveOutcome {
    pub solution: Solution,
    pub csv: String,
    pub diagnostics: Vec<String>,
}

pub fn cmd_solve(cfg: &Config) -> Result<SolveOutcome, CliError> {
    let eps = cfg
        .eps
        .ok_or_else(|| CliError::Invalid(vec!["missing field `eps`".into()]))?;
    let n = cfg
        .run
        .n
        .ok_or_else(|| CliError::Invalid(vec!["missing field `run.N`".into()]))?;
    let p = cfg.family.at_eps(eps).map_err(AnalysisError::from)?;
    let kind = cfg.scheme();
    let sol = solve_problem(&p, n, kind)?;

    let mut diagnostics = Vec::new();
    let certified = if sol.residual_certified() {
        "certified"
    } else {
        "NOT certified"
    };
    diagnostics.push(format!(
        "residual |Mu - F|_inf = {:e} (bound {:e}, {certified})",
        sol.residual_inf, sol.residual_bound
    ));
    let mesh = Mesh::uniform(n, p.l).map_err(AnalysisError::from)?;
    diagnostics.push(lambda_diagnostic(&lambda_bound_check(&p, &mesh)?));

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    match &p.exact {
        Some(exact) => {
            w.write_record(["x", "u", "exact", "error"])?;
            for (&x, &u) in sol.mesh.nodes().iter().zip(&sol.values) {
                let ue = p
                    .exact_at(x)
                    .expect("exact present")
                    .map_err(AnalysisError::from)?;
                w.write_record([
                    format!("{x:e}"),
                    format!("{u:e}"),
                    format!("{ue:e}"),
                    format!("{:e}", (u - ue).abs()),
                ])?;
            }
            let err = max_error(&sol, exact, eps).map_err(AnalysisError::from)?;
            diagnostics.push(format!("max nodal error = {}", format_error(err)));
        }
        None => {
            w.write_record(["x", "u"])?;
            for (&x, &u) in sol.mesh.nodes().iter().zip(&sol.values) {
                w.write_record([format!("{x:e}"), format!("{u:e}")])?;
            }
        }
    }
    Ok(SolveOutcome {
        solution: sol,
        csv: into_string(w)?,
        diagnostics,
    })
}

fn lambda_diagnostic(lb: &crate::analysis::LambdaBound) -> String {
    if lb.satisfied {
        lb.to_string()
    } else {
        format!("warning: {lb}; uniform convergence is not guaranteed")
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub struct StudyOutcome {
    pub report: ConvergenceReport,
    pub markdown: String,
    pub csv: String,
    pub diagnostics: Vec<String>,
}

impl StudyOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.failures() > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

fn study_diagnostics(cfg: &Config, eps_list: &[f64], n_list: &[usize]) -> Vec<String> {
    let finest = *n_list.iter().max().expect("non-empty N_list");
    let check = cfg
        .family
        .at_eps(eps_list[0])
        .map_err(AnalysisError::from)
        .and_then(|p| {
            let mesh = Mesh::uniform(finest, p.l)?;
            lambda_bound_check(&p, &mesh)
        });
    match check {
        Ok(lb) => vec![lambda_diagnostic(&lb)],
        Err(err) => vec![format!("lambda bound check skipped: {err}")],
    }
}

pub fn cmd_study(cfg: &Config) -> Result<StudyOutcome, CliError> {
    let (eps_list, n_list) = cfg.study_grid()?;
    let report = run_study(&cfg.family, &eps_list, &n_list, cfg.scheme())?;
    let mut diagnostics = study_diagnostics(cfg, &eps_list, &n_list);
    let uncertified = report
        .records
        .iter()
        .flatten()
        .filter_map(Cell::record)
        .filter(|r| !r.residual_certified())
        .count();
    if uncertified > 0 {
        diagnostics.push(format!(
            "warning: {uncertified} solves exceeded the residual certificate"
        ));
    }
    for (e, row) in report.records.iter().enumerate() {
        for (k, cell) in row.iter().enumerate() {
            if let Cell::Failed(msg) = cell {
                diagnostics.push(format!(
                    "eps={} N={} failed: {msg}",
                    report.eps_list[e], report.n_list[k]
                ));
            }
        }
    }
    let markdown = format!("### {} scheme\n\n{}", report.kind, study_markdown(&report));
    let csv = study_csv(&report)?;
    Ok(StudyOutcome {
        report,
        markdown,
        csv,
        diagnostics,
    })
}

fn md_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from("|");
    for c in cells {
        let _ = write!(s, " {c} |");
    }
    s.push('\n');
    s
}

/// Error rows in `%.3e`, rate rows in `%.2f`, then the uniform `E^N`/`P^N` rows.
pub fn study_markdown(report: &ConvergenceReport) -> String {
    let cols = report.n_list.len();
    let with_rates = cols > 1;
    let opt_rate = |r: Option<f64>| r.map(format_rate).unwrap_or_else(|| "-".into());
    let mut out = md_row(
        std::iter::once("ε".to_string()).chain(report.n_list.iter().map(|n| format!("N={n}"))),
    );
    out += &md_row(std::iter::once(":--".to_string()).chain((0..cols).map(|_| "--:".to_string())));
    for (e, row) in report.records.iter().enumerate() {
        out += &md_row(
            std::iter::once(format_eps(report.eps_list[e])).chain(row.iter().map(|c| match c {
                Cell::Solved(r) => format_error(r.max_error),
                Cell::Failed(_) => "FAIL".into(),
            })),
        );
        if with_rates {
            let rates = report.rates_for(e).into_iter().map(opt_rate);
            out += &md_row(
                std::iter::once(String::new())
                    .chain(rates)
                    .chain(std::iter::once(String::new())),
            );
        }
    }
    out += &md_row(
        std::iter::once("E^N".to_string()).chain(
            report
                .uniform_errors
                .iter()
                .map(|e| e.map(format_error).unwrap_or_else(|| "FAIL".into())),
        ),
    );
    if with_rates {
        out += &md_row(
            std::iter::once("P^N".to_string())
                .chain(report.uniform_rates.iter().copied().map(opt_rate))
                .chain(std::iter::once(String::new())),
        );
    }
    out
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Raw grid at full precision; the Markdown table is a formatting of these values.
pub fn study_csv(report: &ConvergenceReport) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["eps", "N", "max_error", "rate", "residual_inf", "status"])?;
    for (e, row) in report.records.iter().enumerate() {
        for (k, cell) in row.iter().enumerate() {
            let (eps, n) = (
                format!("{:e}", report.eps_list[e]),
                report.n_list[k].to_string(),
            );
            match cell {
                Cell::Solved(r) => w.write_record([
                    eps,
                    n,
                    format!("{:e}", r.max_error),
                    opt_num(r.rate),
                    format!("{:e}", r.residual_inf),
                    "ok".into(),
                ])?,
                Cell::Failed(_) => w.write_record([
                    eps,
                    n,
                    String::new(),
                    String::new(),
                    String::new(),
                    "FAIL".into(),
                ])?,
            }
        }
    }
    for (k, n) in report.n_list.iter().enumerate() {
        let status = if report.uniform_errors[k].is_some() {
            "ok"
        } else {
            "FAIL"
        };
        w.write_record([
            "uniform".to_string(),
            n.to_string(),
            opt_num(report.uniform_errors[k]),
            opt_num(report.uniform_rates.get(k).copied().flatten()),
            String::new(),
            status.into(),
        ])?;
    }
    into_string(w)
}

pub struct CompareOutcome {
    pub fitted: ConvergenceReport,
    pub standard: ConvergenceReport,
    pub markdown: String,
    pub csv: String,
    pub diagnostics: Vec<String>,
}

impl CompareOutcome {
    /// standard error / fitted error for one cell.
    pub fn ratio(&self, eps_index: usize, n_index: usize) -> Option<f64> {
        let f = self.fitted.cell(eps_index, n_index).max_error()?;
        let s = self.standard.cell(eps_index, n_index).max_error()?;
        Some(s / f)
    }

    pub fn exit_code(&self) -> i32 {
        if self.fitted.failures() + self.standard.failures() > 0 {
            EXIT_PARTIAL
        } else {
            EXIT_OK
        }
    }
}

pub fn cmd_compare(cfg: &Config) -> Result<CompareOutcome, CliError> {
    let (eps_list, n_list) = cfg.study_grid()?;
    let fitted = run_study(&cfg.family, &eps_list, &n_list, SchemeKind::Fitted)?;
    let standard = run_study(&cfg.family, &eps_list, &n_list, SchemeKind::Standard)?;
    let diagnostics = study_diagnostics(cfg, &eps_list, &n_list);
    let mut outcome = CompareOutcome {
        fitted,
        standard,
        markdown: String::new(),
        csv: String::new(),
        diagnostics,
    };

    let mut md = String::new();
    for r in [&outcome.fitted, &outcome.standard] {
        let _ = write!(md, "### {} scheme\n\n{}\n", r.kind, study_markdown(r));
    }
    md += "### error ratio (standard / fitted)\n\n";
    md += &md_row(std::iter::once("ε".to_string()).chain(n_list.iter().map(|n| format!("N={n}"))));
    md +=
        &md_row(std::iter::once(":--".to_string()).chain(n_list.iter().map(|_| "--:".to_string())));
    for (e, &eps) in eps_list.iter().enumerate() {
        md += &md_row(
            std::iter::once(format_eps(eps)).chain((0..n_list.len()).map(|k| {
                outcome
                    .ratio(e, k)
                    .map(format_rate)
                    .unwrap_or_else(|| "FAIL".into())
            })),
        );
    }

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["eps", "N", "fitted_error", "standard_error", "ratio"])?;
    for (e, &eps) in eps_list.iter().enumerate() {
        for (k, &n) in n_list.iter().enumerate() {
            w.write_record([
                format!("{eps:e}"),
                n.to_string(),
                opt_num(outcome.fitted.cell(e, k).max_error()),
                opt_num(outcome.standard.cell(e, k).max_error()),
                opt_num(outcome.ratio(e, k)),
            ])?;
        }
    }
    outcome.markdown = md;
    outcome.csv = into_string(w)?;
    Ok(outcome)
}

#[derive(Debug, Parser)]
#[command(
    name = "spfide",
    version,
    about = "Fitted difference solver for singularly perturbed Fredholm integro-differential problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Trapezoid intervals for manufactured forcing.
    #[arg(long)]
    quad_points: Option<usize>,
    /// Difference scheme.
    #[arg(long)]
    scheme: Option<SchemeKind>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and write the nodal solution as CSV.
    Solve {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a convergence study over `eps_list` x `N_list`.
    Study {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the study with both schemes and tabulate the error ratio.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn prepare(path: &Path, overrides: &Overrides) -> Result<Config, CliError> {
    let mut cfg = load_config(path)?;
    if let Some(q) = overrides.quad_points {
        cfg.set_quad_points(q)?;
    }
    if let Some(kind) = overrides.scheme {
        cfg.run.scheme = Some(kind);
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit_tables(
    out_dir: Option<&Path>,
    stem: &str,
    markdown: &str,
    csv: &str,
) -> Result<(), CliError> {
    if let Some(dir) = out_dir {
        write_file(&dir.join(format!("{stem}.md")), markdown)?;
        write_file(&dir.join(format!("{stem}.csv")), csv)?;
        eprintln!(
            "wrote {} and {}",
            dir.join(format!("{stem}.md")).display(),
            dir.join(format!("{stem}.csv")).display()
        );
    }
    print!("{markdown}");
    io::stdout().flush().ok();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve {
            config,
            out,
            overrides,
        } => {
            let cfg = prepare(&config, &overrides)?;
            let outcome = cmd_solve(&cfg)?;
            for d in &outcome.diagnostics {
                eprintln!("{d}");
            }
            match out.or(cfg.run.out.clone()) {
                Some(path) => write_file(&path, &outcome.csv)?,
                None => print!("{}", outcome.csv),
            }
            Ok(EXIT_OK)
        }
        Command::Study {
            config,
            out_dir,
            overrides,
        } => {
            let cfg = prepare(&config, &overrides)?;
            let outcome = cmd_study(&cfg)?;
            for d in &outcome.diagnostics {
                eprintln!("{d}");
            }
            emit_tables(
                out_dir.or(cfg.run.out_dir.clone()).as_deref(),
                "study",
                &outcome.markdown,
                &outcome.csv,
            )?;
            Ok(outcome.exit_code())
        }
        Command::Compare {
            config,
            out_dir,
            overrides,
        } => {
            let cfg = prepare(&config, &overrides)?;
            let outcome = cmd_compare(&cfg)?;
            for d in &outcome.diagnostics {
                eprintln!("{d}");
            }
            emit_tables(
                out_dir.or(cfg.run.out_dir.clone()).as_deref(),
                "compare",
                &outcome.markdown,
                &outcome.csv,
            )?;
            Ok(outcome.exit_code())
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}
