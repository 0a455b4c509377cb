//! Command-line front end: `project`, `qp` and `bench`.
//!
//! Exit codes: 0 when every instance converged, 1 on usage, parse or I/O
//! errors, 2 when a solver ran but did not reach the tolerance (or failed).
//! Any flag can also be given as a key of a JSON file passed with
//! `--config`; flags on the command line take precedence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::instances::{
    build_relaxation, bundled_qaplib, gaussian_kernel, load_qaplib, make_q_operator, parse_libsvm, random_gaussian,
    FeatureSet, QapInstance,
};
use crate::projector::{apg_project, ssncg1_project, ProjectionResult, SsnSettings, DEFAULT_APG_MAXIT};
use crate::qpsolver::{alm_solve, AlmSettings, QpResult};
use crate::report::{
    load_matrix, loglog_fit, recompute_eta, save_matrix, Artifacts, ProblemKind, ReportRow, RowStatus, RunReport,
};
use crate::DenseMatrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;

pub const DEFAULT_PROJECT_TOL: f64 = 1e-9;
pub const DEFAULT_QP_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(
    name = "birkhoff",
    version,
    about = "Projection onto the Birkhoff polytope and QPs over it"
)]
pub struct Cli {
    /// JSON file with default values for any flag (same key names).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project one matrix onto the Birkhoff polytope.
    Project(ProjectArgs),
    /// Solve the convex QAP relaxation of a QAPLIB instance.
    Qp(QpArgs),
    /// Run a benchmark sweep.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Ssncg,
    Apg,
}

impl SolverKind {
    fn id(self) -> &'static str {
        match self {
            SolverKind::Ssncg => "ssncg",
            SolverKind::Apg => "apg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ProjRandom,
    ProjKernel,
    Qap,
}

impl Suite {
    fn id(self) -> &'static str {
        match self {
            Suite::ProjRandom => "proj-random",
            Suite::ProjKernel => "proj-kernel",
            Suite::Qap => "qap",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct ProjectArgs {
    /// Matrix file: the size n, then n rows of n numbers.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Standard normal matrix, given as `n,seed`.
    #[arg(long, value_name = "N,SEED")]
    pub random: Option<String>,
    /// Gaussian kernel of a LIBSVM feature file.
    #[arg(long, value_name = "FILE")]
    pub kernel: Option<PathBuf>,
    /// Projection solver [default: ssncg].
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Target relative KKT residual [default: 1e-9].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap [default: 1000 for ssncg, 20000 for apg].
    #[arg(long)]
    pub maxit: Option<usize>,
    /// Report path; `.json` selects JSON, anything else CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Write the projected matrix here.
    #[arg(long, value_name = "PATH")]
    pub dump_x: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct QpArgs {
    /// QAPLIB instance file.
    #[arg(long, value_name = "FILE")]
    pub qaplib: Option<PathBuf>,
    /// Target relative KKT residual [default: 1e-7].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Report path; `.json` selects JSON, anything else CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Initial penalty parameter.
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Cap on augmented Lagrangian iterations.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Write the relaxation minimizer here.
    #[arg(long, value_name = "PATH")]
    pub dump_x: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct BenchArgs {
    /// Which sweep to run.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Comma-separated sizes (row subsets for proj-kernel).
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated seeds [default: 1].
    #[arg(long)]
    pub seeds: Option<String>,
    /// Input files for proj-kernel (LIBSVM) and qap (QAPLIB, default: bundled).
    #[arg(long, num_args = 1.., value_name = "FILE")]
    pub inputs: Option<Vec<PathBuf>>,
    /// Projection solver [default: ssncg].
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    /// Target relative KKT residual [default: 1e-9, 1e-7 for qap].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory for `<suite>.csv` and `<suite>_summary.json`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// List given either as `"1,2,3"` or as a JSON array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Text(String),
    Items(Vec<u64>),
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub random: Option<String>,
    pub kernel: Option<PathBuf>,
    pub solver: Option<SolverKind>,
    pub tol: Option<f64>,
    pub maxit: Option<usize>,
    pub out: Option<PathBuf>,
    pub dump_x: Option<PathBuf>,
    pub qaplib: Option<PathBuf>,
    pub sigma0: Option<f64>,
    pub max_outer: Option<usize>,
    pub suite: Option<Suite>,
    pub sizes: Option<ListValue>,
    pub seeds: Option<ListValue>,
    pub inputs: Option<Vec<PathBuf>>,
    /// Overrides for the projector.
    pub ssn: Option<SsnSettings>,
    /// Overrides for the QP solver.
    pub alm: Option<AlmSettings>,
}

/// Usage, parse and I/O problems; all map to exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, UsageError> {
    let cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<ConfigFile>(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Project(a) => cmd_project(a, &cfg),
        Command::Qp(a) => cmd_qp(a, &cfg),
        Command::Bench(a) => cmd_bench(a, &cfg),
    }
}

fn check_tol(tol: f64) -> Result<f64, UsageError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        usage(format!("--tol must be positive, got {tol}"))
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<u64>, UsageError> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return usage(format!("{what} list is empty"));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| UsageError(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn resolve_list(flag: &Option<String>, cfg: &Option<ListValue>, what: &str) -> Result<Option<Vec<u64>>, UsageError> {
    let list = match (flag, cfg) {
        (Some(t), _) | (None, Some(ListValue::Text(t))) => parse_list(t, what)?,
        (None, Some(ListValue::Items(v))) => v.clone(),
        (None, None) => return Ok(None),
    };
    if list.is_empty() {
        return usage(format!("{what} list is empty"));
    }
    Ok(Some(list))
}

fn parse_random_spec(spec: &str) -> Result<(usize, u64), UsageError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [n, seed] => {
            let n: usize = n
                .parse()
                .map_err(|_| UsageError(format!("bad size in --random {spec:?}")))?;
            let seed: u64 = seed
                .parse()
                .map_err(|_| UsageError(format!("bad seed in --random {spec:?}")))?;
            if n == 0 {
                return usage("--random size must be positive");
            }
            Ok((n, seed))
        }
        _ => usage(format!("--random expects n,seed, got {spec:?}")),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string()
}

fn emit(report: &RunReport, out: Option<&Path>) -> Result<(), UsageError> {
    match out {
        Some(p) => report.write(p).map_err(|e| UsageError(format!("{}: {e}", p.display()))),
        None => {
            print!("{}", report.to_csv()?);
            Ok(())
        }
    }
}

fn exit_for(report: &RunReport) -> i32 {
    if report.all_converged() {
        EXIT_OK
    } else {
        EXIT_UNCONVERGED
    }
}

fn log_row(r: &ReportRow) {
    let eta = r.eta.map_or("-".into(), |e| format!("{e:.2e}"));
    eprintln!(
        "{} n={} {}: {} outer / {} inner, eta {eta}, {:.3}s [{}]",
        r.name, r.n, r.solver, r.outer_iters, r.inner_iters, r.time_s, r.status.as_str()
    );
    if let Some(msg) = &r.error {
        eprintln!("  error: {msg}");
    }
}

/// Projection solve with the residual recomputed from `(X, y)`.
fn solve_projection(
    name: &str,
    g: &DenseMatrix,
    solver: SolverKind,
    settings: &SsnSettings,
    apg_maxit: usize,
) -> (ReportRow, Option<ProjectionResult>) {
    let n = g.nrows();
    let start = Instant::now();
    let res = match solver {
        SolverKind::Ssncg => ssncg1_project(g, settings, None),
        SolverKind::Apg => apg_project(g, settings.tol_eta, apg_maxit),
    };
    let time_s = start.elapsed().as_secs_f64();
    let r = match res {
        Ok(r) => r,
        Err(e) => return (ReportRow::failed(name, n, solver.id(), time_s, &e), None),
    };
    let art = Artifacts {
        g: Some(g),
        x: Some(&r.x),
        y: Some(&r.y),
        q: None,
    };
    let row = match recompute_eta(ProblemKind::Projection, &art) {
        Ok(k) => ReportRow {
            name: name.to_string(),
            n,
            solver: solver.id().to_string(),
            outer_iters: r.iterations,
            inner_iters: r.total_cg_iters,
            eta: Some(k.eta),
            eta_p: k.eta_p,
            time_s,
            status: if k.eta <= settings.tol_eta {
                RowStatus::Converged
            } else {
                RowStatus::Unconverged
            },
            bound: None,
            lower_bound: None,
            error: None,
        },
        Err(e) => ReportRow::failed(name, n, solver.id(), time_s, &e),
    };
    (row, Some(r))
}

/// Relaxation solve for one instance; the summary carries bound data.
fn solve_qap(inst: &QapInstance, tol: f64, settings: &AlmSettings) -> (ReportRow, Option<QpResult>, serde_json::Value) {
    let n = inst.n;
    let fail = |e: &crate::Error| ReportRow::failed(inst.name.clone(), n, "alm-ssncg", 0.0, e);
    let rd = match build_relaxation(inst) {
        Ok(rd) => rd,
        Err(e) => return (fail(&e), None, json!(null)),
    };
    let mut summary = json!({
        "name": inst.name,
        "lp_value": rd.lp_value(),
        "lp_max_violation": rd.lp_max_violation(),
        "assignment_value": rd.assignment_value(),
        "raw_asymmetry": inst.raw_asymmetry,
    });
    let q = match make_q_operator(&rd, inst) {
        Ok(q) => q,
        Err(e) => return (fail(&e), None, summary),
    };
    let g = DenseMatrix::zeros(n, n);
    let start = Instant::now();
    let res = alm_solve(&g, &q, tol, settings);
    let time_s = start.elapsed().as_secs_f64();
    let res = match res {
        Ok(r) => r,
        Err(e) => {
            let mut row = fail(&e);
            row.time_s = time_s;
            return (row, None, summary);
        }
    };
    let art = Artifacts {
        g: Some(&g),
        x: Some(&res.x),
        q: Some(&q),
        ..Default::default()
    };
    let mut row = match recompute_eta(ProblemKind::Qp, &art) {
        Ok(k) => ReportRow {
            name: inst.name.clone(),
            n,
            solver: "alm-ssncg".into(),
            outer_iters: res.outer_iters,
            inner_iters: res.inner_iters,
            eta: Some(k.eta),
            eta_p: None,
            time_s,
            status: if k.eta <= tol {
                RowStatus::Converged
            } else {
                RowStatus::Unconverged
            },
            bound: None,
            lower_bound: None,
            error: None,
        },
        Err(e) => {
            let mut row = fail(&e);
            row.time_s = time_s;
            row
        }
    };
    if let Ok(quad) = q.quad(&res.x) {
        row.bound = Some(quad);
        row.lower_bound = Some(quad + rd.lp_value());
        summary["bound"] = json!(quad);
        summary["lower_bound"] = json!(quad + rd.lp_value());
    }
    summary["dual_objective"] = json!(2.0 * res.dual_objective + rd.lp_value());
    (row, Some(res), summary)
}

fn projection_settings(cfg: &ConfigFile, tol: f64, maxit: Option<usize>) -> Result<SsnSettings, UsageError> {
    let mut s = cfg.ssn.clone().unwrap_or_default();
    s.tol_eta = tol;
    if let Some(m) = maxit {
        s.maxit = m;
    }
    s.validate()?;
    Ok(s)
}

fn qp_settings(cfg: &ConfigFile, sigma0: Option<f64>, max_outer: Option<usize>) -> Result<AlmSettings, UsageError> {
    let mut s = cfg.alm.clone().unwrap_or_default();
    if let Some(v) = sigma0 {
        s.sigma0 = v;
        s.sigma_max = s.sigma_max.max(v);
    }
    if let Some(v) = max_outer {
        s.max_outer = v;
        s.max_outer_zero_q = v;
    }
    s.validate()?;
    Ok(s)
}

fn cmd_project(a: ProjectArgs, cfg: &ConfigFile) -> Result<i32, UsageError> {
    let solver = a.solver.or(cfg.solver).unwrap_or(SolverKind::Ssncg);
    let tol = check_tol(a.tol.or(cfg.tol).unwrap_or(DEFAULT_PROJECT_TOL))?;
    let maxit = a.maxit.or(cfg.maxit);
    let settings = projection_settings(cfg, tol, maxit)?;
    let apg_maxit = maxit.unwrap_or(DEFAULT_APG_MAXIT);
    let input = a.input.or_else(|| cfg.input.clone());
    let random = a.random.or_else(|| cfg.random.clone());
    let kernel = a.kernel.or_else(|| cfg.kernel.clone());
    let out = a.out.or_else(|| cfg.out.clone());
    let dump_x = a.dump_x.or_else(|| cfg.dump_x.clone());

    let given = [input.is_some(), random.is_some(), kernel.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return usage("give exactly one of --input, --random, --kernel");
    }
    let (name, g, source) = if let Some(p) = &input {
        let g = load_matrix(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
        (stem(p), g, json!({"input": p}))
    } else if let Some(spec) = &random {
        let (n, seed) = parse_random_spec(spec)?;
        (
            format!("rand-{n}-{seed}"),
            random_gaussian(n, seed)?,
            json!({"random": {"n": n, "seed": seed}}),
        )
    } else {
        let p = kernel.as_ref().expect("one source is set");
        let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
        let fs = parse_libsvm(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
        let g = gaussian_kernel(&fs).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
        (stem(p), g, json!({"kernel": p}))
    };

    let mut config = json!({"source": source, "solver": solver.id(), "tol": tol});
    match solver {
        SolverKind::Ssncg => config["ssn"] = serde_json::to_value(&settings)?,
        SolverKind::Apg => config["apg_maxit"] = json!(apg_maxit),
    }
    let mut report = RunReport::new("project", config);
    let (row, res) = solve_projection(&name, &g, solver, &settings, apg_maxit);
    log_row(&row);
    report.rows.push(row);
    if let (Some(p), Some(r)) = (&dump_x, &res) {
        save_matrix(p, &r.x).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
    }
    emit(&report, out.as_deref())?;
    Ok(exit_for(&report))
}

fn cmd_qp(a: QpArgs, cfg: &ConfigFile) -> Result<i32, UsageError> {
    let Some(path) = a.qaplib.or_else(|| cfg.qaplib.clone()) else {
        return usage("--qaplib is required");
    };
    let tol = check_tol(a.tol.or(cfg.tol).unwrap_or(DEFAULT_QP_TOL))?;
    let settings = qp_settings(cfg, a.sigma0.or(cfg.sigma0), a.max_outer.or(cfg.max_outer))?;
    let out = a.out.or_else(|| cfg.out.clone());
    let dump_x = a.dump_x.or_else(|| cfg.dump_x.clone());
    let inst = load_qaplib(&path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;

    let config = json!({"qaplib": path, "tol": tol, "alm": serde_json::to_value(&settings)?});
    let mut report = RunReport::new("qp", config);
    let (row, res, summary) = solve_qap(&inst, tol, &settings);
    log_row(&row);
    if let Some(lb) = row.lower_bound {
        eprintln!(
            "  lower bound {lb:.10e} (<X, QX> = {:.10e})",
            row.bound.unwrap_or(f64::NAN)
        );
    }
    report.rows.push(row);
    report.summary = Some(summary);
    if let (Some(p), Some(r)) = (&dump_x, &res) {
        save_matrix(p, &r.x).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
    }
    emit(&report, out.as_deref())?;
    Ok(exit_for(&report))
}

fn first_rows(fs: &FeatureSet, m: usize) -> FeatureSet {
    FeatureSet {
        rows: fs.rows[..m].to_vec(),
        labels: fs.labels[..m].to_vec(),
    }
}

/// Random instances are generated only when their turn comes.
enum Job {
    Random(usize, u64),
    Matrix(DenseMatrix),
}

fn cmd_bench(a: BenchArgs, cfg: &ConfigFile) -> Result<i32, UsageError> {
    let Some(suite) = a.suite.or(cfg.suite) else {
        return usage("--suite is required");
    };
    let sizes = resolve_list(&a.sizes, &cfg.sizes, "size")?;
    let seeds = resolve_list(&a.seeds, &cfg.seeds, "seed")?.unwrap_or_else(|| vec![1]);
    let inputs = a.inputs.or_else(|| cfg.inputs.clone()).unwrap_or_default();
    let solver = a.solver.or(cfg.solver).unwrap_or(SolverKind::Ssncg);
    let default_tol = if suite == Suite::Qap {
        DEFAULT_QP_TOL
    } else {
        DEFAULT_PROJECT_TOL
    };
    let tol = check_tol(a.tol.or(cfg.tol).unwrap_or(default_tol))?;
    let out = a.out.or_else(|| cfg.out.clone());
    if sizes.as_ref().is_some_and(|s| s.contains(&0)) {
        return usage("sizes must be positive");
    }

    let mut config = json!({"suite": suite.id(), "tol": tol, "sizes": sizes, "seeds": seeds, "inputs": inputs});
    let mut report;
    let mut summaries = Vec::new();
    match suite {
        Suite::ProjRandom | Suite::ProjKernel => {
            let settings = projection_settings(cfg, tol, cfg.maxit)?;
            let apg_maxit = cfg.maxit.unwrap_or(DEFAULT_APG_MAXIT);
            config["solver"] = json!(solver.id());
            config["ssn"] = serde_json::to_value(&settings)?;
            report = RunReport::new("bench", config);
            let mut jobs: Vec<(String, Job)> = Vec::new();
            if suite == Suite::ProjRandom {
                let Some(sizes) = &sizes else {
                    return usage("--sizes is required for proj-random");
                };
                for &n in sizes {
                    for &seed in &seeds {
                        jobs.push((format!("rand-{n}-{seed}"), Job::Random(n as usize, seed)));
                    }
                }
            } else {
                if inputs.is_empty() {
                    return usage("proj-kernel needs --inputs with LIBSVM files");
                }
                for p in &inputs {
                    let text = std::fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
                    let fs = parse_libsvm(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
                    let subsets: Vec<usize> = match &sizes {
                        Some(s) => s.iter().map(|&m| (m as usize).min(fs.len())).collect(),
                        None => vec![fs.len()],
                    };
                    for m in subsets {
                        let g = gaussian_kernel(&first_rows(&fs, m))
                            .map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
                        jobs.push((format!("{}-{m}", stem(p)), Job::Matrix(g)));
                    }
                }
            }
            for (name, job) in jobs {
                let g = match job {
                    Job::Random(n, seed) => random_gaussian(n, seed)?,
                    Job::Matrix(g) => g,
                };
                let (row, _) = solve_projection(&name, &g, solver, &settings, apg_maxit);
                log_row(&row);
                report.rows.push(row);
            }
        }
        Suite::Qap => {
            let settings = qp_settings(cfg, cfg.sigma0, cfg.max_outer)?;
            config["alm"] = serde_json::to_value(&settings)?;
            report = RunReport::new("bench", config);
            let instances = if inputs.is_empty() {
                bundled_qaplib()?
            } else {
                inputs
                    .iter()
                    .map(|p| load_qaplib(p).map_err(|e| UsageError(format!("{}: {e}", p.display()))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            for inst in &instances {
                let (row, _, summary) = solve_qap(inst, tol, &settings);
                log_row(&row);
                report.rows.push(row);
                summaries.push(summary);
            }
        }
    }

    let ok: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| r.status == RowStatus::Converged)
        .collect();
    let ns: Vec<f64> = ok.iter().map(|r| r.n as f64).collect();
    let ts: Vec<f64> = ok.iter().map(|r| r.time_s).collect();
    let fit = loglog_fit(&ns, &ts)
        .map(|(slope, intercept)| json!({"slope": slope, "intercept": intercept, "points": ns.len()}));
    let failed = report.rows.len() - ok.len();
    report.summary = Some(
        json!({"suite": suite.id(), "rows": report.rows.len(), "failed": failed, "fit": fit, "instances": summaries}),
    );
    if let Some(f) = &fit {
        eprintln!(
            "log-log fit of time vs n: slope {:.3}",
            f["slope"].as_f64().unwrap_or(f64::NAN)
        );
    }

    match &out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| UsageError(format!("{}: {e}", dir.display())))?;
            let csv = dir.join(format!("{}.csv", suite.id()));
            let js = dir.join(format!("{}_summary.json", suite.id()));
            std::fs::write(&csv, report.to_csv()?).map_err(|e| UsageError(format!("{}: {e}", csv.display())))?;
            std::fs::write(&js, report.to_json()?).map_err(|e| UsageError(format!("{}: {e}", js.display())))?;
        }
        None => print!("{}", report.to_csv()?),
    }
    Ok(exit_for(&report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("500, 1000,2000", "size").unwrap(), vec![500, 1000, 2000]);
        assert!(parse_list("", "size").is_err());
        assert!(parse_list(" , ", "size").is_err());
        assert!(parse_list("1,x", "size").is_err());
        assert_eq!(
            resolve_list(&None, &Some(ListValue::Items(vec![3, 4])), "s").unwrap(),
            Some(vec![3, 4])
        );
        assert!(resolve_list(&None, &Some(ListValue::Items(vec![])), "s").is_err());
        assert_eq!(resolve_list(&None, &None, "s").unwrap(), None);
    }

    #[test]
    fn random_spec() {
        assert_eq!(parse_random_spec("1000,42").unwrap(), (1000, 42));
        assert!(parse_random_spec("1000").is_err());
        assert!(parse_random_spec("0,1").is_err());
        assert!(parse_random_spec("a,1").is_err());
    }

    #[test]
    fn config_keys_match_flags() {
        let cfg: ConfigFile = serde_json::from_str(
            r#"{"random": "5,1", "solver": "apg", "tol": 1e-8, "dump-x": "x.mat", "sizes": [1, 2],
                "suite": "proj-random", "ssn": {"maxit": 7}, "alm": {"sigma0": 2.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.solver, Some(SolverKind::Apg));
        assert_eq!(cfg.suite, Some(Suite::ProjRandom));
        assert_eq!(cfg.ssn.unwrap().maxit, 7);
        assert_eq!(cfg.alm.unwrap().sigma0, 2.0);
        assert!(serde_json::from_str::<ConfigFile>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["birkhoff"]), EXIT_USAGE);
        assert_eq!(run(["birkhoff", "project"]), EXIT_USAGE);
        assert_eq!(
            run(["birkhoff", "project", "--random", "4,1", "--input", "x"]),
            EXIT_USAGE
        );
        assert_eq!(run(["birkhoff", "project", "--random", "4,1", "--tol=-1"]), EXIT_USAGE);
        assert_eq!(
            run(["birkhoff", "bench", "--suite", "proj-random", "--sizes", ""]),
            EXIT_USAGE
        );
        assert_eq!(run(["birkhoff", "qp"]), EXIT_USAGE);
        assert_eq!(run(["birkhoff", "--help"]), EXIT_OK);
    }
}
