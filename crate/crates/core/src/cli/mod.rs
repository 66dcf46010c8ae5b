//! Config-driven command line front end.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 schema or input error,
//! 3 numerical failure. Failures print one JSON object on stderr.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::geometry::{locate, BoundaryMap, Region};
use crate::kernel::{free_kernel, periodic_kernel_with_tail, remainder_kernel};
use crate::neumann::{lambda_minus_for_contrast, series_solve, NeumannOperators, SeriesConfig};
use crate::potentials::{jump_check, splitting_check, DensityGrid};
use crate::sensitivity::{fd_operator_derivative, fd_solution_derivative, ProbeReport, SolutionDirection};
use crate::transmission::{
    contrast, fitted_order, manufactured_ladder, ConvergenceRow, Side, SmoothDensity, TransmissionData,
};
use crate::Error;
pub use config::{ExperimentConfig, LoadedConfig};
use config::{DirectionSpec, KernelChoice, Pipeline, ProbeTarget, SolveMethod};

pub const OUTPUT_DIR_ENV: &str = "PERHEAT_OUTPUT_DIR";
pub const THREADS_ENV: &str = "PERHEAT_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Schema { field: String, message: String },
    Numerical { message: String, diagnostics: Value },
    Io { path: String, message: String },
}

impl CliError {
    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>, diagnostics: Value) -> Self {
        CliError::Numerical {
            message: message.into(),
            diagnostics,
        }
    }

    /// Classify a library error; `context` names the config field in play.
    pub fn from_core(e: Error, context: &str) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidInput { field, .. } => {
                let field = match field {
                    "lambda_plus" | "lambda_minus" | "lambda0_plus" | "lambda0_minus" | "T" | "N" | "M" => {
                        field.to_string()
                    }
                    _ if context.is_empty() => field.to_string(),
                    _ => format!("{context}.{field}"),
                };
                CliError::schema(field, message)
            }
            Error::InvalidMap(_) => CliError::schema("map", message),
            Error::ShapeMismatch { .. } => CliError::schema(context, message),
            Error::TooCloseToBoundary { index, .. } | Error::RegionMismatch { index, .. } => {
                CliError::schema(format!("targets[{index}]"), message)
            }
            Error::OutsideValidity { .. } | Error::LatticeSingular => CliError::schema(context, message),
            Error::TruncationFailed { tail_tol, max_shell } => CliError::numerical(
                message,
                json!({"kind": "truncation_failed", "tail_tol": tail_tol, "max_shell": max_shell}),
            ),
            Error::SingularBlock { condition } => CliError::numerical(
                message,
                json!({"kind": "singular_block", "condition": finite_or_null(condition)}),
            ),
            Error::ExtrapolationFailed { slab, node } => CliError::numerical(
                message,
                json!({"kind": "extrapolation_failed", "slab": slab, "node": node}),
            ),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Schema { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CliError::Schema { field, message } => json!({"error": "schema", "field": field, "message": message}),
            CliError::Numerical { message, diagnostics } => {
                json!({"error": "numerical", "message": message, "diagnostics": diagnostics})
            }
            CliError::Io { path, message } => json!({"error": "io", "path": path, "message": message}),
        }
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

trait Context<T> {
    fn at(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for crate::Result<T> {
    fn at(self, context: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(e, context))
    }
}

#[derive(Debug, Parser)]
#[command(name = "perheat", version, about = "Heat-equation boundary integrals in space-periodic domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config and $PERHEAT_OUTPUT_DIR.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; overrides $PERHEAT_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Periodic, free or remainder kernel at configured points.
    KernelEval,
    /// Compare assembled Vq with V plus the remainder operator.
    SplitCheck,
    /// Extrapolated boundary limits against the jump formulas.
    JumpCheck,
    /// Solve the transmission problem.
    Solve,
    /// Truncated series in the contrast around λ±₀.
    Neumann,
    /// Central-difference probes of shape or λ⁻ dependence.
    ShapeDerivative,
    /// Error table over a refinement ladder.
    Converge,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelEval => "kernel-eval",
            Command::SplitCheck => "split-check",
            Command::JumpCheck => "jump-check",
            Command::Solve => "solve",
            Command::Neumann => "neumann",
            Command::ShapeDerivative => "shape-derivative",
            Command::Converge => "converge",
        }
    }
}

/// Parse arguments, run, report; returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli) -> Result<Value, CliError> {
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::schema(THREADS_ENV, format!("not a thread count: {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let loaded = match &cli.config {
        Some(path) => LoadedConfig::from_path(path)?,
        None => LoadedConfig::new(ExperimentConfig::default(), PathBuf::new())?,
    };
    let out_dir = cli
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| loaded.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    run(cli.command, &loaded, &out_dir)
}

/// Run one pipeline, writing its CSV files into `out_dir`; returns the JSON summary.
pub fn run(command: Command, loaded: &LoadedConfig, out_dir: &Path) -> Result<Value, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let ctx = RunContext { loaded, out_dir };
    let mut summary = match command {
        Command::KernelEval => kernel_eval(&ctx),
        Command::SplitCheck => split_check(&ctx),
        Command::JumpCheck => jump(&ctx),
        Command::Solve => solve(&ctx),
        Command::Neumann => neumann(&ctx),
        Command::ShapeDerivative => shape_derivative(&ctx),
        Command::Converge => converge(&ctx),
    }?;
    summary["command"] = json!(command.name());
    summary["config_sha256"] = json!(loaded.sha256);
    summary["seed"] = json!(loaded.config.seed);
    Ok(summary)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

struct RunContext<'a> {
    loaded: &'a LoadedConfig,
    out_dir: &'a Path,
}

impl RunContext<'_> {
    fn cfg(&self) -> &ExperimentConfig {
        &self.loaded.config
    }

    /// Writes a CSV with a provenance comment, extra comment lines and a header row.
    fn write_csv(&self, name: &str, notes: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
        let mut text = format!(
            "# perheat {} config_sha256={} seed={}\n",
            env!("CARGO_PKG_VERSION"),
            self.loaded.sha256,
            self.cfg().seed
        );
        for note in notes {
            let _ = writeln!(text, "# {note}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| io_error(Path::new(name), e))?;
        for row in rows {
            w.write_record(row).map_err(|e| io_error(Path::new(name), e))?;
        }
        let body = w.into_inner().map_err(|e| io_error(Path::new(name), e))?;
        text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        let path = self.out_dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path.display().to_string())
    }
}

/// Shortest round-trip representation, with −0 printed as 0.
fn f(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:?}")
}

/// The serde name of a unit enum value.
fn name<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn kernel_eval(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let dim = cfg.cell.dim();
    let mut points = cfg.kernel.points.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.kernel.random {
        let t = 10f64.powf(rng.gen_range(-2.0..0.0));
        let mut p = vec![t];
        p.extend(cfg.cell.q().iter().map(|q| rng.gen_range(0.0..*q)));
        points.push(p);
    }
    if points.is_empty() {
        return Err(CliError::schema("kernel.points", "no evaluation points"));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let field = format!("kernel.points[{i}]");
        let (t, x) = (p[0], &p[1..]);
        let (value, tail) = match cfg.kernel.which {
            KernelChoice::Periodic => {
                let v = periodic_kernel_with_tail(t, x, &cfg.cell, &cfg.lattice).at(&field)?;
                (v.value, v.est_tail)
            }
            KernelChoice::Free => (free_kernel(t, x).at(&field)?, 0.0),
            KernelChoice::Remainder => (remainder_kernel(t, x, &cfg.cell, &cfg.lattice).at(&field)?, 0.0),
        };
        let mut row = vec![f(t)];
        row.extend(x.iter().map(|v| f(*v)));
        row.push(f(value));
        row.push(f(tail));
        rows.push(row);
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|d| format!("x{d}")));
    header.push("value".into());
    header.push("est_tail".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let file = ctx.write_csv("kernel.csv", &[format!("kernel={}", name(&cfg.kernel.which))], &header, &rows)?;
    Ok(json!({"points": points.len(), "files": [file]}))
}

fn split_check(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let grid = setup.grid(cfg.n).at("")?;
    let tg = setup.time_grid(cfg.m).at("")?;
    let report = splitting_check(&grid, &tg, &setup.cell, &setup.lattice).at("")?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|&(k, i, e)| vec![k.to_string(), i.to_string(), f(e)])
        .collect();
    let file = ctx.write_csv("split.csv", &[], &["k", "i", "error"], &rows)?;
    let tolerance = cfg.tolerance.unwrap_or(1e-10);
    let summary = json!({
        "max_abs_discrepancy": report.max_abs_discrepancy,
        "tolerance": tolerance,
        "files": [file],
    });
    if !(report.max_abs_discrepancy < tolerance) {
        return Err(CliError::numerical("splitting discrepancy above tolerance", summary));
    }
    Ok(summary)
}

fn jump(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let grid = setup.grid(cfg.n).at("")?;
    let tg = setup.time_grid(cfg.m).at("")?;
    let rho = cfg.jump.density.grid("jump.density", &tg, &grid.s, &ctx.loaded.base_dir)?;
    let report = jump_check(cfg.jump.kind, &grid, &tg, &setup.cell, &setup.lattice, &rho).at("jump")?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.k.to_string(), r.i.to_string(), f(r.error), f(r.plus_error), f(r.minus_error)])
        .collect();
    let file = ctx.write_csv(
        "jump.csv",
        &[format!("jump={}", name(&cfg.jump.kind))],
        &["k", "i", "error", "plus_error", "minus_error"],
        &rows,
    )?;
    let summary = json!({
        "max_error": report.max_error,
        "max_side_error": report.max_side_error,
        "files": [file],
    });
    if let Some(tol) = cfg.tolerance {
        if !(report.max_error < tol) {
            return Err(CliError::numerical("jump error above tolerance", summary));
        }
    }
    Ok(summary)
}

fn transmission_data(ctx: &RunContext, tg: &crate::potentials::TimeGrid, s: &[f64]) -> Result<TransmissionData, CliError> {
    let cfg = ctx.cfg();
    Ok(TransmissionData {
        lambda_plus: cfg.lambda_plus,
        lambda_minus: cfg.lambda_minus,
        f: cfg.f_spec.grid("f_spec", tg, s, &ctx.loaded.base_dir)?,
        g: cfg.g_spec.grid("g_spec", tg, s, &ctx.loaded.base_dir)?,
    })
}

fn solve(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let sys = setup.system(cfg.n, cfg.m).at("")?;
    let data = transmission_data(ctx, &sys.tg, &sys.grid.s)?;
    let sol = match cfg.method {
        SolveMethod::Full => sys.solve_full(&data),
        SolveMethod::Reduced => sys.solve_reduced(&data),
    }
    .at("")?;
    let residuals = sys.residuals(&sol, &data).at("")?;

    let mut rows = Vec::with_capacity(cfg.m * cfg.n);
    for k in 0..cfg.m {
        for i in 0..cfg.n {
            rows.push(vec![
                k.to_string(),
                i.to_string(),
                f(sys.tg.slab_end(k)),
                f(sys.grid.s[i]),
                f(sol.rho_plus.get(k, i)),
                f(sol.rho_minus.get(k, i)),
            ]);
        }
    }
    let mut files = vec![ctx.write_csv(
        "densities.csv",
        &[format!("method={} lambda_plus={:?} lambda_minus={:?}", name(&cfg.method), cfg.lambda_plus, cfg.lambda_minus)],
        &["k", "i", "t", "s", "rho_plus", "rho_minus"],
        &rows,
    )?];

    if !cfg.targets.is_empty() {
        let mut values = Vec::with_capacity(cfg.targets.len());
        for (index, p) in cfg.targets.iter().enumerate() {
            let x = [p[1], p[2]];
            let side = match locate(&x, &sys.grid, &sys.cell) {
                Region::Interior => Side::Plus,
                Region::Exterior => Side::Minus,
                Region::NearBoundary => {
                    return Err(CliError::schema(
                        format!("targets[{index}]"),
                        "target lies within the boundary safety radius",
                    ))
                }
            };
            let v = sys.eval_solution(&sol, side, &[(p[0], x)]).at("targets")?;
            values.push(vec![
                index.to_string(),
                f(p[0]),
                f(p[1]),
                f(p[2]),
                match side {
                    Side::Plus => "plus".into(),
                    Side::Minus => "minus".into(),
                },
                f(v[0]),
            ]);
        }
        files.push(ctx.write_csv("field.csv", &[], &["index", "t", "x", "y", "side", "value"], &values)?);
    }
    let res_rows = vec![
        vec!["trace_max".into(), f(residuals.trace_max)],
        vec!["trace_l2".into(), f(residuals.trace_l2)],
        vec!["flux_max".into(), f(residuals.flux_max)],
        vec!["flux_l2".into(), f(residuals.flux_l2)],
    ];
    files.push(ctx.write_csv("residuals.csv", &[], &["quantity", "value"], &res_rows)?);
    Ok(json!({
        "residuals": residuals,
        "conditions": sol.conditions,
        "files": files,
    }))
}

fn neumann(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let sys = setup.system(cfg.n, cfg.m).at("")?;
    let l0p = cfg.lambda0_plus.unwrap_or(cfg.lambda_plus);
    let l0m = cfg.lambda0_minus.unwrap_or(cfg.lambda_minus);
    let ops = NeumannOperators::new(sys.wstar.clone(), l0p, l0m).at("")?;
    let epsilon = ops.epsilon(cfg.norm).at("")?;
    let lc0 = ops.base_contrast();
    let lambda_minus = match cfg.ratio_target {
        None => cfg.lambda_minus,
        Some(r) => {
            if !epsilon.is_finite() {
                return Err(CliError::schema("ratio_target", "radius estimate is unbounded"));
            }
            // step away from λ_c₀ on whichever side stays inside (−1, 1)
            let step = r * epsilon;
            let lc = if lc0 - step > -1.0 { lc0 - step } else { lc0 + step };
            lambda_minus_for_contrast(cfg.lambda_plus, lc).map_err(|_| {
                CliError::schema("ratio_target", format!("contrast offset {step} leaves (-1, 1) on both sides"))
            })?
        }
    };
    let data = TransmissionData {
        lambda_minus,
        ..transmission_data(ctx, &sys.tg, &sys.grid.s)?
    };
    let sc = SeriesConfig {
        lambda0_plus: l0p,
        lambda0_minus: l0m,
        lambda_plus: cfg.lambda_plus,
        lambda_minus,
        terms: cfg.terms,
        norm: cfg.norm,
    };
    let result = series_solve(&sys, &data, &sc).at("")?;
    let direct = sys.solve_reduced(&data).at("")?;
    let errors = result.partial_errors(&direct.rho_minus);
    let rows: Vec<Vec<String>> = result
        .term_norms
        .iter()
        .zip(&errors)
        .enumerate()
        .map(|(j, (n, e))| vec![j.to_string(), f(*n), f(*e)])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let probes: Vec<DensityGrid> = (0..3)
        .map(|_| {
            let v = (0..cfg.m * cfg.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            DensityGrid::from_values(cfg.m, cfg.n, v).expect("shape")
        })
        .collect();
    let factorization = ops.factorization_check(result.contrast, &probes).at("")?;
    let eps_text = if epsilon.is_finite() { f(epsilon) } else { "unbounded".into() };
    let file = ctx.write_csv(
        "neumann.csv",
        &[format!(
            "epsilon={eps_text} base_contrast={:?} contrast={:?} within_radius={}",
            lc0, result.contrast, result.within_radius
        )],
        &["j", "term_norm", "partial_error_vs_direct"],
        &rows,
    )?;
    Ok(json!({
        "epsilon": if epsilon.is_finite() { json!(epsilon) } else { json!("unbounded") },
        "base_contrast": lc0,
        "contrast": result.contrast,
        "lambda_minus": lambda_minus,
        "within_radius": result.within_radius,
        "factorization_discrepancy": factorization,
        "files": [file],
    }))
}

fn direction_map(spec: &DirectionSpec, shape: &crate::geometry::ReferenceShape) -> Option<BoundaryMap> {
    match spec {
        DirectionSpec::Dilation => Some(BoundaryMap::dilation(shape)),
        DirectionSpec::Translation { c } => Some(BoundaryMap::translation(*c)),
        DirectionSpec::Map { map } => Some(map.clone()),
        DirectionSpec::LambdaMinus => None,
    }
}

fn probe_rows(r: &ProbeReport) -> Vec<Vec<String>> {
    (0..r.h.len())
        .map(|m| {
            vec![
                f(r.h[m]),
                f(r.quotient_norms[m]),
                opt(r.second_differences[m]),
                opt(r.orders[m]),
            ]
        })
        .collect()
}

fn shape_derivative(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let probe = &cfg.probe;
    let report = match probe.target {
        ProbeTarget::Operator => {
            let dir = direction_map(&probe.direction, &setup.shape).ok_or_else(|| {
                CliError::schema("probe.direction", "operator probes need a shape direction")
            })?;
            dir.validate_shape().at("probe.direction")?;
            let grid = setup.grid(cfg.n).at("")?;
            let tg = setup.time_grid(cfg.m).at("")?;
            let mu = probe.density.grid("probe.density", &tg, &grid.s, &ctx.loaded.base_dir)?;
            fd_operator_derivative(&setup, &dir, probe.operator, &mu, cfg.m, &probe.h).at("probe")?
        }
        ProbeTarget::Solution => {
            if cfg.targets.is_empty() {
                return Err(CliError::schema("targets", "solution probes need at least one target"));
            }
            let dir = match direction_map(&probe.direction, &setup.shape) {
                Some(map) => {
                    map.validate_shape().at("probe.direction")?;
                    SolutionDirection::Shape(map)
                }
                None => SolutionDirection::LambdaMinus,
            };
            let grid = setup.grid(cfg.n).at("")?;
            let tg = setup.time_grid(cfg.m).at("")?;
            let data = transmission_data(ctx, &tg, &grid.s)?;
            let targets: Vec<(f64, [f64; 2])> = cfg.targets.iter().map(|p| (p[0], [p[1], p[2]])).collect();
            fd_solution_derivative(&setup, &dir, &data, &targets, &probe.h).at("probe")?
        }
    };
    let file = ctx.write_csv(
        "shape_derivative.csv",
        &[
            "action on one fixed density or target set, grid max-norm".to_string(),
            format!("noise_floor={:?} order_threshold={:?} pass={}", report.noise_floor, report.order_threshold, report.pass),
        ],
        &["h", "quotient_norm", "second_difference", "observed_order"],
        &probe_rows(&report),
    )?;
    Ok(json!({
        "pass": report.pass,
        "orders": report.orders,
        "noise_floor": report.noise_floor,
        "files": [file],
    }))
}

fn converge(ctx: &RunContext) -> Result<Value, CliError> {
    let cfg = ctx.cfg();
    let setup = cfg.setup()?;
    let ladder: Vec<(usize, usize)> = cfg.converge.ladder.iter().map(|r| (r[0], r[1])).collect();
    let rows: Vec<ConvergenceRow> = match cfg.converge.pipeline {
        Pipeline::JumpCheck => {
            let mut errs = Vec::with_capacity(ladder.len());
            for &(n, m) in &ladder {
                let grid = setup.grid(n).at("converge.ladder")?;
                let tg = setup.time_grid(m).at("converge.ladder")?;
                let rho = cfg.jump.density.grid("jump.density", &tg, &grid.s, &ctx.loaded.base_dir)?;
                let r = jump_check(cfg.jump.kind, &grid, &tg, &setup.cell, &setup.lattice, &rho).at("jump")?;
                errs.push(ConvergenceRow {
                    n,
                    m,
                    error: r.max_error,
                    order: None,
                });
            }
            for r in 1..errs.len() {
                let ratio = (errs[r].n as f64 / errs[r - 1].n as f64).max(errs[r].m as f64 / errs[r - 1].m as f64);
                errs[r].order = Some((errs[r - 1].error / errs[r].error).ln() / ratio.ln());
            }
            errs
        }
        Pipeline::Manufactured => {
            let n_max = ladder.iter().map(|r| r.0).max().unwrap_or(0);
            let m_max = ladder.iter().map(|r| r.1).max().unwrap_or(0);
            let varies = |f: fn(&(usize, usize)) -> usize| ladder.iter().any(|r| f(r) != f(&ladder[0]));
            let reference = match cfg.converge.reference {
                Some([n, m]) => (n, m),
                None => (
                    if varies(|r| r.0) { 2 * n_max } else { n_max },
                    if varies(|r| r.1) { 8 * m_max } else { m_max },
                ),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mp = SmoothDensity::random(&mut rng, 1, cfg.t_end);
            let mm = SmoothDensity::random(&mut rng, 2, cfg.t_end);
            contrast(cfg.lambda_plus, cfg.lambda_minus).at("")?;
            manufactured_ladder(&setup, &ladder, reference, &mp, &mm, cfg.lambda_plus, cfg.lambda_minus)
                .at("converge")?
        }
    };
    let single = rows.len() == 1;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.n.to_string(), r.m.to_string(), f(r.error)];
            if !single {
                row.push(opt(r.order));
            }
            row
        })
        .collect();
    let header: &[&str] = if single {
        &["N", "M", "error"]
    } else {
        &["N", "M", "error", "observed_order"]
    };
    let file = ctx.write_csv(
        "converge.csv",
        &[format!("pipeline={}", name(&cfg.converge.pipeline))],
        header,
        &table,
    )?;
    let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
    let fitted = fitted_order(&rows, |r| (r.n as f64).max(r.m as f64));
    Ok(json!({
        "rows": rows,
        "monotone": monotone,
        "fitted_order": fitted,
        "files": [file],
    }))
}
