//! `lagfib`: command-line front end for the lagfib library.
//!
//! One subcommand per module; structured-text outputs with one record per
//! line; deterministic for a fixed configuration and seed. Exit codes:
//! 0 success, 1 check failure, 2 input error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lagfib::base::{build_expanded, Cell};
use lagfib::diagnostics::{
    boundary_weight, calibration_ratio, gh_distortion, metric_limit_check, phase_specialty,
    ricci_flat_trend, volume_fraction, Sweep,
};
use lagfib::dual_complex::{
    classify_faces, essential_set, essential_skeleton, pseudomanifold_check, FaceClass,
};
use lagfib::flow::{radius_zero_fiber, transport, AdmissiblePath};
use lagfib::hybrid::{basic_functions, ChartId, HybridPoint, Model};
use lagfib::kahler::{
    cplus, ddc_sharp_check, metric_g, omega_q, pairing_check, potential_flat, restrict_form,
    torus_basis, BasisKind, FormParams,
};
use lagfib::model_file::{load_model, LoadedModel};
use lagfib::Error;

/// Environment variable naming the default directory for model files.
const MODEL_DIR_ENV: &str = "LAGFIB_MODEL_DIR";

#[derive(Parser)]
#[command(
    name = "lagfib",
    version,
    about = "Skeletons, hybrid coordinates, fiberwise Kähler forms, symplectic transport, and collapse diagnostics for degenerating families"
)]
struct Cli {
    /// JSON config file supplying defaults; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed, recorded in the output header for reproducibility.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Essential skeleton of a degeneration: essential set, face
    /// classification, pseudomanifold check.
    Skeleton(SkeletonArgs),
    /// Expanded skeleton: rounded simplices glued to ivy graphs.
    Expand(ExpandArgs),
    /// Basic coordinate functions at a point.
    Eval(EvalArgs),
    /// The form family ω_q^ε at a point, with optional identity checks.
    EvalForm(EvalFormArgs),
    /// Transport a torus fiber from radius zero to a target radius.
    Trace(TraceArgs),
    /// Collapse diagnostics along a radius sweep.
    Diagnose(DiagnoseArgs),
    /// Run the full invariant suite for a model.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SkeletonArgs {
    /// Model file (resolved against $LAGFIB_MODEL_DIR if not found as-is).
    #[arg(long)]
    model: Option<String>,
    /// Report the essential set and the maximal faces it spans.
    #[arg(long)]
    essential: bool,
    /// Emit one classified record per face.
    #[arg(long)]
    classify: bool,
    /// Run the closed-pseudomanifold check (exit 1 on failure).
    #[arg(long)]
    pseudomanifold: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    model: Option<String>,
    /// File receiving the full complex as a JSON document.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<String>,
    /// Point spec, e.g. "t=0.05;w=0.3,0.7;theta=0.1,0.2[;chart=vertex:0]".
    #[arg(long)]
    point: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalFormArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    point: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Identity check to run at the point.
    #[arg(long, value_enum)]
    check: Option<CheckKind>,
    /// Tolerance override for the check.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Pairing,
    Potential,
    Cplus,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    model: Option<String>,
    /// Base weights of the starting fiber, e.g. "w=0.3,0.7".
    #[arg(long)]
    base: Option<String>,
    /// Total-angle level of the fiber.
    #[arg(long)]
    theta: Option<f64>,
    /// Admissible path, e.g. "t=h,q=h^2" or "q=1".
    #[arg(long)]
    path: Option<String>,
    /// Target radius.
    #[arg(long)]
    h: Option<f64>,
    /// Samples per fiber circle.
    #[arg(long)]
    grid: Option<usize>,
    /// Integration steps.
    #[arg(long)]
    steps: Option<usize>,
    /// CSV output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Model file; defaults to the built-in local_snc n=1 model.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long)]
    path: Option<String>,
    /// Radius schedule, e.g. "geometric:1e-1,1e-4,8".
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    /// Base weights for fiber-bound suites, e.g. "w=0.4,0.6".
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    Metric,
    Gh,
    Volume,
    Cplus,
    Phase,
    Calibration,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad input: unreadable or invalid files, malformed flags, unmet
    /// preconditions. Exit 2.
    Input(String),
    /// A check failed or a computation broke down. Exit 1.
    Check(String),
}

type CliResult<T> = Result<T, CliError>;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn check_err(e: impl std::fmt::Display) -> CliError {
    CliError::Check(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Defaults loaded from the optional config file; flags override fields.
#[derive(Default)]
struct Config {
    model: Option<String>,
    out: Option<PathBuf>,
    eps: Option<f64>,
    q: Option<f64>,
    grid: Option<usize>,
    steps: Option<usize>,
    schedule: Option<String>,
    path: Option<String>,
    tol: Option<f64>,
    seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_err(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| input_err(format!("invalid config {}: {e}", path.display())))?;
    let obj = v
        .as_object()
        .ok_or_else(|| input_err(format!("config {} must be an object", path.display())))?;
    let get_f64 = |k: &str| obj.get(k).and_then(Value::as_f64);
    let get_usize = |k: &str| obj.get(k).and_then(Value::as_u64).map(|u| u as usize);
    let get_str = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    Ok(Config {
        model: get_str("model"),
        out: get_str("out").map(PathBuf::from),
        eps: get_f64("eps"),
        q: get_f64("q"),
        grid: get_usize("grid"),
        steps: get_usize("steps"),
        schedule: get_str("schedule"),
        path: get_str("path"),
        tol: get_f64("tol"),
        seed: obj.get("seed").and_then(Value::as_u64),
    })
}

/// Resolves a model reference: a path as given, or a name looked up in the
/// directory named by $LAGFIB_MODEL_DIR (with and without ".json").
fn resolve_model(reference: &str) -> CliResult<LoadedModel> {
    let direct = Path::new(reference);
    let mut candidates: Vec<PathBuf> = vec![direct.to_path_buf()];
    if let Ok(dir) = std::env::var(MODEL_DIR_ENV) {
        let dir = Path::new(&dir);
        candidates.push(dir.join(reference));
        candidates.push(dir.join(format!("{reference}.json")));
    }
    for c in &candidates {
        if c.is_file() {
            return load_model(c).map_err(input_err);
        }
    }
    Err(input_err(format!(
        "model `{reference}` not found (tried {:?}; set {MODEL_DIR_ENV} for name lookup)",
        candidates
    )))
}

fn require_model(flag: Option<&str>, cfg: &Config) -> CliResult<LoadedModel> {
    let reference = flag
        .or(cfg.model.as_deref())
        .ok_or_else(|| input_err("no model given: pass --model or set it in the config"))?;
    resolve_model(reference)
}

fn require_geometry(loaded: &LoadedModel) -> CliResult<&Model> {
    loaded.geometry.as_ref().ok_or_else(|| {
        input_err(format!(
            "model `{}` has no registered chart atlas; this operation needs one",
            loaded.name
        ))
    })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Line-oriented structured output, buffered so runs are byte-identical.
struct Writer {
    out: Option<PathBuf>,
    buffer: String,
}

impl Writer {
    fn new(out: Option<PathBuf>) -> Self {
        Writer {
            out,
            buffer: String::new(),
        }
    }

    fn record(&mut self, v: Value) {
        // serde_json's compact form with sorted keys (Value maps are
        // BTreeMaps) keeps reruns byte-identical.
        let _ = writeln!(self.buffer, "{v}");
    }

    fn line(&mut self, s: &str) {
        let _ = writeln!(self.buffer, "{s}");
    }

    fn finish(self) -> CliResult<()> {
        match self.out {
            None => {
                print!("{}", self.buffer);
                Ok(())
            }
            Some(path) => std::fs::write(&path, self.buffer)
                .map_err(|e| input_err(format!("cannot write {}: {e}", path.display()))),
        }
    }
}

fn header(cmd: &str, loaded: &LoadedModel, seed: u64, params: Value) -> Value {
    json!({
        "record": "run",
        "command": cmd,
        "model": loaded.name,
        "seed": seed,
        "params": params,
    })
}

fn tagged(record: &str, data: impl serde::Serialize) -> Value {
    let mut v = serde_json::to_value(data).expect("records serialize");
    if let Value::Object(map) = &mut v {
        map.insert("record".into(), Value::String(record.into()));
    }
    v
}

// ---------------------------------------------------------------------------
// Point and base parsing
// ---------------------------------------------------------------------------

fn parse_floats(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| input_err(format!("`{s}` is not a number")))
        })
        .collect()
}

fn parse_chart(text: &str) -> CliResult<ChartId> {
    if text == "snc" {
        return Ok(ChartId::LocalSnc);
    }
    if let Some(a) = text.strip_prefix("vertex:") {
        let a = a
            .parse()
            .map_err(|_| input_err(format!("bad vertex chart `{text}`")))?;
        return Ok(ChartId::HesseVertex { a });
    }
    if let Some(rest) = text.strip_prefix("edge:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            let line = parts[0]
                .parse()
                .map_err(|_| input_err(format!("bad edge chart `{text}`")))?;
            let other = parts[1]
                .parse()
                .map_err(|_| input_err(format!("bad edge chart `{text}`")))?;
            return Ok(ChartId::HesseEdge { line, other });
        }
    }
    Err(input_err(format!(
        "unknown chart `{text}` (expected `snc`, `vertex:A`, or `edge:B,C`)"
    )))
}

fn chart_label(chart: ChartId) -> String {
    match chart {
        ChartId::LocalSnc => "snc".into(),
        ChartId::HesseVertex { a } => format!("vertex:{a}"),
        ChartId::HesseEdge { line, other } => format!("edge:{line},{other}"),
    }
}

/// Parses "t=..;w=..,..;theta=..,..[;chart=..]" into a point of a maximal
/// chart. Fields may also be separated by whitespace.
fn parse_point(model: &Model, spec: &str) -> CliResult<HybridPoint> {
    let mut t: Option<f64> = None;
    let mut w: Option<Vec<f64>> = None;
    let mut theta: Option<Vec<f64>> = None;
    let mut chart = model.maximal_charts()[0];
    for field in spec.split(|c: char| c == ';' || c.is_whitespace()) {
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| input_err(format!("point field `{field}` is not key=value")))?;
        match key {
            "t" => {
                t = Some(
                    value
                        .parse()
                        .map_err(|_| input_err(format!("bad t `{value}`")))?,
                )
            }
            "w" => w = Some(parse_floats(value)?),
            "theta" => theta = Some(parse_floats(value)?),
            "chart" => chart = parse_chart(value)?,
            other => return Err(input_err(format!("unknown point field `{other}`"))),
        }
    }
    let t = t.ok_or_else(|| input_err("point spec needs t=..."))?;
    let w = w.ok_or_else(|| input_err("point spec needs w=..."))?;
    let theta = theta.unwrap_or_else(|| vec![0.0; w.len()]);
    HybridPoint::in_maximal_chart(model, chart, t, &w, &theta).map_err(input_err)
}

fn point_label(p: &HybridPoint) -> String {
    format!(
        "chart={} t={} w={:?} theta={:?}",
        chart_label(p.chart),
        p.t,
        p.w,
        p.angles
    )
}

fn parse_base(text: Option<&str>, k: usize) -> CliResult<Vec<f64>> {
    let Some(text) = text else {
        return Ok(vec![1.0 / k as f64; k]);
    };
    let text = text.strip_prefix("w=").unwrap_or(text);
    let w = parse_floats(text)?;
    if w.len() != k {
        return Err(input_err(format!(
            "base has {} weights, the model needs {k}",
            w.len()
        )));
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    match cli.cmd {
        Cmd::Skeleton(args) => cmd_skeleton(args, &cfg, seed),
        Cmd::Expand(args) => cmd_expand(args, &cfg, seed),
        Cmd::Eval(args) => cmd_eval(args, &cfg, seed),
        Cmd::EvalForm(args) => cmd_eval_form(args, &cfg, seed),
        Cmd::Trace(args) => cmd_trace(args, &cfg, seed),
        Cmd::Diagnose(args) => cmd_diagnose(args, &cfg, seed),
        Cmd::Verify(args) => cmd_verify(args, &cfg, seed),
    }
}

fn cmd_skeleton(args: SkeletonArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let sk = essential_skeleton(&loaded.degeneration).map_err(input_err)?;
    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    w.record(header("skeleton", &loaded, seed, json!({})));
    w.record(json!({
        "record": "skeleton",
        "n": loaded.degeneration.n,
        "components": loaded.degeneration.components.len(),
        "faces": sk.faces.len(),
        "dim": sk.dim(),
    }));
    if args.essential {
        let essential: Vec<u32> = essential_set(&loaded.degeneration)
            .map_err(input_err)?
            .into_iter()
            .collect();
        let maximal: Vec<Vec<u32>> = classify_faces(&sk)
            .into_iter()
            .filter(|(_, c)| *c == FaceClass::Maximal)
            .map(|(f, _)| f.into_iter().collect())
            .collect();
        w.record(json!({
            "record": "essential",
            "ids": essential,
            "maximal_faces": maximal,
        }));
    }
    if args.classify {
        for (face, class) in classify_faces(&sk) {
            let label = match class {
                FaceClass::Maximal => "maximal",
                FaceClass::Submaximal => "submaximal",
                FaceClass::Lower => "lower",
            };
            let ids: Vec<u32> = face.into_iter().collect();
            w.record(json!({"record": "face", "ids": ids, "class": label}));
        }
    }
    let mut failed = false;
    if args.pseudomanifold {
        let report = pseudomanifold_check(&sk);
        let violations: Vec<Vec<u32>> = report
            .violations
            .iter()
            .map(|f| f.iter().copied().collect())
            .collect();
        w.record(json!({
            "record": "pseudomanifold",
            "verdict": report.verdict,
            "violations": violations,
            "dimension_maximal": report.dimension_maximal,
            "connected": report.connected,
        }));
        failed = !report.verdict;
    }
    w.finish()?;
    if failed {
        return Err(check_err(format!(
            "module=dual_complex operation=pseudomanifold_check point=skeleton({}) tolerance=exact: not a closed pseudomanifold",
            loaded.name
        )));
    }
    Ok(())
}

fn cmd_expand(args: ExpandArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let sk = essential_skeleton(&loaded.degeneration).map_err(input_err)?;
    let expanded = build_expanded(&sk, &loaded.ivy).map_err(input_err)?;

    let cells: Vec<Value> = expanded
        .cells
        .iter()
        .map(|c| match c {
            Cell::Maximal { simplex } => {
                let ids: Vec<u32> = simplex.face.iter().copied().collect();
                json!({"kind": "maximal", "face": ids})
            }
            Cell::Submaximal {
                simplex,
                ivy,
                end_faces,
            } => {
                let ids: Vec<u32> = simplex.face.iter().copied().collect();
                let ends: Vec<Value> = end_faces
                    .iter()
                    .map(|f| match f {
                        None => Value::Null,
                        Some(face) => json!(face.iter().copied().collect::<Vec<u32>>()),
                    })
                    .collect();
                json!({
                    "kind": "submaximal",
                    "face": ids,
                    "ivy": {
                        "vertices": ivy.vertex_levels.len(),
                        "edges": ivy.edges.len(),
                        "ram": ivy.ram(),
                        "boundary": ivy.boundary(),
                    },
                    "end_faces": ends,
                })
            }
        })
        .collect();
    let ram = expanded.ram();
    let outer: Vec<Value> = expanded
        .outer_boundary()
        .into_iter()
        .map(|(cell, v)| {
            if v > usize::MAX / 2 {
                json!({"cell": cell, "open_end": usize::MAX - v})
            } else {
                json!({"cell": cell, "vertex": v})
            }
        })
        .collect();
    let doc = json!({
        "model": loaded.name,
        "cells": cells,
        "gluings": expanded.gluings,
        "ram": ram,
        "outer_boundary": outer,
        "euler_characteristic": expanded.euler_characteristic(),
    });

    if let Some(path) = args.out.clone().or_else(|| cfg.out.clone()) {
        let pretty = serde_json::to_string_pretty(&doc).expect("complex serializes");
        std::fs::write(&path, pretty + "\n")
            .map_err(|e| input_err(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut w = Writer::new(None);
    w.record(header("expand", &loaded, seed, json!({})));
    w.record(json!({
        "record": "expanded",
        "cells": expanded.cells.len(),
        "gluings": expanded.gluings.len(),
        "ram": ram.len(),
        "outer_boundary": outer.len(),
        "euler_characteristic": expanded.euler_characteristic(),
    }));
    w.finish()
}

fn cmd_eval(args: EvalArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let model = require_geometry(&loaded)?;
    let p = parse_point(model, &args.point)?;
    let rec = basic_functions(model, &p).map_err(|e| {
        check_err(format!(
            "module=hybrid_coords operation=basic_functions point=({}) tolerance=-: {e}",
            point_label(&p)
        ))
    })?;
    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    w.record(header(
        "eval",
        &loaded,
        seed,
        json!({"point": point_label(&p)}),
    ));
    w.record(json!({
        "record": "basic_functions",
        "chart": chart_label(p.chart),
        "t": rec.t,
        "g": rec.g,
        "theta": rec.theta,
        "r": rec.r,
        "s": rec.s,
        "t_i": rec.t_i,
        "w": rec.w,
        "u": rec.u,
        "v": rec.v,
        "sigma": rec.sigma,
    }));
    w.finish()
}

fn cmd_eval_form(args: EvalFormArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let model = require_geometry(&loaded)?;
    let p = parse_point(model, &args.point)?;
    let eps = args.eps.or(cfg.eps).unwrap_or(model.eps0() * 0.5);
    let q = args.q.or(cfg.q).unwrap_or(0.0);
    let fp = FormParams::new(eps, q).map_err(input_err)?;
    let form = omega_q(model, &p, fp).map_err(|e| {
        check_err(format!(
            "module=kahler_family operation=omega_q point=({}) tolerance=-: {e}",
            point_label(&p)
        ))
    })?;
    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    w.record(header(
        "eval-form",
        &loaded,
        seed,
        json!({"point": point_label(&p), "eps": eps, "q": q}),
    ));
    let (rows, cols) = form.matrix.shape();
    let entries: Vec<f64> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| form.matrix[(i, j)])
        .collect();
    w.record(json!({
        "record": "form",
        "basis": match form.basis { BasisKind::LogZ => "log_z", BasisKind::HybridZero => "hybrid_zero" },
        "rows": rows,
        "matrix_row_major": entries,
    }));

    let mut failure: Option<String> = None;
    if let Some(kind) = args.check {
        let (name, default_tol, result) = match kind {
            CheckKind::Pairing => ("pairing", 1e-12, pairing_check(model, &p, fp)),
            CheckKind::Potential => (
                "potential",
                1e-6,
                potential_flat(model, &p).map(|(_, residual)| residual),
            ),
            CheckKind::Cplus => {
                // Spread of c₊ over the fiber angles at this base point.
                ("cplus", 1e-10, cplus_spread(model, &p, fp))
            }
        };
        let tol = args.tol.or(cfg.tol).unwrap_or(default_tol);
        let (residual, pass, error) = match result {
            Ok(r) => (r, r <= tol, Value::Null),
            Err(e) => (f64::NAN, false, Value::String(e.to_string())),
        };
        w.record(json!({
            "record": "verdict",
            "module": "kahler_family",
            "check": name,
            "point": point_label(&p),
            "residual": residual,
            "tolerance": tol,
            "pass": pass,
            "error": error,
        }));
        if !pass {
            failure = Some(format!(
                "module=kahler_family operation={name} point=({}) tolerance={tol:e}: residual {residual:e}",
                point_label(&p)
            ));
        }
    }
    w.finish()?;
    match failure {
        None => Ok(()),
        Some(msg) => Err(check_err(msg)),
    }
}

/// Spread of c₊ over a few fiber angles above the base point of `p`.
fn cplus_spread(model: &Model, p: &HybridPoint, fp: FormParams) -> lagfib::Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for sample in 0..4 {
        let shift = 2.0 * std::f64::consts::PI * sample as f64 / 4.0;
        let angles: Vec<f64> = p.angles.iter().map(|a| a + shift).collect();
        let q = HybridPoint::in_maximal_chart(model, p.chart, p.t, &p.w, &angles)?;
        let c = cplus(model, &q, fp)?;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    Ok(hi - lo)
}

fn cmd_trace(args: TraceArgs, cfg: &Config, _seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let model = require_geometry(&loaded)?;
    let chart = model.maximal_charts()[0];
    let info = model.chart(chart).map_err(input_err)?;
    let w0 = parse_base(args.base.as_deref(), info.k())?;
    let theta = args.theta.unwrap_or(0.0);
    let path_text = args
        .path
        .clone()
        .or_else(|| cfg.path.clone())
        .unwrap_or_else(|| "t=h,q=h^2".into());
    let path = AdmissiblePath::parse(&path_text, theta).map_err(input_err)?;
    let h = args.h.unwrap_or(0.05);
    let grid = args.grid.or(cfg.grid).unwrap_or(32);
    let steps = args.steps.or(cfg.steps).unwrap_or(64);

    let fiber = radius_zero_fiber(model, chart, &w0, theta, grid).map_err(input_err)?;
    let moved = transport(model, &fiber, &path, model.eps0() * 0.5, h, steps).map_err(|e| {
        check_err(format!(
            "module=fibration_flow operation=transport point=(chart={} w={w0:?} theta={theta}) tolerance=-: {e}",
            chart_label(chart)
        ))
    })?;

    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    // CSV header: coordinates then per-sample residual diagnostics.
    let k = info.k();
    let mut head = String::from("sample,h,chart,t");
    for i in 0..k {
        let _ = write!(head, ",w_{i}");
    }
    for i in 0..k {
        let _ = write!(head, ",theta_{i}");
    }
    head.push_str(",simplex_residual,escaped");
    w.line(&head);
    for (idx, p) in moved.samples.iter().enumerate() {
        let simplex_residual = (p.w.iter().sum::<f64>() - 1.0).abs();
        let mut row = format!("{idx},{h},{},{}", chart_label(p.chart), p.t);
        for v in &p.w {
            let _ = write!(row, ",{v}");
        }
        for v in &p.angles {
            let _ = write!(row, ",{v}");
        }
        let _ = write!(row, ",{simplex_residual},{}", u8::from(moved.escaped));
        w.line(&row);
    }
    w.finish()
}

fn cmd_diagnose(args: DiagnoseArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = match args.model.as_deref().or(cfg.model.as_deref()) {
        Some(reference) => resolve_model(reference)?,
        // The default study model: the two-component local curve.
        None => lagfib::model_file::parse_model(
            r#"{"type": "local_snc", "n": 1, "m": [1, 1], "nu": [1, 1]}"#,
            "<built-in>",
        )
        .map_err(input_err)?,
    };
    let model = require_geometry(&loaded)?;
    let eps = args.eps.or(cfg.eps).unwrap_or(model.eps0() * 0.5);
    let path_text = args
        .path
        .clone()
        .or_else(|| cfg.path.clone())
        .unwrap_or_else(|| "t=h,q=h^2".into());
    let path = AdmissiblePath::parse(&path_text, 0.0).map_err(input_err)?;
    let schedule_text = args
        .schedule
        .clone()
        .or_else(|| cfg.schedule.clone())
        .unwrap_or_else(|| "geometric:1e-1,1e-3,6".into());
    let hs = Sweep::parse_schedule(&schedule_text).map_err(input_err)?;
    let sweep = Sweep::new(path, hs).map_err(input_err)?;
    let grid = args.grid.or(cfg.grid).unwrap_or(16);
    let info = model.chart(model.maximal_charts()[0]).map_err(input_err)?;
    let base = parse_base(args.base.as_deref(), info.k())?;

    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    w.record(header(
        "diagnose",
        &loaded,
        seed,
        json!({
            "suite": suite_label(args.suite),
            "eps": eps,
            "path": path_text,
            "schedule": schedule_text,
            "grid": grid,
            "base": base,
        }),
    ));

    let all = args.suite == Suite::All;
    let run_suite = |suite: Suite, w: &mut Writer| -> CliResult<()> {
        let result = emit_suite(suite, model, &sweep, eps, &base, grid, w);
        match result {
            Ok(()) => Ok(()),
            // Under `all`, suites whose preconditions the model does not
            // meet are reported and skipped instead of failing the run.
            Err(Error::Domain(reason)) if all => {
                w.record(json!({
                    "record": "skipped",
                    "suite": suite_label(suite),
                    "reason": reason,
                }));
                Ok(())
            }
            Err(e @ Error::Domain(_)) => Err(input_err(e)),
            Err(e) => Err(check_err(format!(
                "module=diagnostics operation={} point=(model={}, eps={eps}) tolerance=-: {e}",
                suite_label(suite),
                loaded.name
            ))),
        }
    };

    match args.suite {
        Suite::All => {
            for suite in [
                Suite::Metric,
                Suite::Volume,
                Suite::Cplus,
                Suite::Phase,
                Suite::Calibration,
                Suite::Gh,
            ] {
                run_suite(suite, &mut w)?;
            }
        }
        suite => run_suite(suite, &mut w)?,
    }
    w.finish()
}

fn suite_label(s: Suite) -> &'static str {
    match s {
        Suite::Metric => "metric",
        Suite::Gh => "gh",
        Suite::Volume => "volume",
        Suite::Cplus => "cplus",
        Suite::Phase => "phase",
        Suite::Calibration => "calibration",
        Suite::All => "all",
    }
}

fn emit_suite(
    suite: Suite,
    model: &Model,
    sweep: &Sweep,
    eps: f64,
    base: &[f64],
    grid: usize,
    w: &mut Writer,
) -> lagfib::Result<()> {
    match suite {
        Suite::Metric => {
            for r in metric_limit_check(model, sweep, eps)? {
                w.record(tagged("metric", r));
            }
        }
        Suite::Volume => {
            for r in volume_fraction(model, sweep, eps)? {
                w.record(tagged("volume", r));
            }
        }
        Suite::Cplus => {
            let bases = cplus_bases(base);
            for r in ricci_flat_trend(model, sweep, eps, &bases, grid.min(12))? {
                w.record(tagged("cplus", r));
            }
        }
        Suite::Phase => {
            let report = phase_specialty(model, sweep, eps, base, grid)?;
            w.record(json!({
                "record": "phase_reference",
                "pinned": report.pinned,
            }));
            for r in report.records {
                w.record(tagged("phase", r));
            }
        }
        Suite::Calibration => {
            for r in calibration_ratio(model, sweep, eps, base, grid)? {
                w.record(tagged("calibration", r));
            }
        }
        Suite::Gh => {
            for r in gh_distortion(model, sweep, eps, grid)? {
                w.record(tagged("gh", r));
            }
        }
        Suite::All => unreachable!("expanded by the caller"),
    }
    Ok(())
}

/// Sample bases for the c₊ suite: the given base plus two skewed variants.
fn cplus_bases(base: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![base.to_vec()];
    for &shift in &[0.15, -0.1] {
        let mut b = base.to_vec();
        b[0] = (b[0] + shift).clamp(0.05, 0.95);
        let rest: f64 = b[1..].iter().sum();
        let target = 1.0 - b[0];
        for v in &mut b[1..] {
            *v *= target / rest;
        }
        out.push(b);
    }
    out
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct CheckRow {
    module: &'static str,
    operation: &'static str,
    point: String,
    residual: Option<f64>,
    tolerance: Option<f64>,
    pass: bool,
    note: String,
}

fn row(
    module: &'static str,
    operation: &'static str,
    point: String,
    tolerance: f64,
    result: lagfib::Result<f64>,
) -> CheckRow {
    match result {
        Ok(residual) => CheckRow {
            module,
            operation,
            point,
            residual: Some(residual),
            tolerance: Some(tolerance),
            pass: residual <= tolerance,
            note: String::new(),
        },
        Err(e) => CheckRow {
            module,
            operation,
            point,
            residual: None,
            tolerance: Some(tolerance),
            pass: false,
            note: e.to_string(),
        },
    }
}

fn cmd_verify(args: VerifyArgs, cfg: &Config, seed: u64) -> CliResult<()> {
    let loaded = require_model(args.model.as_deref(), cfg)?;
    let mut rows: Vec<CheckRow> = Vec::new();

    // Combinatorial invariants.
    rows.push(row(
        "dual_complex",
        "validate",
        format!("model={}", loaded.name),
        0.0,
        loaded.degeneration.validate().map(|()| 0.0),
    ));
    let sk = essential_skeleton(&loaded.degeneration).map_err(input_err)?;
    rows.push(row(
        "dual_complex",
        "essential_skeleton",
        format!("faces={}", sk.faces.len()),
        0.0,
        if sk.faces.is_empty() {
            Err(Error::InvalidModel("essential skeleton is empty".into()))
        } else {
            Ok(0.0)
        },
    ));
    rows.push(row(
        "expanded_skeleton",
        "build_expanded",
        format!("model={}", loaded.name),
        0.0,
        build_expanded(&sk, &loaded.ivy).map(|_| 0.0),
    ));

    if let Some(model) = loaded.geometry.as_ref() {
        geometry_checks(model, &mut rows);
    }

    // Per-check table, one row per line.
    let mut w = Writer::new(args.out.or_else(|| cfg.out.clone()));
    w.record(header("verify", &loaded, seed, json!({})));
    w.line(&format!(
        "{:<18} {:<24} {:<52} {:>12} {:>10}  verdict",
        "module", "operation", "point", "residual", "tolerance"
    ));
    let mut all_pass = true;
    for r in &rows {
        all_pass &= r.pass;
        let residual = r
            .residual
            .map(|v| format!("{v:.3e}"))
            .unwrap_or_else(|| "-".into());
        let tolerance = r
            .tolerance
            .map(|v| format!("{v:.1e}"))
            .unwrap_or_else(|| "-".into());
        let verdict = if r.pass { "pass" } else { "FAIL" };
        let mut line = format!(
            "{:<18} {:<24} {:<52} {:>12} {:>10}  {verdict}",
            r.module, r.operation, r.point, residual, tolerance
        );
        if !r.note.is_empty() {
            let _ = write!(line, "  [{}]", r.note);
        }
        w.line(&line);
    }
    w.finish()?;
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<String> = rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| {
                format!(
                    "module={} operation={} point=({}) tolerance={}",
                    r.module,
                    r.operation,
                    r.point,
                    r.tolerance
                        .map(|t| format!("{t:e}"))
                        .unwrap_or_else(|| "-".into())
                )
            })
            .collect();
        Err(check_err(failed.join("; ")))
    }
}

/// Invariant checks that need a chart atlas.
fn geometry_checks(model: &Model, rows: &mut Vec<CheckRow>) {
    let chart = model.maximal_charts()[0];
    let info = model.chart(chart).expect("maximal chart exists");
    let k = info.k();
    let eps = model.eps0() * 0.5;
    let w_mid = vec![1.0 / k as f64; k];
    let angles = vec![0.3; k];

    let p_t = || HybridPoint::in_maximal_chart(model, chart, 0.05, &w_mid, &angles);
    let p_0 = || HybridPoint::in_maximal_chart(model, chart, 0.0, &w_mid, &angles);

    // Coordinate consistency at a positive-radius point.
    rows.push(row(
        "hybrid_coords",
        "basic_functions",
        format!("chart={} t=0.05 w={w_mid:?}", chart_label(chart)),
        1e-12,
        p_t().and_then(|p| {
            let rec = basic_functions(model, &p)?;
            let mut worst: f64 = (rec.w.iter().sum::<f64>() - 1.0).abs();
            for i in 0..k {
                worst = worst.max((rec.w[i] - p.t / rec.t_i[i]).abs());
            }
            Ok(worst)
        }),
    ));

    // The form family vanishes on fiber tori.
    rows.push(row(
        "kahler_family",
        "pullback_vanishes",
        format!("chart={} t=0 q∈{{0,½,1}}", chart_label(chart)),
        1e-12,
        p_0().and_then(|p| {
            let torus = torus_basis(model, &p)?;
            let mut worst: f64 = 0.0;
            for &q in &[0.0, 0.5, 1.0] {
                let form = omega_q(model, &p, FormParams::new(eps, q)?)?;
                worst = worst.max(restrict_form(&form, &torus).amax());
            }
            Ok(worst)
        }),
    ));

    // The boundary pairing identity at radius zero.
    rows.push(row(
        "kahler_family",
        "pairing_identity",
        format!("chart={} t=0 w={w_mid:?}", chart_label(chart)),
        1e-12,
        p_0().and_then(|p| pairing_check(model, &p, FormParams::new(eps, 0.3)?)),
    ));

    // Fiber metric positivity at the calibrated ε.
    rows.push(row(
        "kahler_family",
        "metric_positive",
        format!("chart={} t=0.05 eps={eps}", chart_label(chart)),
        0.0,
        p_t().and_then(|p| {
            let rep = metric_g(model, &p, FormParams::new(eps, 0.5)?)?;
            if rep.positive_definite {
                Ok(0.0)
            } else {
                Ok(-rep.min_eigenvalue)
            }
        }),
    ));

    // Potential identities.
    rows.push(row(
        "kahler_family",
        "potential_flat_identity",
        format!("chart={} t=0.05", chart_label(chart)),
        1e-6,
        p_t().and_then(|p| potential_flat(model, &p).map(|(_, residual)| residual)),
    ));
    rows.push(row(
        "kahler_family",
        "ddc_sharp_identity",
        format!("chart={} t=0.05", chart_label(chart)),
        1e-5,
        p_t().and_then(|p| ddc_sharp_check(model, &p, 1e-4)),
    ));

    // c₊ is constant at radius zero.
    rows.push(row(
        "kahler_family",
        "cplus_flat_limit",
        format!("chart={} t=0", chart_label(chart)),
        1e-10,
        p_0().and_then(|p| {
            let fp = FormParams::new(eps, 0.0)?;
            cplus_spread(model, &p, fp)
        }),
    ));

    // Transport reaches the target radius on the simplex.
    rows.push(row(
        "fibration_flow",
        "transport_invariants",
        format!("chart={} h=0.05 grid=8 steps=16", chart_label(chart)),
        1e-8,
        (|| {
            let path = AdmissiblePath::parse("t=h,q=h^2", 0.0)?;
            let fiber = radius_zero_fiber(model, chart, &w_mid, 0.0, 8)?;
            let moved = transport(model, &fiber, &path, eps, 0.05, 16)?;
            let mut worst: f64 = 0.0;
            for p in &moved.samples {
                worst = worst.max((p.w.iter().sum::<f64>() - 1.0).abs());
                worst = worst.max((p.t - 0.05).abs());
            }
            Ok(worst)
        })(),
    ));

    // Diagnostics seam: the frozen boundary weight is reproducible.
    rows.push(row(
        "diagnostics",
        "boundary_weight",
        format!("chart={} h=0.05", chart_label(chart)),
        1.0,
        (|| {
            let path = AdmissiblePath::parse("t=h,q=h^2", 0.0)?;
            let w1 = boundary_weight(model, &path, eps, 0.05)?;
            let w2 = boundary_weight(model, &path, eps, 0.05)?;
            if w1 == w2 && w1 > 0.0 && w1 < 1.0 {
                Ok(0.0)
            } else {
                Err(Error::Numerical("boundary weight not reproducible".into()))
            }
        })(),
    ));
}
