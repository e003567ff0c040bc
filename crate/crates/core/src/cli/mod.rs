//! `galorbit` front end: argument and config-file handling, the five
//! commands, and exit-code mapping.
//!
//! States printed by `verify` are in the scaled coordinates the equations of
//! motion are written in; multiply by `sqrt(eps)` to recover the original
//! galactic coordinates.

pub mod expr;
pub mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::averaging::{tabulate, AveragingConfig, Chart, ModelFamily};
use crate::closedform::{averaged_prefactor, family_period, gap_matrix, predicted_zeros};
use crate::integrator::IntegratorConfig;
use crate::model::energy;
use crate::resonance::detect_rational;
use crate::verify::{check_level_hypotheses, loglog_slope, shoot_periodic, unperturbed_seed, ShootingConfig};
use crate::{Branch, EnergyLevel, Error, ModelParams};

use table::{Cell, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Below this a gap determinant counts as vanishing.
const DET_TOL: f64 = 1e-10;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams(_) | Error::Domain(_) => EXIT_CONFIG,
            Error::Resonance(_) | Error::HypothesisViolated { .. } | Error::ResonanceRequired { .. } => EXIT_HYPOTHESIS,
            _ => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "galorbit",
    version,
    about = "Periodic orbits of quartic galactic potentials by first-order averaging"
)]
pub struct Cli {
    /// Print the output columns of every command and exit.
    #[arg(long, global = true)]
    pub schema: bool,

    #[command(flatten)]
    pub opts: Options,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form zeros of the averaged function per branch and level.
    Predict,
    /// Averaged function by quadrature next to its closed form.
    Average,
    /// Shooting, Floquet analysis and continuation in eps.
    Verify,
    /// Gap determinants and pipeline status over a list of q values.
    Scan,
    /// Output columns of every command.
    Schema,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::Average => "average",
            Command::Verify => "verify",
            Command::Scan => "scan",
            Command::Schema => "schema",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Every flag is also a config-file key of the same name. Values are kept as
/// text until the config file and the flags have been merged.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Frequency ratio; `scan` takes a list or `lo:hi:n`.
    #[arg(long, global = true)]
    pub q: Option<String>,
    /// Energy levels, comma separated or `lo:hi:n`.
    #[arg(long, global = true)]
    pub h: Option<String>,
    /// Perturbation sizes for `verify`.
    #[arg(long, global = true)]
    pub eps: Option<String>,
    /// x, y or both.
    #[arg(long, global = true)]
    pub branch: Option<String>,
    #[arg(long = "grid-points", global = true)]
    pub grid_points: Option<String>,
    #[arg(long = "tol-quad", global = true)]
    pub tol_quad: Option<String>,
    #[arg(long = "tol-zero", global = true)]
    pub tol_zero: Option<String>,
    #[arg(long = "tol-int", global = true)]
    pub tol_int: Option<String>,
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// key=value file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 12] =
    ["a", "b", "c", "q", "h", "eps", "branch", "grid-points", "tol-quad", "tol-zero", "tol-int", "format"];

/// Reads `key = value` lines. `#` starts a comment; underscores in keys are
/// accepted in place of dashes.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        if key != "out" && !KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!("config line {}: unknown key '{key}'", lineno + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    /// All q values; only `scan` accepts more than one.
    pub q_list: Vec<f64>,
    pub h: Vec<f64>,
    pub eps: Vec<f64>,
    pub branches: Vec<Branch>,
    pub grid_points: usize,
    pub tol_quad: f64,
    pub tol_zero: f64,
    pub tol_int: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_EPS: [f64; 5] = [0.0, 1e-2, 5e-3, 2.5e-3, 1.25e-3];

impl RunConfig {
    pub fn resolve(opts: &Options, command: Command) -> Result<Self, CliError> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        let get = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());
        let scalar = |flag: &Option<String>, key: &str, default: f64| -> Result<f64, CliError> {
            match get(flag, key) {
                Some(s) => expr::parse_value(&s).map_err(|e| CliError::config(format!("--{key}: {e}"))),
                None => Ok(default),
            }
        };
        let list = |flag: &Option<String>, key: &str, default: &[f64]| -> Result<Vec<f64>, CliError> {
            match get(flag, key) {
                Some(s) => expr::parse_list(&s).map_err(|e| CliError::config(format!("--{key}: {e}"))),
                None => Ok(default.to_vec()),
            }
        };

        let a = scalar(&opts.a, "a", 1.0)?;
        let b = scalar(&opts.b, "b", 1.0)?;
        let c = scalar(&opts.c, "c", 1.0)?;
        let q_list = list(&opts.q, "q", &[std::f64::consts::SQRT_2])?;
        if q_list.len() != 1 && command != Command::Scan {
            return Err(CliError::config("--q: only scan accepts several values"));
        }
        for &q in &q_list {
            ModelParams::new(a, b, c, q)?;
        }
        let params = ModelParams::new(a, b, c, q_list[0])?;

        let h = list(&opts.h, "h", &[0.5])?;
        if h.is_empty() {
            return Err(CliError::config("--h: at least one energy level is required"));
        }
        for &v in &h {
            EnergyLevel::new(v)?;
        }
        let eps = list(&opts.eps, "eps", &DEFAULT_EPS)?;
        if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
            return Err(CliError::config("--eps: values must lie in [0, 1)"));
        }

        let branches = match get(&opts.branch, "branch").as_deref().unwrap_or("both") {
            "x" => vec![Branch::X],
            "y" => vec![Branch::Y],
            "both" => Branch::BOTH.to_vec(),
            other => return Err(CliError::config(format!("--branch: expected x, y or both, got '{other}'"))),
        };

        let grid_points = match get(&opts.grid_points, "grid-points") {
            Some(s) => s.trim().parse::<usize>().map_err(|_| CliError::config(format!("--grid-points: '{s}'")))?,
            None => 101,
        };
        if !(2..=100_000).contains(&grid_points) {
            return Err(CliError::config("--grid-points must lie in [2, 100000]"));
        }

        let tol_quad = scalar(&opts.tol_quad, "tol-quad", 1e-9)?;
        let tol_zero = scalar(&opts.tol_zero, "tol-zero", 1e-10)?;
        let tol_int = scalar(&opts.tol_int, "tol-int", 1e-12)?;
        for (name, v, lo, hi) in [
            ("tol-quad", tol_quad, 1e-15, 1e-2),
            ("tol-zero", tol_zero, 1e-15, 1e-2),
            ("tol-int", tol_int, 1e-14, 1e-3),
        ] {
            if !(lo..=hi).contains(&v) {
                return Err(CliError::config(format!("--{name} must lie in [{lo:e}, {hi:e}], got {v:e}")));
            }
        }

        let format = match get(&opts.format, "format").as_deref().unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(CliError::config(format!("--format: expected csv or json, got '{other}'"))),
        };
        let out = opts.out.clone().or_else(|| file.get("out").map(PathBuf::from));

        Ok(Self { params, q_list, h, eps, branches, grid_points, tol_quad, tol_zero, tol_int, format, out })
    }

    pub fn averaging(&self) -> AveragingConfig {
        let mut cfg = AveragingConfig { grid_points: self.grid_points, ..AveragingConfig::default() };
        cfg.quad.integrity_tol = self.tol_quad;
        cfg.zeros.zero_tol = self.tol_zero;
        cfg
    }

    pub fn shooting(&self) -> ShootingConfig {
        ShootingConfig { integrator: IntegratorConfig::with_tolerance(self.tol_int), ..ShootingConfig::default() }
    }

    fn branch_label(&self) -> &'static str {
        match self.branches.as_slice() {
            [Branch::X] => "x",
            [Branch::Y] => "y",
            _ => "both",
        }
    }

    pub fn meta(&self, command: Command) -> Value {
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "a": self.params.a,
            "b": self.params.b,
            "c": self.params.c,
            "q": if self.q_list.len() == 1 { json!(self.q_list[0]) } else { json!(self.q_list) },
            "h": self.h,
            "eps": self.eps,
            "branch": self.branch_label(),
            "grid_points": self.grid_points,
            "tol_quad": self.tol_quad,
            "tol_zero": self.tol_zero,
            "tol_int": self.tol_int,
        })
    }
}

/// Result of one command, ready to be rendered.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: Command,
    pub table: Table,
    /// Extra top-level JSON members.
    pub extra: Vec<(&'static str, Value)>,
    /// Non-zero when the command produced output but some mandatory part
    /// failed.
    pub code: i32,
    pub message: Option<String>,
}

impl Report {
    fn new(command: Command, table: Table) -> Self {
        Self { command, table, extra: Vec::new(), code: EXIT_OK, message: None }
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        match cfg.format {
            Format::Csv => self.table.to_csv(),
            Format::Json => {
                let mut obj = serde_json::Map::new();
                obj.insert("meta".into(), cfg.meta(self.command));
                obj.insert("rows".into(), self.table.json_rows());
                for (k, v) in &self.extra {
                    obj.insert(k.to_string(), v.clone());
                }
                let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("JSON values are finite");
                s.push('\n');
                s
            }
        }
    }
}

pub const PREDICT_COLUMNS: [&str; 7] = ["branch", "h", "zero", "radius", "det_delta", "prefactor", "status"];
pub const AVERAGE_COLUMNS: [&str; 6] = ["branch", "h", "alpha", "f_quad", "f_closed", "abs_dev"];
pub const VERIFY_COLUMNS: [&str; 23] = [
    "kind",
    "branch",
    "h",
    "eps",
    "x",
    "y",
    "px",
    "py",
    "period",
    "energy",
    "energy_error",
    "residual",
    "iterations",
    "mult1_re",
    "mult1_im",
    "mult2_re",
    "mult2_im",
    "trivial_defect",
    "reciprocal_defect",
    "symplectic_defect",
    "displacement_slope",
    "unscaled_slope",
    "status",
];
pub const SCAN_COLUMNS: [&str; 4] = ["q", "det_x", "det_y", "status"];

pub fn schema_table() -> Table {
    let mut t = Table::new(&["command", "columns"]);
    for (cmd, cols) in [
        ("predict", PREDICT_COLUMNS.join(";")),
        ("average", AVERAGE_COLUMNS.join(";")),
        ("verify", VERIFY_COLUMNS.join(";")),
        ("scan", SCAN_COLUMNS.join(";")),
    ] {
        t.push(vec![cmd.into(), cols.into()]);
    }
    t
}

/// Rational q fails every command that runs the averaging pipeline. The
/// message carries both determinants since a rational ratio makes the full
/// linear flow periodic and the gap matrix of the full family singular even
/// where a branch determinant is not.
fn gate(cfg: &RunConfig) -> Result<[f64; 2], CliError> {
    let dets = Branch::BOTH.map(|b| gap_matrix(b, &cfg.params).det_delta);
    check_level_hypotheses(&cfg.params, DET_TOL).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!(
            "{}; det Delta_x = {:.6}, det Delta_y = {:.6}, det Delta of the full linear family = 0",
            err.message, dets[0], dets[1]
        );
        err
    })
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Report, CliError> {
    gate(cfg)?;
    let mut table = Table::new(&PREDICT_COLUMNS);
    for &branch in &cfg.branches {
        let det = gap_matrix(branch, &cfg.params).det_delta;
        for &hv in &cfg.h {
            let h = EnergyLevel::new(hv)?;
            let pre = averaged_prefactor(branch, h, &cfg.params);
            let z = predicted_zeros(branch, h, &cfg.params);
            if pre == 0.0 {
                table.push(vec![
                    branch.as_str().into(),
                    hv.into(),
                    Cell::Empty,
                    z.plus.into(),
                    det.into(),
                    pre.into(),
                    "degenerate: f1 ≡ 0".into(),
                ]);
                continue;
            }
            for zero in [z.minus, z.plus] {
                table.push(vec![
                    branch.as_str().into(),
                    hv.into(),
                    zero.into(),
                    z.plus.into(),
                    det.into(),
                    pre.into(),
                    "ok".into(),
                ]);
            }
        }
    }
    Ok(Report::new(Command::Predict, table))
}

pub fn cmd_average(cfg: &RunConfig) -> Result<Report, CliError> {
    gate(cfg)?;
    let avg = cfg.averaging();
    let mut table = Table::new(&AVERAGE_COLUMNS);
    let mut grid = Vec::new();
    let cases: Vec<(Branch, f64)> = cfg.branches.iter().flat_map(|&b| cfg.h.iter().map(move |&h| (b, h))).collect();
    // rayon keeps input order on collect, so output stays deterministic
    let tables = cases
        .par_iter()
        .map(|&(branch, hv)| {
            let family = ModelFamily::new(branch, EnergyLevel::new(hv)?, &cfg.params, Chart::Amplitude)?;
            tabulate(&family, cfg.grid_points, &avg.quad)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for (&(branch, hv), rows) in cases.iter().zip(tables) {
        for row in rows {
            let dev = (row.f_quad - row.f_closed).abs();
            table.push(vec![
                branch.as_str().into(),
                hv.into(),
                row.alpha.into(),
                row.f_quad.into(),
                row.f_closed.into(),
                dev.into(),
            ]);
            grid.push(json!({
                "branch": branch.as_str(),
                "h": hv,
                "alpha": row.alpha,
                "f_quad": row.f_quad,
                "f_closed": row.f_closed,
            }));
        }
    }
    let mut report = Report::new(Command::Average, table);
    report.extra.push(("grid", Value::Array(grid)));
    Ok(report)
}

fn branch_degenerate(branch: Branch, h: EnergyLevel, params: &ModelParams) -> bool {
    averaged_prefactor(branch, h, params) == 0.0
}

/// One orbit row per (branch, h, eps) in input order, each shooting run
/// seeded by the previous one, then one summary row per (branch, h) with the
/// log-log slopes over the positive eps values.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Report, CliError> {
    gate(cfg)?;
    let shooting = cfg.shooting();
    let mut table = Table::new(&VERIFY_COLUMNS);
    let mut failures = Vec::new();
    let mut confirmed = 0usize;
    let blank = |n: usize| vec![Cell::Empty; n];

    for &branch in &cfg.branches {
        for &hv in &cfg.h {
            let h = EnergyLevel::new(hv)?;
            if branch_degenerate(branch, h, &cfg.params) {
                let mut row = vec!["inconclusive".into(), branch.as_str().into(), hv.into()];
                row.extend(blank(VERIFY_COLUMNS.len() - 4));
                row.push("degenerate: f1 ≡ 0".into());
                table.push(row);
                continue;
            }
            let base = unperturbed_seed(branch, h, cfg.params.q);
            let mut seed = base;
            let mut period = family_period(branch, cfg.params.q);
            let mut fit: Vec<(f64, f64, f64)> = Vec::new();
            let mut all_ok = true;
            for &eps in &cfg.eps {
                match shoot_periodic(&cfg.params, eps, branch, &seed, period, h, &shooting) {
                    Ok(orbit) => {
                        seed = orbit.ic;
                        period = orbit.period;
                        if eps > 0.0 {
                            let unscaled = orbit.ic.norm() * eps.sqrt();
                            fit.push((eps, orbit.ic.distance(&base), unscaled));
                        }
                        let nt = orbit.floquet.nontrivial();
                        let m = |i: usize| nt.get(i).copied();
                        let e = energy(&cfg.params, eps, &orbit.ic);
                        table.push(vec![
                            "orbit".into(),
                            branch.as_str().into(),
                            hv.into(),
                            eps.into(),
                            orbit.ic.x.into(),
                            orbit.ic.y.into(),
                            orbit.ic.px.into(),
                            orbit.ic.py.into(),
                            orbit.period.into(),
                            e.into(),
                            orbit.energy_error.into(),
                            orbit.residual.into(),
                            orbit.iterations.into(),
                            m(0).map_or(Cell::Empty, |c| c.re.into()),
                            m(0).map_or(Cell::Empty, |c| c.im.into()),
                            m(1).map_or(Cell::Empty, |c| c.re.into()),
                            m(1).map_or(Cell::Empty, |c| c.im.into()),
                            orbit.floquet.trivial_defect.into(),
                            orbit.floquet.reciprocal_defect.into(),
                            orbit.symplectic_defect.into(),
                            Cell::Empty,
                            Cell::Empty,
                            "converged".into(),
                        ]);
                    }
                    Err(err) => {
                        all_ok = false;
                        failures.push(format!("{branch}-branch h={hv} eps={eps}: {err}"));
                        let mut row = vec!["orbit".into(), branch.as_str().into(), hv.into(), eps.into()];
                        row.extend(blank(VERIFY_COLUMNS.len() - 5));
                        row.push("failed".into());
                        table.push(row);
                    }
                }
            }
            if all_ok {
                confirmed += 1;
            }
            let mut row = vec!["summary".into(), branch.as_str().into(), hv.into()];
            row.extend(blank(VERIFY_COLUMNS.len() - 6));
            if fit.len() >= 2 {
                let e: Vec<f64> = fit.iter().map(|f| f.0).collect();
                let d: Vec<f64> = fit.iter().map(|f| f.1).collect();
                let u: Vec<f64> = fit.iter().map(|f| f.2).collect();
                row.push(loglog_slope(&e, &d).into());
                row.push(loglog_slope(&e, &u).into());
            } else {
                row.extend(blank(2));
            }
            row.push(if all_ok { "confirmed" } else { "failed" }.into());
            table.push(row);
        }
    }

    let mut report = Report::new(Command::Verify, table);
    report.extra.push(("families_confirmed", json!(confirmed)));
    if !failures.is_empty() {
        report.code = EXIT_NUMERIC;
        report.message = Some(failures.join("\n"));
    }
    Ok(report)
}

pub fn scan_status(params: &ModelParams) -> (&'static str, [f64; 2]) {
    let dets = Branch::BOTH.map(|b| gap_matrix(b, params).det_delta);
    let status = if detect_rational(params.q).is_some() || dets.iter().any(|d| d.abs() <= DET_TOL) {
        "resonant"
    } else if params.a == 0.0 || params.c == 0.0 {
        "degenerate"
    } else {
        "ok"
    };
    (status, dets)
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&SCAN_COLUMNS);
    let rows = cfg
        .q_list
        .par_iter()
        .map(|&q| ModelParams::new(cfg.params.a, cfg.params.b, cfg.params.c, q).map(|p| (q, scan_status(&p))))
        .collect::<Result<Vec<_>, Error>>()?;
    for (q, (status, dets)) in rows {
        table.push(vec![q.into(), dets[0].into(), dets[1].into(), status.into()]);
    }
    Ok(Report::new(Command::Scan, table))
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    match command {
        Command::Predict => cmd_predict(cfg),
        Command::Average => cmd_average(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Scan => cmd_scan(cfg),
        Command::Schema => Ok(Report::new(Command::Schema, schema_table())),
    }
}

/// Parses, runs, writes output and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let command = match (cli.schema, cli.command) {
        (true, _) => Command::Schema,
        (false, Some(c)) => c,
        (false, None) => {
            eprintln!("error: no command given (predict, average, verify, scan, schema)");
            return EXIT_CONFIG;
        }
    };
    let outcome = RunConfig::resolve(&cli.opts, command).and_then(|cfg| {
        let report = execute(command, &cfg)?;
        let text = report.render(&cfg);
        match &cfg.out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?,
            None => print!("{text}"),
        }
        Ok(report)
    });
    match outcome {
        Ok(report) => {
            if let Some(msg) = &report.message {
                eprintln!("error: {msg}");
            }
            report.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
