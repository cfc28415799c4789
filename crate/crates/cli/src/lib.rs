//! Parameter scans, exponent fits and single-point reports on top of `bhdimer`.
//!
//! Scans write one record per grid point, in grid order, as CSV with a
//! `#`-prefixed metadata header or as JSON lines. Per-point solver failures
//! land in an `error` column and never abort a scan.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use bhdimer::fockspace::{self, cutoff_convergence, CONVERGENCE_THRESHOLD};
use bhdimer::gaussian::{gaussian_observables, GaussianObservables};
use bhdimer::numerics::KERNEL_TOL;
use bhdimer::semiclassical::{self, all_solutions, fit_exponent, Branch, FitError, PowerLawFit, SemiclassicalSolution};
use bhdimer::{DimerParams, ExactPoint, FockConfig, ParamError, SteadyStateOptions};
use clap::ValueEnum;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Solver(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("malformed input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Semiclassical,
    Gaussian,
    Fock,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Semiclassical => "semiclassical",
            Method::Gaussian => "gaussian",
            Method::Fock => "fock",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(alias = "json-lines")]
    Jsonl,
}

/// Which mean-field solution a point is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchChoice {
    /// Stable broken solution if one exists, otherwise the stable symmetric one.
    Auto,
    Symmetric,
    #[value(name = "broken+")]
    BrokenPlus,
}

impl BranchChoice {
    fn as_str(self) -> &'static str {
        match self {
            BranchChoice::Auto => "auto",
            BranchChoice::Symmetric => "symmetric",
            BranchChoice::BrokenPlus => "broken+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelArgs {
    pub j: f64,
    pub delta: f64,
    pub gamma: f64,
    pub u: f64,
}

impl ModelArgs {
    pub fn params(&self, uf: f64) -> Result<DimerParams, ParamError> {
        DimerParams::from_rescaled(self.j, self.delta, self.gamma, self.u, uf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub method: Method,
    pub uf_min: f64,
    pub uf_max: f64,
    pub steps: usize,
    pub model: ModelArgs,
    pub cutoff: usize,
    pub format: Format,
    pub tol_kernel: f64,
    pub branch: BranchChoice,
    /// Worker threads; 0 lets rayon decide. Does not affect the output.
    pub threads: usize,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.uf_min < self.uf_max) {
            return Err(CliError::Config(format!("uf-min {} must be below uf-max {}", self.uf_min, self.uf_max)));
        }
        if self.steps < 2 {
            return Err(CliError::Config("steps must be at least 2".into()));
        }
        if self.method == Method::Fock && !(self.model.u > 0.0) {
            return Err(CliError::Config("the fock method needs U > 0".into()));
        }
        if self.method == Method::Fock && self.cutoff < 1 {
            return Err(CliError::Config("cutoff must be at least 1".into()));
        }
        if !(self.tol_kernel > 0.0) {
            return Err(CliError::Config("tol-kernel must be positive".into()));
        }
        self.model.params(self.uf_min.max(0.0))?;
        Ok(())
    }

    fn metadata(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let mut out = vec![
            ("schema", SCHEMA.to_string()),
            ("method", self.method.as_str().into()),
            ("J", num(m.j)),
            ("delta", num(m.delta)),
            ("gamma", num(m.gamma)),
            ("U", num(m.u)),
            ("uf_min", num(self.uf_min)),
            ("uf_max", num(self.uf_max)),
            ("steps", self.steps.to_string()),
            ("branch", self.branch.as_str().into()),
        ];
        if self.method == Method::Fock {
            out.push(("cutoff", self.cutoff.to_string()));
            out.push(("tol_kernel", num(self.tol_kernel)));
        }
        out.push(("version", env!("CARGO_PKG_VERSION").into()));
        out
    }
}

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.11e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // Round-trip through the 12-digit text so both formats agree.
            Cell::Num(x) if x.is_finite() => num(*x).parse::<f64>().map(Value::from).unwrap_or(Value::Null),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(k) => Value::from(*k),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(k) => Some(*k as f64),
            _ => None,
        }
    }
}

pub fn columns(method: Method) -> &'static [&'static str] {
    match method {
        Method::Semiclassical => &[
            "uf", "branch", "stable", "solutions", "order", "alpha1_re", "alpha1_im", "alpha2_re", "alpha2_im",
            "max_growth", "residual", "error",
        ],
        Method::Gaussian => &[
            "uf", "branch", "order", "variance", "inv_variance", "log_negativity", "entropy", "nu_minus", "nu_plus",
            "nu_pt_minus", "n1", "n2", "error",
        ],
        Method::Fock => &[
            "uf", "branch", "order", "cutoff", "variance", "log_negativity", "entropy", "exact_order", "n_total",
            "min_eigenvalue", "relative_residual", "kernel_method", "iterations", "converged", "relative_change",
            "error",
        ],
    }
}

/// Mean-field solution selected by `choice`.
pub fn select_branch(params: &DimerParams, choice: BranchChoice) -> Result<(SemiclassicalSolution, usize), CliError> {
    let sols = all_solutions(params).map_err(|e| CliError::Solver(e.to_string()))?;
    let n = sols.len();
    let pick = match choice {
        BranchChoice::Auto => sols
            .iter()
            .find(|s| s.branch == Branch::BrokenPlus && s.stable)
            .or_else(|| sols.iter().find(|s| s.branch == Branch::Symmetric && s.stable))
            .or_else(|| sols.first()),
        BranchChoice::Symmetric => sols
            .iter()
            .find(|s| s.branch == Branch::Symmetric && s.stable)
            .or_else(|| sols.iter().find(|s| s.branch == Branch::Symmetric)),
        BranchChoice::BrokenPlus => sols.iter().find(|s| s.branch == Branch::BrokenPlus),
    };
    pick.cloned()
        .map(|s| (s, n))
        .ok_or_else(|| CliError::Solver(format!("no {} solution at this drive", choice.as_str())))
}

fn cells_semiclassical(sol: &SemiclassicalSolution, count: usize) -> Vec<Cell> {
    vec![
        Cell::Text(sol.branch.as_str().into()),
        Cell::Int(sol.stable as i64),
        Cell::Int(count as i64),
        Cell::Num(sol.rescaled_order_parameter()),
        Cell::Num(sol.alpha1.re),
        Cell::Num(sol.alpha1.im),
        Cell::Num(sol.alpha2.re),
        Cell::Num(sol.alpha2.im),
        Cell::Num(sol.max_growth()),
        Cell::Num(sol.residual),
    ]
}

fn cells_gaussian(sol: &SemiclassicalSolution, g: &GaussianObservables) -> Vec<Cell> {
    vec![
        Cell::Text(sol.branch.as_str().into()),
        Cell::Num(sol.rescaled_order_parameter()),
        Cell::Num(g.variance),
        Cell::Num(g.inverse_variance()),
        Cell::Num(g.log_negativity),
        Cell::Num(g.entropy),
        Cell::Num(g.nu_minus),
        Cell::Num(g.nu_plus),
        Cell::Num(g.nu_pt_minus),
        Cell::Num(g.moments.n1),
        Cell::Num(g.moments.n2),
    ]
}

/// Exact point at `cutoff` plus the cutoff-convergence verdict against `cutoff - 2`.
pub fn exact_with_check(
    params: &DimerParams,
    sol: &SemiclassicalSolution,
    cutoff: usize,
    tol_kernel: f64,
) -> Result<(ExactPoint, bool, Option<f64>), CliError> {
    let opts = SteadyStateOptions { tol_kernel, method: None };
    let cutoffs: Vec<usize> = if cutoff > 2 { vec![cutoff - 2, cutoff] } else { vec![cutoff] };
    let mut table = cutoff_convergence(params, sol.amplitudes(), &cutoffs, CONVERGENCE_THRESHOLD, &opts)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let converged = cutoffs.len() > 1 && table.converged();
    let row = table.rows.pop().expect("at least one cutoff");
    Ok((row.point, converged, row.relative_change))
}

fn cells_fock(params: &DimerParams, sol: &SemiclassicalSolution, e: &ExactPoint, converged: bool, change: Option<f64>) -> Vec<Cell> {
    let o = &e.observables;
    vec![
        Cell::Text(sol.branch.as_str().into()),
        Cell::Num(sol.rescaled_order_parameter()),
        Cell::Int(e.cutoff as i64),
        Cell::Num(o.variance),
        Cell::Num(e.log_negativity),
        Cell::Num(e.entropy),
        Cell::Num(o.order_parameter.norm() * (params.u / params.gamma).sqrt()),
        Cell::Num(o.moments.n1 + o.moments.n2),
        Cell::Num(e.min_eigenvalue),
        Cell::Num(e.relative_residual),
        Cell::Text(e.method.as_str().into()),
        Cell::Int(e.steady.iterations as i64),
        Cell::Int(converged as i64),
        change.map_or(Cell::Empty, Cell::Num),
    ]
}

fn evaluate(config: &ScanConfig, uf: f64) -> Result<Vec<Cell>, CliError> {
    let params = config.model.params(uf)?;
    let (sol, count) = select_branch(&params, config.branch)?;
    match config.method {
        Method::Semiclassical => Ok(cells_semiclassical(&sol, count)),
        Method::Gaussian => {
            let g = gaussian_observables(&sol).map_err(|e| CliError::Solver(e.to_string()))?;
            Ok(cells_gaussian(&sol, &g))
        }
        Method::Fock => {
            let (e, converged, change) = exact_with_check(&params, &sol, config.cutoff, config.tol_kernel)?;
            Ok(cells_fock(&params, &sol, &e, converged, change))
        }
    }
}

/// One output row: `uf`, the method's columns, then `error`.
pub fn scan_record(config: &ScanConfig, uf: f64) -> Vec<Cell> {
    let width = columns(config.method).len();
    let mut row = vec![Cell::Num(uf)];
    match evaluate(config, uf) {
        Ok(cells) => {
            row.extend(cells);
            row.push(Cell::Empty);
        }
        Err(e) => {
            row.resize(width - 1, Cell::Empty);
            row.push(Cell::Text(e.to_string()));
        }
    }
    debug_assert_eq!(row.len(), width);
    row
}

/// Evaluates the whole grid; rows come back in grid order whatever the thread count.
pub fn run_scan(config: &ScanConfig) -> Result<Vec<Vec<Cell>>, CliError> {
    config.validate()?;
    let grid = semiclassical::linspace(config.uf_min, config.uf_max, config.steps);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(pool.install(|| grid.par_iter().map(|&uf| scan_record(config, uf)).collect()))
}

pub fn write_scan(config: &ScanConfig, rows: &[Vec<Cell>], out: &mut dyn Write) -> io::Result<()> {
    let cols = columns(config.method);
    match config.format {
        Format::Csv => {
            writeln!(out, "# bhdimer scan")?;
            let meta: Vec<String> = config.metadata().iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(out, "# {}", meta.join(" "))?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(cols)?;
            for row in rows {
                w.write_record(row.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut meta = Map::new();
            for (k, v) in config.metadata() {
                meta.insert(k.into(), v.parse::<f64>().map(Value::from).unwrap_or(Value::String(v)));
            }
            meta.insert("schema".into(), json!(SCHEMA));
            meta.insert("columns".into(), json!(cols));
            writeln!(out, "{}", Value::Object(meta))?;
            for row in rows {
                let obj: Map<String, Value> = cols.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect();
                writeln!(out, "{}", Value::Object(obj))?;
            }
        }
    }
    Ok(())
}

/// A scan read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ScanTable {
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, CliError> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Input(format!("no `{name}` column")))?;
        Ok(self.rows.iter().map(|r| r.get(k).and_then(|s| s.parse::<f64>().ok())).collect())
    }
}

/// Reads CSV (with optional `#` metadata lines) or JSON lines.
pub fn read_scan(path: &Path) -> Result<ScanTable, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut table = ScanTable { metadata: Vec::new(), columns: Vec::new(), rows: Vec::new() };
    if text.trim_start().starts_with('{') {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: Value = serde_json::from_str(line).map_err(|e| CliError::Input(e.to_string()))?;
            let obj = v.as_object().ok_or_else(|| CliError::Input("expected JSON objects".into()))?;
            if table.columns.is_empty() {
                if let Some(cols) = obj.get("columns").and_then(Value::as_array) {
                    table.columns = cols.iter().filter_map(|c| c.as_str().map(String::from)).collect();
                    table.metadata = obj.iter().filter(|(k, _)| *k != "columns").map(|(k, v)| (k.clone(), v.to_string())).collect();
                    continue;
                }
                table.columns = obj.keys().cloned().collect();
            }
            let row = table
                .columns
                .iter()
                .map(|c| match obj.get(c) {
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Null) | None => String::new(),
                    Some(v) => v.to_string(),
                })
                .collect();
            table.rows.push(row);
        }
        return Ok(table);
    }
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    table.metadata.push((k.into(), v.into()));
                }
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(text.as_bytes());
    table.columns = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    for rec in reader.records() {
        table.rows.push(rec?.iter().map(String::from).collect());
    }
    if table.columns.is_empty() {
        return Err(CliError::Input("no header row".into()));
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Observable {
    /// Rescaled order parameter; expected exponent +1/2 inside the window.
    Order,
    /// Order-parameter variance; expected exponent -1 outside the window.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Lower,
    Upper,
}

/// Points used by a fit never lie further than this from the estimated
/// critical value unless fewer than [`MIN_FIT_POINTS`] would remain.
pub const DEFAULT_FIT_WINDOW: f64 = 0.1;
pub const MIN_FIT_POINTS: usize = 8;

/// Threshold below which the order parameter counts as zero.
const ZERO_ORDER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub observable: Observable,
    pub side: Side,
    pub guess: f64,
    /// Distance from `guess` covered by the fitted points.
    pub window: f64,
    pub points: Vec<(f64, f64)>,
    pub fit: PowerLawFit,
}

impl FitReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let obs = match self.observable {
            Observable::Order => "order",
            Observable::Variance => "variance",
        };
        let side = match self.side {
            Side::Lower => "lower",
            Side::Upper => "upper",
        };
        let f = &self.fit;
        let _ = writeln!(s, "fit of {obs} near the {side} bifurcation");
        let _ = writeln!(s, "  model            y = A |uf - A_c|^beta");
        let _ = writeln!(s, "  A_c              {}", num(f.critical));
        let _ = writeln!(s, "  beta             {}", num(f.exponent));
        let _ = writeln!(s, "  A                {}", num(f.prefactor));
        let _ = writeln!(s, "  rms ln residual  {}", num(f.rms_log_residual));
        let _ = writeln!(s, "  points           {}", f.points);
        let _ = writeln!(s, "  window           uf in [{}, {}]", num(self.guess - self.window), num(self.guess + self.window));
        let _ = writeln!(s, "  uf,y,ln residual");
        for &(x, y) in &self.points {
            let r = y.ln() - (f.prefactor.ln() + f.exponent * (x - f.critical).abs().ln());
            let _ = writeln!(s, "  {},{},{}", num(x), num(y), num(r));
        }
        s
    }
}

/// Fits the power law on one side of one bifurcation of a scan.
///
/// The window edges come from the `order` column: the bifurcation is placed
/// halfway between the last zero and the first nonzero entry (or the
/// reverse for the upper side). Order-parameter fits use points inside the
/// window, variance fits points outside it.
pub fn run_fit(table: &ScanTable, observable: Observable, side: Side) -> Result<FitReport, CliError> {
    let uf = table.column("uf")?;
    let order = table.column("order")?;
    let target = match observable {
        Observable::Order => order.clone(),
        Observable::Variance => table.column("variance")?,
    };
    let mut data: Vec<(f64, Option<f64>, Option<f64>)> =
        uf.iter().zip(&order).zip(&target).filter_map(|((x, o), y)| x.map(|x| (x, *o, *y))).collect();
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let broken: Vec<bool> = data.iter().map(|d| d.1.is_some_and(|o| o > ZERO_ORDER)).collect();
    let edges: Vec<usize> = (1..data.len()).filter(|&k| broken[k] != broken[k - 1]).collect();
    let (guess, inside_above) = match side {
        Side::Lower => {
            let k = edges.iter().copied().find(|&k| broken[k]);
            match k {
                Some(k) => (0.5 * (data[k - 1].0 + data[k].0), true),
                // Entirely broken data: the transition sits at the left edge.
                None if broken.first() == Some(&true) => (data[0].0, true),
                None => return Err(CliError::Input("no lower bifurcation in the order column".into())),
            }
        }
        Side::Upper => {
            let k = edges.iter().copied().rev().find(|&k| !broken[k]);
            match k {
                Some(k) => (0.5 * (data[k - 1].0 + data[k].0), false),
                None if broken.last() == Some(&true) => (data[data.len() - 1].0, false),
                None => return Err(CliError::Input("no upper bifurcation in the order column".into())),
            }
        }
    };
    // Order fits look into the window, variance fits away from it.
    let above = match observable {
        Observable::Order => inside_above,
        Observable::Variance => !inside_above,
    };
    let mut candidates: Vec<(f64, f64)> = data
        .iter()
        .filter(|d| (d.0 > guess) == above)
        .filter_map(|d| d.2.filter(|y| y.is_finite() && *y > 0.0).map(|y| (d.0, y)))
        .collect();
    candidates.sort_by(|a, b| (a.0 - guess).abs().total_cmp(&(b.0 - guess).abs()));
    let mut window = DEFAULT_FIT_WINDOW;
    if candidates.len() >= MIN_FIT_POINTS {
        window = window.max((candidates[MIN_FIT_POINTS - 1].0 - guess).abs());
    }
    let mut points: Vec<(f64, f64)> = candidates.into_iter().filter(|p| (p.0 - guess).abs() <= window).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fit = fit_exponent(&points, guess)?;
    Ok(FitReport { observable, side, guess, window, points, fit })
}

/// Everything reported for one parameter point.
#[derive(Debug)]
pub struct PointReport {
    pub params: DimerParams,
    pub solutions: Vec<SemiclassicalSolution>,
    pub selected: SemiclassicalSolution,
    pub gaussian: Option<Result<GaussianObservables, String>>,
    pub exact: Option<(ExactPoint, bool, Option<f64>)>,
}

pub fn run_point(model: &ModelArgs, uf: f64, method: Method, cutoff: usize, tol_kernel: f64, branch: BranchChoice) -> Result<PointReport, CliError> {
    let params = model.params(uf)?;
    if method == Method::Fock && !(params.u > 0.0) {
        return Err(CliError::Config("the fock method needs U > 0".into()));
    }
    let solutions = all_solutions(&params).map_err(|e| CliError::Solver(e.to_string()))?;
    let (selected, _) = select_branch(&params, branch)?;
    let gaussian = match method {
        Method::Semiclassical => None,
        _ => Some(gaussian_observables(&selected).map_err(|e| e.to_string())),
    };
    let exact = match method {
        Method::Fock => Some(exact_with_check(&params, &selected, cutoff, tol_kernel)?),
        _ => None,
    };
    Ok(PointReport { params, solutions, selected, gaussian, exact })
}

fn fmt_c(z: bhdimer::Complex64) -> String {
    format!("{} {:+.11e}i", num(z.re), z.im)
}

impl PointReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(
            s,
            "parameters  J={} delta={} gamma={} U={} F={} uf={}",
            num(p.j),
            num(p.delta),
            num(p.gamma),
            num(p.u),
            num(p.f),
            num(p.rescale().value())
        );
        let _ = writeln!(s, "mean-field solutions: {}", self.solutions.len());
        for sol in &self.solutions {
            let _ = writeln!(
                s,
                "  {:<9} {:<8} alpha1={} alpha2={} order={} residual={}",
                sol.branch.as_str(),
                if sol.stable { "stable" } else { "unstable" },
                fmt_c(sol.alpha1),
                fmt_c(sol.alpha2),
                num(sol.rescaled_order_parameter()),
                num(sol.residual)
            );
            let spec: Vec<String> = sol.spectrum.iter().map(|z| fmt_c(*z)).collect();
            let _ = writeln!(s, "            spectrum [{}]", spec.join(", "));
        }
        let _ = writeln!(s, "selected: {}", self.selected.branch.as_str());
        match &self.gaussian {
            Some(Ok(g)) => {
                let _ = writeln!(s, "gaussian");
                let _ = writeln!(s, "  variance         {}", num(g.variance));
                let _ = writeln!(s, "  log negativity   {}", num(g.log_negativity));
                let _ = writeln!(s, "  entropy          {}", num(g.entropy));
                let _ = writeln!(s, "  symplectic       nu- {}  nu+ {}  nu~- {}", num(g.nu_minus), num(g.nu_plus), num(g.nu_pt_minus));
                let _ = writeln!(s, "  n1, n2           {} {}", num(g.moments.n1), num(g.moments.n2));
            }
            Some(Err(e)) => {
                let _ = writeln!(s, "gaussian: {e}");
            }
            None => {}
        }
        if let Some((e, converged, change)) = &self.exact {
            let o = &e.observables;
            let _ = writeln!(s, "exact (cutoff {})", e.cutoff);
            let _ = writeln!(s, "  variance         {}", num(o.variance));
            let _ = writeln!(s, "  log negativity   {}", num(e.log_negativity));
            let _ = writeln!(s, "  entropy          {}", num(e.entropy));
            let _ = writeln!(s, "  <O>              {}", fmt_c(o.order_parameter));
            let _ = writeln!(s, "  n1, n2           {} {}", num(o.moments.n1), num(o.moments.n2));
            let _ = writeln!(s, "  min eigenvalue   {}", num(e.min_eigenvalue));
            let _ = writeln!(s, "  residual         {} (relative {})", num(e.residual), num(e.relative_residual));
            let _ = writeln!(s, "  corrections      hermiticity {} trace {}", num(e.hermiticity_correction), num(e.trace_correction));
            let _ = writeln!(s, "  kernel method    {} ({} iterations)", e.method.as_str(), e.steady.iterations);
            let _ = writeln!(
                s,
                "  cutoff converged {} (relative change {})",
                converged,
                change.map_or("n/a".into(), num)
            );
            if FockConfig::new(e.cutoff, self.selected.amplitudes()).map(|c| c.is_slow()).unwrap_or(false) {
                let _ = writeln!(s, "  note: cutoff at or above {} is slow", fockspace::SLOW_CUTOFF);
            }
        }
        s
    }
}

pub const DEFAULT_TOL_KERNEL: f64 = KERNEL_TOL;
