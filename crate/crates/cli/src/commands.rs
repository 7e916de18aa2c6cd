use std::path::{Path, PathBuf};

use lzscatter::crossings::{compose, schedule_for_model};
use lzscatter::laxflow::{smatrix_for_model, ScatterMatrix};
use lzscatter::models::{build_model, AffineModel, Family, ModelDescriptor};
use lzscatter::numerics::{ComplexMatrix, OdeSettings};
use lzscatter::oracle::{adiabatic_spectrum, default_horizon, linear_grid, numeric_smatrix};
use lzscatter::zerocurv::{verify_default, verify_pair, DEFAULT_EPS_GRID};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::ledger::{self, RunRecord};
use crate::params::ModelArgs;
use crate::{Cli, Command, Failure, Method, ModelAction, OracleArgs};

/// Row/column sums of a reported matrix may be off by at most this.
pub const STOCHASTIC_TOL: f64 = 1e-8;

/// Method agreement floor for `compare`.
pub const AGREEMENT_TOL: f64 = 1e-2;

/// A finished command: its text, where it goes, and what the ledger keeps.
struct Report {
    text: String,
    out: Option<PathBuf>,
    code: i32,
    descriptor: Option<ModelDescriptor>,
    method: Option<String>,
    error_estimate: Option<f64>,
    flagged: bool,
}

impl Report {
    fn new(text: String, out: Option<PathBuf>) -> Self {
        Self { text, out, code: 0, descriptor: None, method: None, error_estimate: None, flagged: false }
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> i32 {
    let ledger_path = ledger::resolve_path(cli.ledger.as_deref());
    let report = match dispatch(cli.command) {
        Ok(r) => r,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    if let Err(f) = emit(&report.text, report.out.as_deref()) {
        eprintln!("error: {}", f.message);
        return f.code;
    }
    let mut record = RunRecord::now(argv, &report.text);
    record.descriptor = report.descriptor;
    record.method = report.method;
    record.digest.error_estimate = report.error_estimate;
    record.flags.exit_code = report.code;
    record.flags.pass = report.code == 0;
    record.flags.flagged = report.flagged;
    if let Err(e) = ledger::append(&ledger_path, &record) {
        eprintln!("error: cannot append to ledger {}: {e}", ledger_path.display());
        return 2;
    }
    report.code
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Model { action: ModelAction::Show { model, out } } => model_show(&model, out),
        Command::Smatrix { model, method, oracle, out } => smatrix(&model, method, &oracle, out),
        Command::Compare { model, method, oracle, out, inject_corruption } => {
            compare(&model, &method, &oracle, out, inject_corruption)
        }
        Command::Spectrum { model, grid, steps, out } => spectrum(&model, &grid, steps, out),
        Command::ZeroCurvature { model, grid, steps, out } => zero_curvature(&model, grid.as_deref(), steps, out),
        Command::Sweep { model, method, entries, oracle, out } => sweep(&model, method, &entries, &oracle, out),
    }
}

fn build(descriptor: &ModelDescriptor) -> Result<AffineModel, Failure> {
    build_model(descriptor).map_err(Failure::from)
}

/// Descriptor as reported: partner families always carry their eps.
fn effective_descriptor(model: &AffineModel) -> ModelDescriptor {
    let mut d = model.descriptor().clone();
    if model.family().has_partner() {
        d.eps = Some(model.eps());
    }
    d
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Nested `[re, im]` pairs, 17 significant digits.
fn complex_matrix_json(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = m
        .rows()
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|z| format!("[{},{}]", num(z.re), num(z.im))).collect();
            format!("[{}]", cells.join(","))
        })
        .collect();
    format!("[{}]", rows.join(","))
}

fn model_show(args: &ModelArgs, out: Option<PathBuf>) -> Result<Report, Failure> {
    let descriptor = args.descriptor()?;
    let model = build(&descriptor)?;
    let eps = model.eps();
    let reported = effective_descriptor(&model);
    let mut fields = vec![
        ("descriptor", reported.to_json()),
        ("family", format!("\"{}\"", model.family())),
        ("dim", model.dim().to_string()),
        ("eps", num(eps)),
        ("A", complex_matrix_json(&model.a_matrix(eps))),
        ("A_const", complex_matrix_json(model.a_const())),
        ("A_eps", complex_matrix_json(model.d_eps_hamiltonian())),
        ("B", complex_matrix_json(&model.b_matrix())),
    ];
    if let Some(p) = model.partner() {
        let e = format!(
            "{{\"constant\":{},\"eps_linear\":{},\"eps_inverse\":{},\"time\":{}}}",
            complex_matrix_json(&p.constant),
            complex_matrix_json(&p.eps_linear),
            complex_matrix_json(&p.eps_inverse),
            complex_matrix_json(&p.time)
        );
        fields.push(("E", e));
    }
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("\"{k}\":{v}")).collect();
    let mut report = Report::new(format!("{{{}}}\n", body.join(",")), out);
    report.descriptor = Some(reported);
    Ok(report)
}

/// Algebraic for the su(2) families, crossings for the tabulated partner
/// families, numeric otherwise.
pub fn default_method(family: Family) -> Method {
    match family {
        f if f.is_spin_like() => Method::Algebraic,
        Family::Bowtie3 | Family::BowtieN | Family::Su3Six => Method::Crossings,
        _ => Method::Numeric,
    }
}

/// One method's matrix with its JSON rendering.
struct Computed {
    s: ScatterMatrix,
    json: Value,
    error_estimate: Option<f64>,
    unitarity_defect: f64,
    flagged: bool,
}

fn settings(oracle: &OracleArgs) -> Result<OdeSettings, Failure> {
    OdeSettings::with_rtol(oracle.rtol).map_err(Failure::from)
}

fn compute(model: &AffineModel, method: Method, oracle: &OracleArgs) -> Result<Computed, Failure> {
    let family = model.family();
    let params = serde_json::to_value(effective_descriptor(model)).expect("descriptor serializes");
    match method {
        Method::Algebraic => {
            if !family.is_spin_like() {
                return Err(Failure::input(format!(
                    "method algebraic needs an su(2) family (lz2, spin, adjoint3), got {family}"
                )));
            }
            let s = smatrix_for_model(model)?;
            let json = json!({"family": family.name(), "params": params, "method": "algebraic", "matrix": s});
            Ok(Computed { s, json, error_estimate: None, unitarity_defect: 0.0, flagged: false })
        }
        Method::Crossings => {
            if !family.has_partner() {
                return Err(Failure::input(format!(
                    "method crossings needs a family with a zero-curvature partner, got {family}"
                )));
            }
            let (schedule, tabulated) = schedule_for_model(model)?;
            let s = compose(&schedule, model.dim())?;
            let json = json!({
                "family": family.name(),
                "params": params,
                "method": "crossings",
                "schedule_source": if tabulated { "table" } else { "derived" },
                "schedule": schedule,
                "matrix": s,
            });
            Ok(Computed { s, json, error_estimate: None, unitarity_defect: 0.0, flagged: false })
        }
        Method::Numeric => {
            let settings = settings(oracle)?;
            let eps = model.eps();
            let horizon = oracle.horizon.unwrap_or_else(|| default_horizon(model, eps));
            let r = numeric_smatrix(model, eps, horizon, &settings)?;
            let json: Value = serde_json::from_str(&r.to_json(model, eps, &settings)).expect("oracle json");
            Ok(Computed {
                s: r.s,
                json,
                error_estimate: Some(r.error_estimate),
                unitarity_defect: r.unitarity_defect,
                flagged: r.flagged,
            })
        }
    }
}

fn stochastic_ok(c: &Computed) -> bool {
    c.s.stochastic_defect() <= STOCHASTIC_TOL.max(2.0 * c.unitarity_defect)
}

fn smatrix(args: &ModelArgs, method: Option<Method>, oracle: &OracleArgs, out: Option<PathBuf>) -> Result<Report, Failure> {
    let descriptor = args.descriptor()?;
    let model = build(&descriptor)?;
    let method = method.unwrap_or_else(|| default_method(model.family()));
    let c = compute(&model, method, oracle)?;
    let mut report = Report::new(format!("{}\n", c.json), out);
    if !stochastic_ok(&c) {
        eprintln!("validation failed: row/column sums off by {:e}", c.s.stochastic_defect());
        report.code = 1;
    }
    if c.flagged {
        eprintln!("warning: oracle did not converge across horizons (spread {:e})", c.error_estimate.unwrap_or(f64::NAN));
    }
    report.descriptor = Some(effective_descriptor(&model));
    report.method = Some(method.name().into());
    report.error_estimate = c.error_estimate;
    report.flagged = c.flagged;
    Ok(report)
}

/// Rows in reverse order: a doubly stochastic matrix that disagrees with
/// the original.
fn corrupt(s: &ScatterMatrix) -> ScatterMatrix {
    let rows = s.rows().iter().rev().cloned().collect();
    ScatterMatrix::from_rows(rows).expect("row permutation stays valid")
}

fn compare(
    args: &ModelArgs,
    methods: &[Method],
    oracle: &OracleArgs,
    out: Option<PathBuf>,
    inject_corruption: bool,
) -> Result<Report, Failure> {
    if methods.len() < 2 {
        return Err(Failure::input("compare needs at least two methods"));
    }
    let descriptor = args.descriptor()?;
    let model = build(&descriptor)?;
    let mut results: Vec<Computed> = methods
        .par_iter()
        .map(|&m| compute(&model, m, oracle))
        .collect::<Result<_, _>>()?;
    if inject_corruption {
        let last = results.last_mut().expect("at least two");
        last.s = corrupt(&last.s);
    }
    let oracle_error = results.iter().filter_map(|c| c.error_estimate).fold(0.0_f64, f64::max);
    let tolerance = AGREEMENT_TOL.max(3.0 * oracle_error);
    let mut pairs = Vec::new();
    let mut pass = results.iter().all(stochastic_ok);
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            let dev = results[i].s.max_abs_diff(&results[j].s);
            let ok = dev <= tolerance;
            pass &= ok;
            pairs.push(json!({
                "methods": [methods[i].name(), methods[j].name()],
                "max_deviation": dev,
                "pass": ok,
            }));
        }
    }
    let body = json!({
        "family": model.family().name(),
        "params": effective_descriptor(&model),
        "tolerance": tolerance,
        "pairs": pairs,
        "verdict": if pass { "PASS" } else { "FAIL" },
    });
    let mut report = Report::new(format!("{body}\n"), out);
    report.code = if pass { 0 } else { 1 };
    report.descriptor = Some(effective_descriptor(&model));
    report.method = Some(methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
    report.error_estimate = (oracle_error > 0.0).then_some(oracle_error);
    report.flagged = results.iter().any(|c| c.flagged);
    Ok(report)
}

fn parse_span(text: &str, flag: &str) -> Result<(f64, f64), Failure> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::input(format!("--{flag}: expected start:stop, got '{text}'")))?;
    match parts[..] {
        [a, b] if a.is_finite() && b.is_finite() && a < b => Ok((a, b)),
        _ => Err(Failure::input(format!("--{flag}: expected start:stop with start < stop, got '{text}'"))),
    }
}

fn spectrum(args: &ModelArgs, grid: &str, steps: usize, out: Option<PathBuf>) -> Result<Report, Failure> {
    if steps < 2 {
        return Err(Failure::input("--steps must be at least 2"));
    }
    let (start, stop) = parse_span(grid, "grid")?;
    let descriptor = args.descriptor()?;
    let model = build(&descriptor)?;
    let t = linear_grid(start, stop, steps - 1);
    let s = adiabatic_spectrum(&model, model.eps(), &t)?;
    if !s.flagged.is_empty() {
        eprintln!("note: {} grid points are (near-)degenerate; labels there are arbitrary within the cluster", s.flagged.len());
    }
    let mut report = Report::new(s.to_csv(), out);
    report.descriptor = Some(effective_descriptor(&model));
    Ok(report)
}

fn zero_curvature(args: &ModelArgs, grid: Option<&str>, steps: usize, out: Option<PathBuf>) -> Result<Report, Failure> {
    let descriptor = args.descriptor()?;
    let model = build(&descriptor)?;
    let report_core = match grid {
        None => verify_default(&model)?,
        Some(g) => {
            if steps < 1 {
                return Err(Failure::input("--steps must be at least 1"));
            }
            let (a, b) = parse_span(g, "grid")?;
            verify_pair(&model, &linear_grid(a, b, steps.saturating_sub(1)), &DEFAULT_EPS_GRID)?
        }
    };
    let mut report = Report::new(format!("{}\n", report_core.to_json()), out);
    report.code = if report_core.pass { 0 } else { 1 };
    report.descriptor = Some(effective_descriptor(&model));
    Ok(report)
}

fn parse_entry(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::input(format!("--entry: expected i,j (1-based), got '{text}'"));
    let parts: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match parts[..] {
        [i, j] if i >= 1 && j >= 1 => Ok((i, j)),
        _ => Err(bad()),
    }
}

fn sweep(
    args: &ModelArgs,
    method: Option<Method>,
    entries: &[String],
    oracle: &OracleArgs,
    out: Option<PathBuf>,
) -> Result<Report, Failure> {
    let spec = args.spec()?;
    let Some((name, values)) = spec.sweep.clone() else {
        return Err(Failure::input("sweep needs exactly one parameter given as start:stop:step"));
    };
    let entries: Vec<(usize, usize)> = if entries.is_empty() {
        vec![(1, 1)]
    } else {
        entries.iter().map(|e| parse_entry(e)).collect::<Result<_, _>>()?
    };
    let family: Family = spec.base.family.parse().map_err(Failure::from)?;
    let method = method.unwrap_or_else(|| default_method(family));
    let rows: Vec<Vec<f64>> = values
        .par_iter()
        .map(|&v| {
            let model = build(&spec.at(v))?;
            if let Some(&(i, j)) = entries.iter().find(|(i, j)| *i > model.dim() || *j > model.dim()) {
                return Err(Failure::input(format!("entry ({i},{j}) outside dimension {}", model.dim())));
            }
            let c = compute(&model, method, oracle)?;
            Ok(entries.iter().map(|&(i, j)| c.s.get(i - 1, j - 1)).collect())
        })
        .collect::<Result<_, Failure>>()?;
    let mut csv = String::from(name);
    for (i, j) in &entries {
        csv.push_str(&format!(",S{i}_{j}"));
    }
    csv.push('\n');
    for (v, row) in values.iter().zip(&rows) {
        csv.push_str(&num(*v));
        for x in row {
            csv.push(',');
            csv.push_str(&num(*x));
        }
        csv.push('\n');
    }
    let mut report = Report::new(csv, out);
    report.descriptor = Some(spec.base);
    report.method = Some(method.name().into());
    Ok(report)
}
