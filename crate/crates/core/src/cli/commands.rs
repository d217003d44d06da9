//! Command bodies: each turns a configuration into CSV and JSON-lines artifacts.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use super::store::Artifacts;
use crate::algebra2d::Mat2;
use crate::domain::EffectiveDomain;
use crate::error::{Error, Result};
use crate::fem_cell::CellMesh;
use crate::harness::{gamma_diagnostic, ru_usc_suite, verify_structure};
use crate::homog::{hw_solve, quasiconvexify_point, radial_extension};
use crate::integrand::{g_eval, growth_eval, phi_eval, EnergyDensity};
use crate::solver::minimize;

type M = Mat2<f64>;

/// Output of a command: files to write and the process exit code.
pub struct Output {
    pub artifacts: Artifacts,
    pub exit: i32,
    pub summary: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Eval,
    Cell,
    Homogenize,
    Radial,
    Delta,
    Verify,
    Gamma,
    Qcx,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Eval => "eval",
            CommandKind::Cell => "cell",
            CommandKind::Homogenize => "homogenize",
            CommandKind::Radial => "radial",
            CommandKind::Delta => "delta",
            CommandKind::Verify => "verify",
            CommandKind::Gamma => "gamma",
            CommandKind::Qcx => "qcx",
        }
    }

    /// Configuration sections the command depends on.
    fn sections(&self) -> &'static [&'static str] {
        match self {
            CommandKind::Eval => &["integrand", "xi", "point"],
            CommandKind::Cell => &["integrand", "xi", "cell", "solver", "seed"],
            CommandKind::Homogenize => &["integrand", "xi", "homog", "solver", "seed"],
            CommandKind::Radial => &["integrand", "xi", "homog", "solver", "seed"],
            CommandKind::Delta => &["integrand", "homog", "harness", "solver", "seed"],
            CommandKind::Verify => &["integrand", "harness", "seed"],
            CommandKind::Gamma => &["integrand", "xi", "homog", "harness", "solver", "seed"],
            CommandKind::Qcx => &["integrand", "xi", "point", "cell", "solver", "seed"],
        }
    }

    /// The part of `cfg` that determines the output.
    pub fn config_slice(&self, cfg: &ExperimentConfig) -> Result<Value> {
        let full = serde_json::to_value(cfg)?;
        let mut slice = serde_json::Map::new();
        for &s in self.sections() {
            slice.insert(s.to_string(), full.get(s).cloned().unwrap_or(Value::Null));
        }
        Ok(Value::Object(slice))
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Output> {
        match self {
            CommandKind::Eval => eval(cfg),
            CommandKind::Cell => cell(cfg),
            CommandKind::Homogenize => homogenize(cfg),
            CommandKind::Radial => radial(cfg),
            CommandKind::Delta => delta(cfg),
            CommandKind::Verify => verify(cfg),
            CommandKind::Gamma => gamma(cfg),
            CommandKind::Qcx => qcx(cfg),
        }
    }
}

// ---------------------------------------------------------------------------
// serialization

fn csv_bytes<R: Serialize>(schema: &str, rows: &[R]) -> Result<Vec<u8>> {
    let mut out = format!("# schema: {schema}\n").into_bytes();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    out.extend(w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    Ok(out)
}

fn jsonl_bytes(records: &[Value]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn artifacts(name: &str, csv_rows: Vec<u8>, records: &[Value]) -> Result<Artifacts> {
    Ok(vec![(format!("{name}.csv"), csv_rows), (format!("{name}.jsonl"), jsonl_bytes(records)?)])
}

/// Errors that mark a row as infeasible instead of aborting the run.
fn is_row_error(e: &Error) -> bool {
    matches!(e, Error::Infeasible(_) | Error::Domain(_))
}

fn infeasible_record(xi: &M, e: &Error) -> Value {
    json!({ "xi": xi, "status": "infeasible", "error": e.to_string() })
}

fn per_xi<R: Send>(
    points: &[M],
    f: impl Fn(&M) -> Result<R> + Sync,
) -> Result<Vec<(M, std::result::Result<R, Error>)>> {
    let results: Vec<_> = points.par_iter().map(|xi| (*xi, f(xi))).collect();
    let mut out = Vec::with_capacity(results.len());
    for (xi, r) in results {
        match r {
            Err(e) if !is_row_error(&e) => return Err(e),
            r => out.push((xi, r)),
        }
    }
    Ok(out)
}

fn count_failed<R>(rows: &[(M, std::result::Result<R, Error>)]) -> usize {
    rows.iter().filter(|(_, r)| r.is_err()).count()
}

// ---------------------------------------------------------------------------
// eval

#[derive(Serialize)]
struct EvalRow {
    xi11: f64,
    xi12: f64,
    xi21: f64,
    xi22: f64,
    x1: f64,
    x2: f64,
    #[serde(rename = "G")]
    growth: f64,
    g: f64,
    phi: f64,
    #[serde(rename = "W")]
    w: f64,
    status: &'static str,
}

pub const EVAL_SCHEMA: &str = "cellhom.eval.v1";

fn eval(cfg: &ExperimentConfig) -> Result<Output> {
    let p = cfg.integrand.p;
    let x = cfg.point.x;
    let weighted = cfg.integrand.params();
    let w = crate::integrand::StoredEnergy::new(weighted, cfg.integrand.phi);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for xi in cfg.xi.points()? {
        let row = EvalRow {
            xi11: xi.a11,
            xi12: xi.a12,
            xi21: xi.a21,
            xi22: xi.a22,
            x1: x[0],
            x2: x[1],
            growth: growth_eval(&xi, p),
            g: g_eval(&xi),
            phi: phi_eval(&cfg.integrand.phi, p, x, &xi),
            w: w.eval(x, &xi),
            status: if w.in_domain(&xi) { "ok" } else { "infeasible" },
        };
        records.push(json!({
            "xi": xi, "x": x, "G": finite_or_null(row.growth), "g": finite_or_null(row.g),
            "phi": row.phi, "W": finite_or_null(row.w), "status": row.status,
        }));
        rows.push(row);
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    Ok(Output {
        summary: format!("{} points, {failed} outside the effective domain", rows.len()),
        artifacts: artifacts("eval", csv_bytes(EVAL_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

// ---------------------------------------------------------------------------
// cell, homogenize, radial

/// Shared row layout of the cell, homogenize and radial outputs.
#[derive(Serialize, Default)]
#[allow(non_snake_case)]
struct HomogRow {
    xi11: f64,
    xi12: f64,
    xi21: f64,
    xi22: f64,
    k: Option<usize>,
    N: Option<usize>,
    density: Option<f64>,
    converged: Option<bool>,
    t: Option<f64>,
    hW: Option<f64>,
    hW_hat: Option<f64>,
    status: &'static str,
}

pub const HOMOG_SCHEMA: &str = "cellhom.homog.v1";

impl HomogRow {
    fn at(xi: &M) -> Self {
        Self { xi11: xi.a11, xi12: xi.a12, xi21: xi.a21, xi22: xi.a22, status: "ok", ..Default::default() }
    }

    fn infeasible(xi: &M) -> Self {
        Self { status: "infeasible", ..Self::at(xi) }
    }
}

fn cell(cfg: &ExperimentConfig) -> Result<Output> {
    let density = cfg.integrand.density();
    let opts = cfg.solver_options();
    let (k, n) = (cfg.cell.k, cfg.cell.n);
    let mesh = CellMesh::<f64>::build(k, n)?;
    let results = per_xi(&cfg.xi.points()?, |xi| minimize(xi, &*density, &mesh, &opts))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (xi, r) in &results {
        match r {
            Ok(sol) => {
                rows.push(HomogRow {
                    k: Some(k),
                    N: Some(n),
                    density: Some(sol.density),
                    converged: Some(sol.diagnostics.converged),
                    ..HomogRow::at(xi)
                });
                records.push(json!({
                    "xi": xi, "k": k, "n": n, "density": sol.density, "energy": sol.energy,
                    "diagnostics": sol.diagnostics, "status": "ok",
                }));
            }
            Err(e) => {
                rows.push(HomogRow::infeasible(xi));
                records.push(infeasible_record(xi, e));
            }
        }
    }
    Ok(Output {
        summary: format!("{} cell problems, {} infeasible", results.len(), count_failed(&results)),
        artifacts: artifacts("cell", csv_bytes(HOMOG_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}

fn homogenize(cfg: &ExperimentConfig) -> Result<Output> {
    let density = cfg.integrand.density();
    let opts = cfg.solver_options();
    let schedule = cfg.homog.schedule();
    let results = per_xi(&cfg.xi.points()?, |xi| hw_solve(xi, &*density, &schedule, &opts, &[]).map(|s| s.record))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (xi, r) in &results {
        match r {
            Ok(rec) => {
                for c in &rec.cells {
                    rows.push(HomogRow {
                        k: Some(c.k),
                        N: Some(c.n),
                        density: Some(c.density),
                        converged: Some(c.diagnostics.converged),
                        hW: Some(rec.hw),
                        ..HomogRow::at(xi)
                    });
                }
                let mut v = serde_json::to_value(rec)?;
                v["status"] = json!("ok");
                records.push(v);
            }
            Err(e) => {
                rows.push(HomogRow::infeasible(xi));
                records.push(infeasible_record(xi, e));
            }
        }
    }
    Ok(Output {
        summary: format!("{} points, {} infeasible", results.len(), count_failed(&results)),
        artifacts: artifacts("homogenize", csv_bytes(HOMOG_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}

fn radial(cfg: &ExperimentConfig) -> Result<Output> {
    let density = cfg.integrand.density();
    let opts = cfg.solver_options();
    let schedule = cfg.homog.schedule();
    let t_list = cfg.homog.t_values();
    let results = per_xi(&cfg.xi.points()?, |xi| radial_extension(xi, &*density, &t_list, &schedule, &opts))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (xi, r) in &results {
        match r {
            Ok(trace) => {
                for &(t, v) in &trace.trace {
                    rows.push(HomogRow { t: Some(t), hW: Some(v), hW_hat: Some(trace.hw_hat), ..HomogRow::at(xi) });
                }
                records.push(json!({
                    "xi": xi, "trace": trace.trace, "hw_hat": trace.hw_hat, "gap": trace.gap, "status": "ok",
                }));
            }
            Err(e) => {
                rows.push(HomogRow::infeasible(xi));
                records.push(infeasible_record(xi, e));
            }
        }
    }
    Ok(Output {
        summary: format!("{} radial traces, {} infeasible", results.len(), count_failed(&results)),
        artifacts: artifacts("radial", csv_bytes(HOMOG_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}

// ---------------------------------------------------------------------------
// suites

pub const DELTA_SCHEMA: &str = "cellhom.delta.v1";
pub const CHECK_SCHEMA: &str = "cellhom.check.v1";
pub const GAMMA_SCHEMA: &str = "cellhom.gamma.v1";
pub const QCX_SCHEMA: &str = "cellhom.qcx.v1";

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    passed: bool,
    value: Option<f64>,
    detail: &'a str,
}

fn check_rows(report: &crate::harness::Report) -> Vec<CheckRow<'_>> {
    report
        .checks
        .iter()
        .map(|c| CheckRow { name: &c.name, passed: c.passed, value: c.value, detail: &c.detail })
        .collect()
}

fn delta(cfg: &ExperimentConfig) -> Result<Output> {
    let suite = ru_usc_suite(&cfg.harness_config())?;
    let mut records: Vec<Value> = suite.rows.iter().map(serde_json::to_value).collect::<serde_json::Result<_>>()?;
    records.push(serde_json::to_value(&suite.report)?);
    let mut files = artifacts("delta", csv_bytes(DELTA_SCHEMA, &suite.rows)?, &records)?;
    files.push(("delta_checks.csv".into(), csv_bytes(CHECK_SCHEMA, &check_rows(&suite.report))?));
    let passed = suite.report.all_passed();
    Ok(Output { summary: suite.report.to_text(), artifacts: files, exit: if passed { 0 } else { 1 } })
}

fn verify(cfg: &ExperimentConfig) -> Result<Output> {
    let report = verify_structure(&cfg.harness_config(), &EffectiveDomain);
    let records: Vec<Value> = report.checks.iter().map(serde_json::to_value).collect::<serde_json::Result<_>>()?;
    Ok(Output {
        summary: report.to_text(),
        artifacts: artifacts("verify", csv_bytes(CHECK_SCHEMA, &check_rows(&report))?, &records)?,
        exit: if report.all_passed() { 0 } else { 1 },
    })
}

#[derive(Serialize)]
struct GammaRow {
    xi11: f64,
    xi12: f64,
    xi21: f64,
    xi22: f64,
    eps_inv: Option<usize>,
    density: Option<f64>,
    #[serde(rename = "hW")]
    hw: Option<f64>,
    #[serde(rename = "hW_hat")]
    hw_hat: Option<f64>,
    gap_density: Option<f64>,
    gap_hat: Option<f64>,
    status: &'static str,
}

fn gamma(cfg: &ExperimentConfig) -> Result<Output> {
    let density = cfg.integrand.density();
    let hcfg = cfg.harness_config();
    let results = per_xi(&cfg.xi.points()?, |xi| gamma_diagnostic(xi, &*density, &hcfg))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut within = true;
    for (xi, r) in &results {
        match r {
            Ok(d) => {
                for &(m, v) in &d.sweep {
                    rows.push(GammaRow {
                        xi11: xi.a11,
                        xi12: xi.a12,
                        xi21: xi.a21,
                        xi22: xi.a22,
                        eps_inv: Some(m),
                        density: Some(v),
                        hw: Some(d.hw),
                        hw_hat: Some(d.hw_hat),
                        gap_density: Some(d.gap_density),
                        gap_hat: Some(d.gap_hat),
                        status: "ok",
                    });
                }
                within &= d.to_report(hcfg.gap_tol).all_passed();
                let mut v = serde_json::to_value(d)?;
                v["status"] = json!("ok");
                records.push(v);
            }
            Err(e) => {
                rows.push(GammaRow {
                    xi11: xi.a11,
                    xi12: xi.a12,
                    xi21: xi.a21,
                    xi22: xi.a22,
                    eps_inv: None,
                    density: None,
                    hw: None,
                    hw_hat: None,
                    gap_density: None,
                    gap_hat: None,
                    status: "infeasible",
                });
                records.push(infeasible_record(xi, e));
            }
        }
    }
    Ok(Output {
        summary: format!(
            "{} points, {} infeasible, gaps within {}: {within}",
            results.len(),
            count_failed(&results),
            hcfg.gap_tol
        ),
        artifacts: artifacts("gamma", csv_bytes(GAMMA_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}

#[derive(Serialize)]
struct QcxRow {
    xi11: f64,
    xi12: f64,
    xi21: f64,
    xi22: f64,
    x1: f64,
    x2: f64,
    f: f64,
    #[serde(rename = "Qf")]
    qf: Option<f64>,
    status: &'static str,
}

fn qcx(cfg: &ExperimentConfig) -> Result<Output> {
    let density = cfg.integrand.density();
    let opts = cfg.solver_options();
    let x = cfg.point.x;
    let results = per_xi(&cfg.xi.points()?, |xi| quasiconvexify_point(&*density, x, xi, cfg.cell.n, &opts))?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (xi, r) in &results {
        let f = density.eval(x, xi);
        let (qf, status) = match r {
            Ok(q) => (Some(*q), "ok"),
            Err(_) => (None, "infeasible"),
        };
        rows.push(QcxRow { xi11: xi.a11, xi12: xi.a12, xi21: xi.a21, xi22: xi.a22, x1: x[0], x2: x[1], f, qf, status });
        records.push(match r {
            Ok(q) => json!({ "xi": xi, "x": x, "f": f, "Qf": q, "status": "ok" }),
            Err(e) => infeasible_record(xi, e),
        });
    }
    Ok(Output {
        summary: format!("{} points, {} infeasible", results.len(), count_failed(&results)),
        artifacts: artifacts("qcx", csv_bytes(QCX_SCHEMA, &rows)?, &records)?,
        exit: 0,
    })
}
