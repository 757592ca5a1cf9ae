use std::path::Path;

use serde_json::{json, Value};

use crate::error::Result;
use crate::estimate::{Estimator, FitReport};
use crate::forecast::ForecastReport;
use crate::inference::{AsymptoticInference, ConfidenceInterval};
use crate::model::ModelSpec;
use crate::selection::SelectionReport;

use super::write_atomic;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Non-finite numbers become `null`.
fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// 1-based `(lag, term, mode, row, col)` labels in stacked parameter order.
fn parameter_labels(spec: &ModelSpec) -> Vec<[usize; 5]> {
    let mut out = Vec::with_capacity(spec.parameter_len());
    for (i, r) in spec.terms() {
        for (k, &dk) in spec.dims().iter().enumerate() {
            for col in 0..dk {
                for row in 0..dk {
                    out.push([i + 1, r + 1, k + 1, row + 1, col + 1]);
                }
            }
        }
    }
    out
}

/// Fit summary as JSON, optionally with confidence intervals.
pub fn fit_report_json(
    estimator: Estimator,
    report: &FitReport,
    inference: Option<(&AsymptoticInference, &[ConfidenceInterval], f64)>,
) -> String {
    let mut v = json!({
        "estimator": estimator.name(),
        "sweeps_used": report.sweeps_used,
        "converged": report.converged,
        "sse": num(report.sse),
        "objective_trace": report.objective_trace.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        "notes": report.notes,
    });
    if let Some((inf, cis, level)) = inference {
        let labels = parameter_labels(report.model.spec());
        let rows: Vec<Value> = labels
            .iter()
            .zip(cis)
            .map(|(l, ci)| {
                json!({
                    "lag": l[0], "term": l[1], "mode": l[2], "row": l[3], "col": l[4],
                    "estimate": num(ci.estimate),
                    "stderr": num(ci.stderr),
                    "lower": num(ci.lower),
                    "upper": num(ci.upper),
                })
            })
            .collect();
        v["inference"] = json!({
            "method": format!("{:?}", inf.method).to_lowercase(),
            "n": inf.n,
            "level": level,
            "parameters": rows,
        });
    }
    pretty(&v)
}

pub fn selection_report_json(rep: &SelectionReport) -> String {
    let grid: Vec<Value> = rep
        .grid
        .iter()
        .map(|c| {
            json!({
                "kranks": c.kranks,
                "ic": num(c.ic),
                "sse": num(c.sse),
                "sweeps": c.sweeps,
                "converged": c.converged,
                "failure": c.failure,
            })
        })
        .collect();
    pretty(&json!({
        "mode": format!("{:?}", rep.mode).to_lowercase(),
        "penalty": rep.penalty.name(),
        "t_eff": rep.t_eff,
        "order": rep.order(),
        "chosen": rep.chosen,
        "grid": grid,
    }))
}

/// `method,mse,failed_targets` per method, then a `TOTAL` row.
pub fn forecast_summary_csv(rep: &ForecastReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "mse", "failed_targets"]).expect("in-memory write");
    for m in &rep.methods {
        let failed: Vec<String> = m.failures.iter().map(|(t, _)| t.to_string()).collect();
        w.write_record([m.name.clone(), format!("{:.16e}", m.mse), failed.join(" ")])
            .expect("in-memory write");
    }
    w.write_record(["TOTAL".to_string(), format!("{:.16e}", rep.total), String::new()])
        .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One row per target with each method's squared error.
pub fn forecast_steps_csv(rep: &ForecastReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["target".to_string()];
    header.extend(rep.methods.iter().map(|m| m.name.clone()));
    w.write_record(&header).expect("in-memory write");
    for (j, t) in rep.targets.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(rep.methods.iter().map(|m| format!("{:.16e}", m.step_errors[j])));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
