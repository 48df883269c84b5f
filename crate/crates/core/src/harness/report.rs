use std::fs;
use std::path::Path;

use super::eval::EvalReport;
use crate::dyad::dyads;
use crate::error::Result;

pub const RMSE_TABLE: &str = "rmse_table.csv";
pub const SCATTER: &str = "scatter.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const FIT_JSON: &str = "fit.json";

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `model,rmse_in,rmse_out`, one row per fitted model.
pub fn rmse_table(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "rmse_in", "rmse_out"])?;
    for m in &report.models {
        w.write_record([m.model.clone(), num(m.rmse_in), opt(m.rmse_out)])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8 csv"))
}

/// `model,origin,dest,true,predicted` over every test dyad. Empty when the
/// test flows are unknown.
pub fn scatter(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "origin", "dest", "true", "predicted"])?;
    if let Some(truth) = &report.truth {
        let n = report.nodes.len();
        for m in &report.models {
            for (p, (i, j)) in dyads(n).enumerate() {
                w.write_record([
                    m.model.clone(),
                    report.nodes[i].clone(),
                    report.nodes[j].clone(),
                    num(truth[p]),
                    num(m.predicted[p]),
                ])?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8 csv"))
}

/// `model,origin,dest,predicted` for the forecast year.
pub fn predictions(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "origin", "dest", "predicted"])?;
    let n = report.nodes.len();
    for m in &report.models {
        for (p, (i, j)) in dyads(n).enumerate() {
            w.write_record([
                m.model.clone(),
                report.nodes[i].clone(),
                report.nodes[j].clone(),
                num(m.predicted[p]),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf8 csv"))
}

pub fn fit_json(report: &EvalReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Write the rmse table, scatter data and fit summary into `outdir`.
pub fn emit_report(report: &EvalReport, outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join(RMSE_TABLE), rmse_table(report)?)?;
    fs::write(outdir.join(SCATTER), scatter(report)?)?;
    fs::write(outdir.join(FIT_JSON), fit_json(report)?)?;
    Ok(())
}
