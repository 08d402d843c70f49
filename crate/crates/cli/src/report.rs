//! Run-report assembly: `report.json`, `table2.csv`, and `curves.csv`.
//!
//! Every number in the CSV artifacts is recomputable from the exported raw
//! predictions and calibration outcomes; the JSON additionally carries
//! wall-clock timings, which are excluded from the CSVs so identical seeded
//! invocations produce byte-identical CSV files.

use crate::commands::{trace_curves, write_calibrated_csv, CalibrationRun};
use gridflow_core::grid_model::{AdmittanceMatrix, Network};
use gridflow_core::neural::EvalMetrics;
use gridflow_core::powerflow::balance_residual;
use serde::Serialize;
use std::path::Path;

/// Aggregate quality and convergence figures for one evaluated model.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub case_name: String,
    pub method: String,
    pub parameters: usize,
    pub scenarios: usize,
    pub v_mse: f64,
    pub phi_mse: f64,
    pub pg_mse: f64,
    pub qg_mse: f64,
    /// Mean power-balance mismatch of raw predictions (dispatch recovered
    /// from the voltages, before box projection).
    pub feasibility_pre: f64,
    /// Same metric after calibration.
    pub feasibility_post: f64,
    /// Mean relative cost excess of the box-clipped predictions.
    pub gap_pre: f64,
    /// Mean relative cost excess after calibration, over converged scenarios.
    pub gap_post: f64,
    pub convergence_rate: f64,
    pub epochs_mean: f64,
    pub epochs_min: usize,
    pub epochs_max: usize,
    pub rho: f64,
    pub eval_seconds: f64,
    pub calibrate_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn write_curves_csv(path: &Path, curves: &[CurvePoint]) -> anyhow::Result<()> {
    let mut body = String::from("epoch,mean_residual,min_residual,max_residual\n");
    for p in curves {
        body.push_str(&format!("{},{},{},{}\n", p.epoch, p.mean, p.min, p.max));
    }
    std::fs::write(path, body)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn emit_report(
    out: &Path,
    net: &Network,
    ybus: &AdmittanceMatrix,
    method: &str,
    parameters: usize,
    metrics: &EvalMetrics,
    run: &CalibrationRun,
    rho: f64,
    eval_seconds: f64,
    calibrate_seconds: f64,
) -> anyhow::Result<RunReport> {
    let total = run.outcomes.len();
    let converged: Vec<usize> = (0..total).filter(|&k| run.outcomes[k].converged).collect();

    let mut feasibility_post = 0.0;
    for (s, o) in run.scenarios.iter().zip(&run.outcomes) {
        feasibility_post += balance_residual(net, ybus, &o.solution.voltage, &s.demand).mean_abs / total as f64;
    }
    let (mut gap_pre, mut gap_post) = (0.0, 0.0);
    if !converged.is_empty() {
        for &k in &converged {
            let s = &run.scenarios[k];
            let o = &run.outcomes[k];
            gap_post += (o.solution.objective - s.solution.objective) / s.solution.objective / converged.len() as f64;
        }
        gap_pre = metrics.optimality_gap;
    }

    let epochs: Vec<usize> = converged.iter().map(|&k| run.outcomes[k].epochs_used).collect();
    let epochs_mean = if epochs.is_empty() {
        0.0
    } else {
        epochs.iter().sum::<usize>() as f64 / epochs.len() as f64
    };
    let report = RunReport {
        case_name: net.name.clone(),
        method: method.to_string(),
        parameters,
        scenarios: total,
        v_mse: metrics.v_mse,
        phi_mse: metrics.phi_mse,
        pg_mse: metrics.pg_mse,
        qg_mse: metrics.qg_mse,
        feasibility_pre: metrics.feasibility,
        feasibility_post,
        gap_pre,
        gap_post,
        convergence_rate: converged.len() as f64 / total.max(1) as f64,
        epochs_mean,
        epochs_min: epochs.iter().copied().min().unwrap_or(0),
        epochs_max: epochs.iter().copied().max().unwrap_or(0),
        rho,
        eval_seconds,
        calibrate_seconds,
    };

    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    write_calibrated_csv(&out.join("calibrated.csv"), net, run)?;
    write_curves_csv(&out.join("curves.csv"), &trace_curves(&run.outcomes))?;

    let mut table = String::from(
        "grid,method,parameters,v_mse,phi_mse,pg_mse,qg_mse,feasibility,optimality_gap\n",
    );
    table.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        report.case_name,
        report.method,
        report.parameters,
        report.v_mse,
        report.phi_mse,
        report.pg_mse,
        report.qg_mse,
        report.feasibility_post,
        report.gap_post,
    ));
    std::fs::write(out.join("table2.csv"), table)?;
    Ok(report)
}
