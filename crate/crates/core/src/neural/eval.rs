//! Test-set evaluation and prediction export.

use std::io::Write;

use super::{physics_forward, Model};
use crate::calibration::clip_scalar;
use crate::dataset::LabeledSample;
use crate::grid_model::{AdmittanceMatrix, Network};
use crate::powerflow::{generation_cost, residual_check, GenSetpoints};
use serde::{Deserialize, Serialize};

/// Mean metrics over a labeled test set, one value per report column.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub v_mse: f64,
    pub phi_mse: f64,
    pub pg_mse: f64,
    pub qg_mse: f64,
    /// Mean over scenarios of the mean per-bus power-balance mismatch.
    pub feasibility: f64,
    /// Mean of (Ĉ − C*)/C* with Ĉ costed on the box-clipped dispatch.
    pub optimality_gap: f64,
    pub scenarios: usize,
}

/// Evaluate a model against labels: per-variable MSEs (dispatch unclipped, as
/// produced), feasibility via the residual check, and the optimality gap with
/// dispatch clipped into its bounds for costing.
pub fn evaluate(
    model: &Model,
    test_set: &[LabeledSample],
    net: &Network,
    ybus: &AdmittanceMatrix,
) -> EvalMetrics {
    assert!(!test_set.is_empty(), "test set must be non-empty");
    let n = net.n() as f64;
    let ng = net.generators.len() as f64;
    let mut m = EvalMetrics {
        v_mse: 0.0,
        phi_mse: 0.0,
        pg_mse: 0.0,
        qg_mse: 0.0,
        feasibility: 0.0,
        optimality_gap: 0.0,
        scenarios: test_set.len(),
    };
    let count = test_set.len() as f64;
    for sample in test_set {
        let pf = physics_forward(model, net, ybus, &sample.demand);
        for i in 0..net.n() {
            m.v_mse += sq(pf.voltage.vm[i] - sample.solution.voltage.vm[i]) / (n * count);
            m.phi_mse += sq(pf.voltage.va[i] - sample.solution.voltage.va[i]) / (n * count);
        }
        for g in &net.generators {
            m.pg_mse += sq(pf.gen.pg[g.bus] - sample.solution.gen.pg[g.bus]) / (ng * count);
            m.qg_mse += sq(pf.gen.qg[g.bus] - sample.solution.gen.qg[g.bus]) / (ng * count);
        }
        let report = residual_check(ybus, &pf.voltage, &sample.demand, &pf.gen);
        m.feasibility += report.mean_abs / count;
        let clipped = clip_dispatch(net, &pf.gen);
        let cost = generation_cost(net, &clipped);
        m.optimality_gap += (cost - sample.solution.objective) / sample.solution.objective / count;
    }
    m
}

/// Dispatch with every generator projected into its [C1]/[C2] box.
pub fn clip_dispatch(net: &Network, gen: &GenSetpoints) -> GenSetpoints {
    let mut out = gen.clone();
    for g in &net.generators {
        out.pg[g.bus] = clip_scalar(gen.pg[g.bus], g.p_min, g.p_max);
        out.qg[g.bus] = clip_scalar(gen.qg[g.bus], g.q_min, g.q_max);
    }
    out
}

/// Prediction CSV header: vm_1..vm_n, va_1..va_n, then pg/qg per generator bus
/// (external ids), matching the dataset column convention.
pub fn prediction_csv_header(net: &Network) -> Vec<String> {
    let n = net.n();
    let mut h = Vec::new();
    h.push("scenario_id".to_string());
    for k in 1..=n {
        h.push(format!("vm_{k}"));
    }
    for k in 1..=n {
        h.push(format!("va_{k}"));
    }
    let mut gen_buses: Vec<usize> = net.generators.iter().map(|g| g.bus).collect();
    gen_buses.sort_unstable();
    for &b in &gen_buses {
        h.push(format!("pg_g{}", net.buses[b].ext_id));
    }
    for &b in &gen_buses {
        h.push(format!("qg_g{}", net.buses[b].ext_id));
    }
    h
}

/// Export model predictions for a set of scenarios, one row per scenario.
pub fn write_predictions(
    path: &std::path::Path,
    model: &Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    scenarios: &[LabeledSample],
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_predictions_to(&mut out, model, net, ybus, scenarios)
}

pub fn write_predictions_to<W: Write>(
    out: &mut W,
    model: &Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    scenarios: &[LabeledSample],
) -> std::io::Result<()> {
    writeln!(out, "{}", prediction_csv_header(net).join(","))?;
    let mut gen_buses: Vec<usize> = net.generators.iter().map(|g| g.bus).collect();
    gen_buses.sort_unstable();
    for s in scenarios {
        let pf = physics_forward(model, net, ybus, &s.demand);
        let mut fields = vec![s.scenario_id.to_string()];
        for v in pf.voltage.vm.iter().chain(&pf.voltage.va) {
            fields.push(v.to_string());
        }
        for &b in &gen_buses {
            fields.push(pf.gen.pg[b].to_string());
        }
        for &b in &gen_buses {
            fields.push(pf.gen.qg[b].to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}
