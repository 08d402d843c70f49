//! Supervised-dataset generation, splitting, and serialization.
//!
//! Scenarios perturb the nominal demand bus-by-bus with independent uniform
//! factors, are labeled by the reference solver, and persist as a
//! `manifest.json` plus `samples.csv` pair. Every persisted sample re-validates
//! on load through the same residual and box checks as external imports.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

use crate::grid_model::{AdmittanceMatrix, Network};
use crate::powerflow::DemandVector;
use crate::refsolver::{self, OpfSolution, SolverConfig};

/// One (demand input, optimal solution label) pair.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub scenario_id: usize,
    pub demand: DemandVector,
    pub solution: OpfSolution,
}

/// Descriptor persisted beside the sample table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub case_name: String,
    pub sample_count: usize,
    pub perturbation_range: (f64, f64),
    pub seed: u64,
    pub train_fraction: f64,
    pub schema_version: u32,
    pub columns: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("label yield too low: {accepted}/{attempted} scenarios solved; solver envelope problem")]
    LowYield { attempted: usize, accepted: usize },
    #[error(transparent)]
    Import(#[from] refsolver::ImportError),
}

/// How perturbation factors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Independent factor per bus and per quantity (P and Q separately).
    PerBus,
    /// One factor per scenario applied to every bus and both quantities.
    Global,
}

/// Draw demand scenarios: per bus, `pd = u_p · pd_nominal` and
/// `qd = u_q · qd_nominal` with u ~ Uniform[low, high] from a seeded stream.
/// Zero-demand buses stay zero.
pub fn sample_demands(net: &Network, count: usize, range: (f64, f64), seed: u64) -> Vec<DemandVector> {
    sample_demands_with(net, count, range, seed, PerturbMode::PerBus)
}

pub fn sample_demands_with(
    net: &Network,
    count: usize,
    range: (f64, f64),
    seed: u64,
    mode: PerturbMode,
) -> Vec<DemandVector> {
    assert!(count >= 1, "count must be at least 1");
    assert!(
        range.0 > 0.0 && range.0 <= range.1,
        "perturbation range must satisfy 0 < low <= high"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.n();
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if range.0 == range.1 {
            range.0
        } else {
            rng.gen_range(range.0..=range.1)
        }
    };
    (0..count)
        .map(|_| {
            let mut d = DemandVector::zeros(n);
            match mode {
                PerturbMode::PerBus => {
                    for (i, b) in net.buses.iter().enumerate() {
                        let up = draw(&mut rng);
                        let uq = draw(&mut rng);
                        d.pd[i] = up * b.p_demand_nominal;
                        d.qd[i] = uq * b.q_demand_nominal;
                    }
                }
                PerturbMode::Global => {
                    let u = draw(&mut rng);
                    for (i, b) in net.buses.iter().enumerate() {
                        d.pd[i] = u * b.p_demand_nominal;
                        d.qd[i] = u * b.q_demand_nominal;
                    }
                }
            }
            d
        })
        .collect()
}

/// Per-scenario labeling diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioDiagnostic {
    pub scenario: usize,
    pub status: String,
    pub outer_rounds: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationDiagnostics {
    pub attempted: usize,
    pub accepted: usize,
    pub scenarios: Vec<ScenarioDiagnostic>,
}

/// Sample demands and label each with the reference solver. The nominal case
/// is solved first and warm-starts every scenario. Failed scenarios are
/// dropped and counted; a yield below 50% aborts.
pub fn generate_dataset(
    net: &Network,
    ybus: &AdmittanceMatrix,
    solver_config: &SolverConfig,
    count: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<(Vec<LabeledSample>, GenerationDiagnostics), DatasetError> {
    let demands = sample_demands(net, count, range, seed);
    let nominal = crate::grid_model::nominal_demand(net);
    let warm = refsolver::solve_acopf(net, ybus, &nominal, solver_config, None)
        .map(|(sol, _)| sol)
        .ok();

    let results: Vec<(usize, Result<OpfSolution, String>, usize, f64)> = demands
        .par_iter()
        .enumerate()
        .map(|(k, demand)| {
            match refsolver::solve_acopf(net, ybus, demand, solver_config, warm.as_ref()) {
                Ok((sol, diag)) => (k, Ok(sol), diag.outer_rounds, diag.final_residual),
                Err(e) => (k, Err(e.to_string()), 0, f64::NAN),
            }
        })
        .collect();

    let mut samples = Vec::new();
    let mut scenarios = Vec::new();
    for (k, outcome, rounds, residual) in results {
        match outcome {
            Ok(solution) => {
                scenarios.push(ScenarioDiagnostic {
                    scenario: k,
                    status: "ok".into(),
                    outer_rounds: rounds,
                    final_residual: residual,
                });
                samples.push(LabeledSample {
                    scenario_id: samples.len(),
                    demand: demands[k].clone(),
                    solution,
                });
            }
            Err(msg) => scenarios.push(ScenarioDiagnostic {
                scenario: k,
                status: msg,
                outer_rounds: rounds,
                final_residual: residual,
            }),
        }
    }
    let diagnostics = GenerationDiagnostics {
        attempted: count,
        accepted: samples.len(),
        scenarios,
    };
    if samples.len() * 2 < count {
        return Err(DatasetError::LowYield {
            attempted: count,
            accepted: samples.len(),
        });
    }
    Ok((samples, diagnostics))
}

/// Seeded shuffle-then-partition split. Deterministic, disjoint, exhaustive.
pub fn split(
    samples: &[LabeledSample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>), DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::Invalid("cannot split an empty sample list".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if samples.len() < 2 {
        return Err(DatasetError::Invalid("need at least 2 samples to split".into()));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let k = ((train_fraction * samples.len() as f64).round() as usize).clamp(1, samples.len() - 1);
    let train = idx[..k].iter().map(|&i| samples[i].clone()).collect();
    let test = idx[k..].iter().map(|&i| samples[i].clone()).collect();
    Ok((train, test))
}

/// Header tokens of the sample CSV for a given network:
/// `scenario_id, pd_1.., qd_1.., vm_1.., va_1.., pg_g<bus>.., qg_g<bus>.., objective`
/// with generator columns named by external bus id.
pub fn sample_csv_header(net: &Network) -> Vec<String> {
    let n = net.n();
    let mut h = Vec::with_capacity(4 * n + 2 * net.generators.len() + 2);
    h.push("scenario_id".to_string());
    for k in 1..=n {
        h.push(format!("pd_{k}"));
    }
    for k in 1..=n {
        h.push(format!("qd_{k}"));
    }
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
    h.push("objective".to_string());
    h
}

/// Write `manifest.json` and `samples.csv` into `dir`.
pub fn write_dataset(
    dir: &Path,
    net: &Network,
    manifest: &DatasetManifest,
    samples: &[LabeledSample],
) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let manifest_json =
        serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest_json).map_err(|e| io_err(&manifest_path, e))?;

    let csv_path = dir.join("samples.csv");
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?,
    );
    write_samples_csv(&mut out, net, samples).map_err(|e| io_err(&csv_path, e))?;
    Ok(())
}

pub fn write_samples_csv<W: Write>(
    out: &mut W,
    net: &Network,
    samples: &[LabeledSample],
) -> std::io::Result<()> {
    let header = sample_csv_header(net);
    writeln!(out, "{}", header.join(","))?;
    let mut gen_buses: Vec<usize> = net.generators.iter().map(|g| g.bus).collect();
    gen_buses.sort_unstable();
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for s in samples {
        fields.clear();
        fields.push(s.scenario_id.to_string());
        for v in s.demand.pd.iter().chain(&s.demand.qd) {
            fields.push(fmt_f64(*v));
        }
        for v in s.solution.voltage.vm.iter().chain(&s.solution.voltage.va) {
            fields.push(fmt_f64(*v));
        }
        for &b in &gen_buses {
            fields.push(fmt_f64(s.solution.gen.pg[b]));
        }
        for &b in &gen_buses {
            fields.push(fmt_f64(s.solution.gen.qg[b]));
        }
        fields.push(fmt_f64(s.solution.objective));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Rust's float `Display` is the shortest decimal form that round-trips the
/// exact f64 bits, which is what the on-disk schema requires.
fn fmt_f64(v: f64) -> String {
    v.to_string()
}

/// Load and re-validate a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path, net: &Network) -> Result<(DatasetManifest, Vec<LabeledSample>), DatasetError> {
    let manifest_path = dir.join("manifest.json");
    let manifest_text = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| DatasetError::Invalid(format!("manifest: {e}")))?;
    let samples = read_samples(&dir.join("samples.csv"), net)?;
    Ok((manifest, samples))
}

/// Load a sample CSV through the import-validation path; rejected rows are an
/// error here because a self-written dataset must re-validate cleanly.
pub fn read_samples(path: &Path, net: &Network) -> Result<Vec<LabeledSample>, DatasetError> {
    let outcome = refsolver::import_labels(path, net)?;
    if !outcome.rejects.is_empty() {
        let first = &outcome.rejects[0];
        return Err(DatasetError::Invalid(format!(
            "{} row(s) failed re-validation; first at line {}: {}",
            outcome.rejects.len(),
            first.line,
            first.reason
        )));
    }
    Ok(outcome
        .samples
        .into_iter()
        .map(|s| LabeledSample {
            scenario_id: s.scenario_id,
            demand: s.demand,
            solution: s.solution,
        })
        .collect())
}

fn io_err(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}
