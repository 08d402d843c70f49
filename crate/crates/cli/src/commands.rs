//! Subcommand implementations.

use crate::report::{emit_report, CurvePoint};
use crate::{user_error, CalibrateArgs, EvalArgs, GenDataArgs, PfArgs, PredictArgs, ReportArgs, TrainArgs};
use anyhow::Context;
use gridflow_core::calibration::{calibrate as run_calibration, CalibrationConfig, CalibrationOutcome};
use gridflow_core::dataset::{self, DatasetManifest, LabeledSample};
use gridflow_core::grid_model::{build_ybus, nominal_demand, parse_case_file, AdmittanceMatrix, Network};
use gridflow_core::neural::{self, Model, ModelSpec, TrainConfig};
use gridflow_core::powerflow::{
    solve_gauss_seidel, solve_newton_raphson, NrOptions, VoltageProfile,
};
use gridflow_core::refsolver::SolverConfig;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub fn load_case(path: &Path) -> anyhow::Result<Network> {
    if !path.exists() {
        return user_error(format!("case file not found: {}", path.display()));
    }
    parse_case_file(path).map_err(|e| anyhow::Error::new(crate::UserError(format!("{e}"))))
}

pub fn case_validate(path: &Path) -> anyhow::Result<()> {
    let net = load_case(path)?;
    println!(
        "{} buses, {} generators, {} branches",
        net.n(),
        net.generators.len(),
        net.branches.len()
    );
    Ok(())
}

pub fn case_show(path: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let net = load_case(path)?;
    let json = gridflow_core::grid_model::serialize_case(&net);
    match out {
        Some(p) => std::fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

pub fn ybus(case: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let net = load_case(case)?;
    let y = build_ybus(&net);
    let mut nonzeros = 0usize;
    let mut body = String::from("row,col,conductance,susceptance\n");
    for i in 0..net.n() {
        for j in 0..net.n() {
            let v = y.get(i, j);
            if v.re != 0.0 || v.im != 0.0 {
                nonzeros += 1;
                body.push_str(&format!("{},{},{},{}\n", i + 1, j + 1, v.re, v.im));
            }
        }
    }
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("ybus.csv");
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            println!("{}x{} admittance matrix, {} nonzeros -> {}", net.n(), net.n(), nonzeros, path.display());
        }
        None => {
            println!("{}x{} admittance matrix, {} nonzeros", net.n(), net.n(), nonzeros);
        }
    }
    Ok(())
}

pub fn pf(args: &PfArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let mut demand = nominal_demand(&net);
    match args.demand.as_str() {
        "nominal" => {}
        other => {
            let factor: f64 = other
                .parse()
                .map_err(|_| crate::UserError(format!("--demand must be 'nominal' or a scale factor, got '{other}'")))?;
            for v in demand.pd.iter_mut().chain(demand.qd.iter_mut()) {
                *v *= factor;
            }
        }
    }
    let flat = VoltageProfile::flat(net.n());
    let result = match args.method.as_str() {
        "newton" => solve_newton_raphson(
            &net,
            &ybus,
            &demand,
            &flat,
            &NrOptions {
                tol: args.tol,
                max_iter: 50,
            },
        ),
        "gauss" => solve_gauss_seidel(&net, &ybus, &demand, &flat, args.tol, 50_000),
        other => return user_error(format!("unknown power-flow method '{other}'")),
    };
    println!(
        "{}: {} in {} iterations, residual {:.3e}",
        args.method,
        if result.converged { "converged" } else { "did not converge" },
        result.iterations,
        result.final_residual
    );
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let mut rows = String::from("bus,vm,va,pg,qg\n");
        for b in &net.buses {
            rows.push_str(&format!(
                "{},{},{},{},{}\n",
                b.ext_id,
                result.voltage.vm[b.id],
                result.voltage.va[b.id],
                result.gen.pg[b.id],
                result.gen.qg[b.id]
            ));
        }
        std::fs::write(dir.join("powerflow.csv"), rows)?;
    }
    if !result.converged {
        return user_error("power flow did not converge");
    }
    Ok(())
}

fn parse_range(text: &str) -> anyhow::Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return user_error(format!("--range must be LO,HI, got '{text}'"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| crate::UserError(format!("bad range low '{}'", parts[0])))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| crate::UserError(format!("bad range high '{}'", parts[1])))?;
    if !(lo > 0.0 && lo <= hi) {
        return user_error(format!("range must satisfy 0 < lo <= hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

pub fn gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let range = parse_range(&args.range)?;
    if args.count == 0 {
        return user_error("--count must be at least 1");
    }
    if !(args.train_fraction > 0.0 && args.train_fraction < 1.0) {
        return user_error("--train-fraction must be in (0, 1)");
    }
    let started = Instant::now();
    let (samples, diagnostics) =
        dataset::generate_dataset(&net, &ybus, &SolverConfig::default(), args.count, range, args.seed)
            .map_err(|e| crate::UserError(e.to_string()))?;
    let manifest = DatasetManifest {
        case_name: net.name.clone(),
        sample_count: samples.len(),
        perturbation_range: range,
        seed: args.seed,
        train_fraction: args.train_fraction,
        schema_version: 1,
        columns: dataset::sample_csv_header(&net).join(","),
    };
    dataset::write_dataset(&args.out, &net, &manifest, &samples)?;
    let mut diag_out = std::io::BufWriter::new(std::fs::File::create(args.out.join("diagnostics.jsonl"))?);
    for d in &diagnostics.scenarios {
        writeln!(diag_out, "{}", serde_json::to_string(d)?)?;
    }
    println!(
        "labeled {}/{} scenarios in {:.1?} -> {}",
        diagnostics.accepted,
        diagnostics.attempted,
        started.elapsed(),
        args.out.display()
    );
    Ok(())
}

pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<LabeledSample>,
}

pub fn load_dataset(path: &Path, net: &Network) -> anyhow::Result<LoadedDataset> {
    if !path.exists() {
        return user_error(format!("dataset file not found: {}", path.display()));
    }
    if path.is_dir() {
        let (manifest, samples) = dataset::read_dataset(path, net).map_err(|e| crate::UserError(e.to_string()))?;
        Ok(LoadedDataset { manifest, samples })
    } else {
        let samples = dataset::read_samples(path, net).map_err(|e| crate::UserError(e.to_string()))?;
        let manifest = DatasetManifest {
            case_name: net.name.clone(),
            sample_count: samples.len(),
            perturbation_range: (0.0, 0.0),
            seed: 0,
            train_fraction: 0.8,
            schema_version: 1,
            columns: dataset::sample_csv_header(net).join(","),
        };
        Ok(LoadedDataset { manifest, samples })
    }
}

/// Deterministic train/test partition from the manifest parameters.
pub fn split_dataset(loaded: &LoadedDataset) -> anyhow::Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    dataset::split(&loaded.samples, loaded.manifest.train_fraction, loaded.manifest.seed)
        .map_err(|e| anyhow::Error::new(crate::UserError(e.to_string())))
}

pub fn select_split(loaded: &LoadedDataset, which: &str) -> anyhow::Result<Vec<LabeledSample>> {
    match which {
        "all" => Ok(loaded.samples.clone()),
        "train" => Ok(split_dataset(loaded)?.0),
        "test" => Ok(split_dataset(loaded)?.1),
        other => user_error(format!("unknown split '{other}' (expected test|train|all)")),
    }
}

fn parse_hidden(text: &str) -> anyhow::Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| anyhow::Error::new(crate::UserError(format!("bad hidden width '{t}'"))))
        })
        .collect()
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let loaded = load_dataset(&args.dataset, &net)?;
    let (train_set, test_set) = split_dataset(&loaded)?;
    let hidden = parse_hidden(&args.hidden)?;
    let spec = ModelSpec::for_network(&net, hidden, gridflow_core::neural::Activation::LeakyRelu);
    let model = neural::init_model(&spec, args.seed).map_err(|e| crate::UserError(e.to_string()))?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        loss_mode: args.loss_mode,
        seed: args.seed,
        lr_decay_every: args.lr_decay_every,
        ..TrainConfig::default()
    };
    log::info!(
        "training on {} samples ({} held out for testing), {} parameters",
        train_set.len(),
        test_set.len(),
        spec.parameter_count()
    );
    let started = Instant::now();
    let outcome = neural::train(model, &net, &ybus, &train_set, &config);
    std::fs::create_dir_all(&args.out)?;
    neural::save_model(&outcome.model, &args.out.join("model.json"))
        .map_err(|e| anyhow::anyhow!("saving checkpoint: {e}"))?;
    let mut history = String::from("epoch,v_mse,phi_mse,pg_mse,qg_mse,pd_recon_mse,qd_recon_mse,total,validation_total\n");
    for (e, h) in outcome.history.iter().enumerate() {
        let val = outcome
            .validation_history
            .get(e)
            .map(|v| v.to_string())
            .unwrap_or_default();
        history.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e, h.v_mse, h.phi_mse, h.pg_mse, h.qg_mse, h.pd_recon_mse, h.qd_recon_mse, h.total, val
        ));
    }
    std::fs::write(args.out.join("history.csv"), history)?;
    let last = outcome.history.last().cloned().unwrap_or_default();
    println!(
        "trained {} epochs in {:.1?}; final training loss {:.3e}; best validation epoch {}{}",
        outcome.history.len(),
        started.elapsed(),
        last.total,
        outcome.best_epoch,
        if outcome.diverged { " (stopped on divergence)" } else { "" }
    );
    Ok(())
}

pub fn load_model_checked(path: &Path, net: &Network) -> anyhow::Result<Model> {
    if !path.exists() {
        return user_error(format!("model file not found: {}", path.display()));
    }
    let model = neural::load_model(path).map_err(|e| crate::UserError(e.to_string()))?;
    if model.spec.output_dim != 2 * net.n() {
        return user_error(format!(
            "model output dimension {} does not match the {}-bus case",
            model.spec.output_dim,
            net.n()
        ));
    }
    Ok(model)
}

pub fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let loaded = load_dataset(&args.dataset, &net)?;
    let scenarios = select_split(&loaded, &args.split)?;
    let model = load_model_checked(&args.model, &net)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("predictions.csv");
    neural::write_predictions(&path, &model, &net, &ybus, &scenarios)?;
    println!("wrote {} predictions -> {}", scenarios.len(), path.display());
    Ok(())
}

pub struct CalibrationRun {
    pub outcomes: Vec<CalibrationOutcome>,
    pub scenarios: Vec<LabeledSample>,
}

pub fn run_calibration_over(
    net: &Network,
    ybus: &AdmittanceMatrix,
    model: &Model,
    scenarios: &[LabeledSample],
    config: &CalibrationConfig,
) -> anyhow::Result<CalibrationRun> {
    let outcomes: Vec<CalibrationOutcome> = scenarios
        .par_iter()
        .map(|s| {
            let pf = neural::physics_forward(model, net, ybus, &s.demand);
            let candidate = pf.solution(net, ybus, &s.demand);
            run_calibration(net, ybus, &s.demand, &candidate, config)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("calibration failed: {e}"))?;
    Ok(CalibrationRun {
        outcomes,
        scenarios: scenarios.to_vec(),
    })
}

/// Per-epoch mean/min/max of the residual traces over converged scenarios;
/// traces that end early contribute their final value.
pub fn trace_curves(outcomes: &[CalibrationOutcome]) -> Vec<CurvePoint> {
    let converged: Vec<&CalibrationOutcome> = outcomes.iter().filter(|o| o.converged).collect();
    if converged.is_empty() {
        return Vec::new();
    }
    let longest = converged.iter().map(|o| o.residual_trace.len()).max().unwrap_or(1);
    (0..longest)
        .map(|epoch| {
            let mut mean = 0.0;
            let mut min = f64::INFINITY;
            let mut max = 0.0f64;
            for o in &converged {
                let v = *o
                    .residual_trace
                    .get(epoch)
                    .unwrap_or_else(|| o.residual_trace.last().expect("nonempty trace"));
                mean += v;
                min = min.min(v);
                max = max.max(v);
            }
            CurvePoint {
                epoch,
                mean: mean / converged.len() as f64,
                min,
                max,
            }
        })
        .collect()
}

pub fn write_calibrated_csv(
    path: &Path,
    net: &Network,
    run: &CalibrationRun,
) -> anyhow::Result<()> {
    let samples: Vec<LabeledSample> = run
        .scenarios
        .iter()
        .zip(&run.outcomes)
        .map(|(s, o)| LabeledSample {
            scenario_id: s.scenario_id,
            demand: s.demand.clone(),
            solution: o.solution.clone(),
        })
        .collect();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    dataset::write_samples_csv(&mut out, net, &samples)?;
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let loaded = load_dataset(&args.dataset, &net)?;
    let scenarios = select_split(&loaded, &args.split)?;
    let model = load_model_checked(&args.model, &net)?;
    let config = CalibrationConfig {
        rho: args.rho,
        max_epochs: args.max_epochs,
        ..CalibrationConfig::default()
    };
    let started = Instant::now();
    let run = run_calibration_over(&net, &ybus, &model, &scenarios, &config)?;
    std::fs::create_dir_all(&args.out)?;
    write_calibrated_csv(&args.out.join("calibrated.csv"), &net, &run)?;
    crate::report::write_curves_csv(&args.out.join("curves.csv"), &trace_curves(&run.outcomes))?;

    let converged = run.outcomes.iter().filter(|o| o.converged).count();
    let mut trace_rows = String::from("scenario_id,converged,epochs_used,entry_residual,final_residual,clips\n");
    for (s, o) in run.scenarios.iter().zip(&run.outcomes) {
        trace_rows.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.scenario_id,
            o.converged,
            o.epochs_used,
            o.residual_trace.first().unwrap(),
            o.residual_trace.last().unwrap(),
            o.clip_events.total()
        ));
    }
    std::fs::write(args.out.join("scenarios.csv"), trace_rows)?;
    println!(
        "calibrated {}/{} scenarios to rho {:.1e} in {:.1?}",
        converged,
        run.outcomes.len(),
        args.rho,
        started.elapsed()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let loaded = load_dataset(&args.dataset, &net)?;
    let scenarios = select_split(&loaded, &args.split)?;
    if scenarios.is_empty() {
        return user_error("selected split contains no scenarios");
    }
    let model = load_model_checked(&args.model, &net)?;
    let metrics = neural::evaluate(&model, &scenarios, &net, &ybus);
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    println!(
        "v_mse {:.3e}  phi_mse {:.3e}  pg_mse {:.3e}  qg_mse {:.3e}  feasibility {:.3e}  gap {:.3}%",
        metrics.v_mse,
        metrics.phi_mse,
        metrics.pg_mse,
        metrics.qg_mse,
        metrics.feasibility,
        metrics.optimality_gap * 100.0
    );
    Ok(())
}

pub fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let net = load_case(&args.case)?;
    let ybus = build_ybus(&net);
    let loaded = load_dataset(&args.dataset, &net)?;
    let scenarios = select_split(&loaded, "test")?;
    if scenarios.is_empty() {
        return user_error("dataset has no test scenarios");
    }
    let model = load_model_checked(&args.model, &net)?;
    let config = CalibrationConfig {
        rho: args.rho,
        max_epochs: args.max_epochs,
        ..CalibrationConfig::default()
    };

    let t_eval = Instant::now();
    let metrics = neural::evaluate(&model, &scenarios, &net, &ybus);
    let eval_seconds = t_eval.elapsed().as_secs_f64();

    let t_cal = Instant::now();
    let run = run_calibration_over(&net, &ybus, &model, &scenarios, &config)?;
    let calibrate_seconds = t_cal.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out)?;
    let method = args
        .model
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    let report = emit_report(
        &args.out,
        &net,
        &ybus,
        &method,
        model.parameter_count(),
        &metrics,
        &run,
        args.rho,
        eval_seconds,
        calibrate_seconds,
    )?;
    println!(
        "convergence rate {:.3}; post-calibration feasibility {:.3e}; gap {:.3}% -> {:.3}%",
        report.convergence_rate,
        report.feasibility_post,
        report.gap_pre * 100.0,
        report.gap_post * 100.0
    );
    Ok(())
}
