//! Acceptance suite: every release-gating criterion runs here, in order, with
//! one pass/fail line printed per criterion (run with `-- --nocapture` to see
//! them live). Tolerances and budgets are pinned in code, not configuration.

use gridflow_core::calibration::{calibrate, CalibrationConfig};
use gridflow_core::dataset::{self, LabeledSample};
use gridflow_core::grid_model::{build_ybus, nominal_demand, parse_case_file, AdmittanceMatrix, Network};
use gridflow_core::neural::{self, Activation, LossMode, ModelSpec, TrainConfig};
use gridflow_core::powerflow::{
    balance_residual, recover_generation, reconstruct_demand, solve_gauss_seidel,
    solve_newton_raphson, NrOptions, VoltageProfile,
};
use gridflow_core::refsolver::{solve_acopf, OpfSolution, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;

fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

fn load(name: &str) -> (Network, AdmittanceMatrix) {
    let net = parse_case_file(&case_path(name)).expect("bundled case parses");
    let ybus = build_ybus(&net);
    (net, ybus)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12f64..1.0);
    let u2: f64 = rng.gen_range(0.0f64..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Label `count` perturbed-demand scenarios with the reference solver.
fn labeled_scenarios(
    net: &Network,
    ybus: &AdmittanceMatrix,
    count: usize,
    seed: u64,
) -> Vec<LabeledSample> {
    let demands = dataset::sample_demands(net, count, (0.8, 1.2), seed);
    let config = SolverConfig::default();
    let nominal = nominal_demand(net);
    let warm = solve_acopf(net, ybus, &nominal, &config, None)
        .expect("nominal solve")
        .0;
    demands
        .into_par_iter()
        .enumerate()
        .filter_map(|(k, demand)| {
            solve_acopf(net, ybus, &demand, &config, Some(&warm))
                .ok()
                .map(|(solution, _)| LabeledSample {
                    scenario_id: k,
                    demand,
                    solution,
                })
        })
        .collect()
}

/// Candidate mimicking a stage-1 output: Gaussian noise σ on the reference
/// voltages, with the dispatch recovered from the noisy profile the way the
/// prediction pipeline recovers it.
fn noisy_candidate(
    net: &Network,
    ybus: &AdmittanceMatrix,
    sample: &LabeledSample,
    seed: u64,
    sigma: f64,
) -> OpfSolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample.solution.voltage.clone();
    for i in 0..net.n() {
        v.vm[i] += sigma * gauss(&mut rng);
        v.va[i] += sigma * gauss(&mut rng);
    }
    neural::reconstruct(net, ybus, v, &sample.demand).solution(net, ybus, &sample.demand)
}

fn check_boxes_exact(net: &Network, sol: &OpfSolution) -> Result<(), String> {
    for b in &net.buses {
        let vm = sol.voltage.vm[b.id];
        let va = sol.voltage.va[b.id];
        if vm < b.v_min || vm > b.v_max {
            return Err(format!("vm {} outside [{}, {}] at bus {}", vm, b.v_min, b.v_max, b.ext_id));
        }
        if va < b.ang_min || va > b.ang_max {
            return Err(format!("angle {} outside box at bus {}", va, b.ext_id));
        }
    }
    for g in &net.generators {
        let pg = sol.gen.pg[g.bus];
        let qg = sol.gen.qg[g.bus];
        if pg < g.p_min || pg > g.p_max || qg < g.q_min || qg > g.q_max {
            return Err(format!("dispatch outside box at bus {}", net.buses[g.bus].ext_id));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn criterion_1_power_flow_oracles() -> Result<String, String> {
    let started = Instant::now();
    let (net14, y14) = load("case14.m");
    let (net118, y118) = load("case118.m");

    let d14 = nominal_demand(&net14);
    let nr14 = solve_newton_raphson(&net14, &y14, &d14, &VoltageProfile::flat(14), &NrOptions::default());
    if !nr14.converged || nr14.final_residual >= 1e-8 {
        return Err(format!("case14 NR residual {:.3e}", nr14.final_residual));
    }
    let d118 = nominal_demand(&net118);
    let nr118 = solve_newton_raphson(&net118, &y118, &d118, &VoltageProfile::flat(118), &NrOptions::default());
    if !nr118.converged || nr118.final_residual >= 1e-8 {
        return Err(format!("case118 NR residual {:.3e}", nr118.final_residual));
    }
    let gs14 = solve_gauss_seidel(&net14, &y14, &d14, &VoltageProfile::flat(14), 1e-8, 20_000);
    if !gs14.converged {
        return Err("case14 Gauss-Seidel did not converge".into());
    }
    let mut worst = 0.0f64;
    for i in 0..14 {
        let a = num_complex::Complex64::from_polar(nr14.voltage.vm[i], nr14.voltage.va[i]);
        let b = num_complex::Complex64::from_polar(gs14.voltage.vm[i], gs14.voltage.va[i]);
        worst = worst.max((a - b).norm());
    }
    if worst >= 1e-6 {
        return Err(format!("NR and GS disagree by {worst:.3e} per-unit"));
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 10.0 {
        return Err(format!("runtime {elapsed:.1?} exceeds 10 s"));
    }
    Ok(format!(
        "NR residual {:.1e}/{:.1e}, GS agreement {:.1e} pu, {:.2?}",
        nr14.final_residual, nr118.final_residual, worst, elapsed
    ))
}

fn criterion_2_gradient_correctness() -> Result<String, String> {
    let started = Instant::now();
    let mut worst_rel: f64 = 0.0;
    for case in ["three-bus", "case14"] {
        let (net, ybus) = if case == "case14" {
            load("case14.m")
        } else {
            three_bus_toy()
        };
        let samples = labeled_scenarios(&net, &ybus, 3, 0xACCE);
        if samples.len() < 3 {
            return Err(format!("{case}: could not label 3 scenarios"));
        }
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let spec = ModelSpec::for_network(&net, vec![8, 8], Activation::LeakyRelu);
        let model = neural::init_model(&spec, 4).map_err(|e| e.to_string())?;
        let (grads, _) = neural::gradients(&model, &net, &ybus, &refs, LossMode::PhysicsInformed);
        let floor = 1e-2 * grads.max_abs().max(1e-4);
        let h = 1e-5;
        for l in 0..model.layers.len() {
            let (rows, cols) = model.layers[l].w.dim();
            for r in 0..rows {
                for c in 0..=cols {
                    // c == cols probes the bias entry for this row
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    let analytic = if c < cols {
                        plus.layers[l].w[(r, c)] += h;
                        minus.layers[l].w[(r, c)] -= h;
                        grads.layers[l].w[(r, c)]
                    } else {
                        plus.layers[l].b[r] += h;
                        minus.layers[l].b[r] -= h;
                        grads.layers[l].b[r]
                    };
                    let fp = neural::loss_batch(&plus, &net, &ybus, &refs, LossMode::PhysicsInformed).total;
                    let fm = neural::loss_batch(&minus, &net, &ybus, &refs, LossMode::PhysicsInformed).total;
                    let fd = (fp - fm) / (2.0 * h);
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor);
                    worst_rel = worst_rel.max(rel);
                    if rel >= 1e-5 {
                        return Err(format!(
                            "{case} layer {l} ({r},{c}): analytic {analytic} vs fd {fd} (rel {rel:.2e})"
                        ));
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 60.0 {
        return Err(format!("runtime {elapsed:.1?} exceeds 1 min"));
    }
    Ok(format!("worst relative error {worst_rel:.2e}, {elapsed:.2?}"))
}

fn criterion_3_algebraic_identities() -> Result<String, String> {
    let (net, ybus) = load("case14.m");
    let demand = nominal_demand(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_gen: f64 = 0.0;
    for _ in 0..1000 {
        let v = VoltageProfile {
            vm: (0..14).map(|_| rng.gen_range(0.9..1.1)).collect(),
            va: (0..14).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        };
        let gen = recover_generation(&net, &ybus, &v, &demand);
        let recon = reconstruct_demand(&net, &ybus, &v, &gen);
        for i in 0..14 {
            if net.is_generator_bus(i) {
                worst_gen = worst_gen
                    .max((recon.pd[i] - demand.pd[i]).abs())
                    .max((recon.qd[i] - demand.qd[i]).abs());
            }
        }
    }
    if worst_gen > 1e-12 {
        return Err(format!("generator-bus cycle error {worst_gen:.3e} exceeds 1e-12"));
    }
    // fixed point on exact power-flow solutions
    let mut worst_fp: f64 = 0.0;
    for scale in [1.0, 0.9, 1.1] {
        let mut d = demand.clone();
        for v in d.pd.iter_mut().chain(d.qd.iter_mut()) {
            *v *= scale;
        }
        let pf = solve_newton_raphson(&net, &ybus, &d, &VoltageProfile::flat(14), &NrOptions::default());
        if !pf.converged {
            return Err(format!("power flow at scale {scale} did not converge"));
        }
        let gen = recover_generation(&net, &ybus, &pf.voltage, &d);
        let recon = reconstruct_demand(&net, &ybus, &pf.voltage, &gen);
        for i in 0..14 {
            worst_fp = worst_fp
                .max((recon.pd[i] - d.pd[i]).abs())
                .max((recon.qd[i] - d.qd[i]).abs());
        }
    }
    if worst_fp > 1e-10 {
        return Err(format!("fixed-point reconstruction error {worst_fp:.3e} exceeds 1e-10"));
    }
    Ok(format!(
        "cycle consistency {worst_gen:.1e} over 1000 profiles; fixed point {worst_fp:.1e}"
    ))
}

struct CalibrationStudy {
    converged: usize,
    total: usize,
    median_epochs: usize,
    gap_pre: f64,
    gap_post: f64,
}

fn calibration_study(
    net: &Network,
    ybus: &AdmittanceMatrix,
    samples: &[LabeledSample],
    sigma: f64,
) -> Result<CalibrationStudy, String> {
    let config = CalibrationConfig::default();
    let outcomes: Vec<_> = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let candidate = noisy_candidate(net, ybus, s, k as u64, sigma);
            let outcome = calibrate(net, ybus, &s.demand, &candidate, &config)
                .map_err(|e| format!("scenario {k}: {e}"))?;
            check_boxes_exact(net, &outcome.solution).map_err(|e| format!("scenario {k}: {e}"))?;
            let pre_cost = gridflow_core::powerflow::generation_cost(net, &clip_dispatch(net, &candidate.gen));
            Ok((outcome, pre_cost, s.solution.objective))
        })
        .collect::<Result<Vec<_>, String>>()?;

    let mut epochs: Vec<usize> = outcomes
        .iter()
        .filter(|(o, _, _)| o.converged)
        .map(|(o, _, _)| o.epochs_used)
        .collect();
    epochs.sort_unstable();
    let converged = epochs.len();
    let mut gap_pre = 0.0;
    let mut gap_post = 0.0;
    for (o, pre_cost, c_star) in &outcomes {
        if o.converged {
            gap_pre += (pre_cost - c_star) / c_star / converged as f64;
            gap_post += (o.solution.objective - c_star) / c_star / converged as f64;
        }
    }
    Ok(CalibrationStudy {
        converged,
        total: outcomes.len(),
        median_epochs: epochs.get(converged / 2).copied().unwrap_or(0),
        gap_pre,
        gap_post,
    })
}

fn clip_dispatch(net: &Network, gen: &gridflow_core::powerflow::GenSetpoints) -> gridflow_core::powerflow::GenSetpoints {
    let mut out = gen.clone();
    for g in &net.generators {
        out.pg[g.bus] = out.pg[g.bus].clamp(g.p_min, g.p_max);
        out.qg[g.bus] = out.qg[g.bus].clamp(g.q_min, g.q_max);
    }
    out
}

fn criterion_4_calibration_convergence() -> Result<String, String> {
    let started = Instant::now();
    let (net14, y14) = load("case14.m");
    let samples14 = labeled_scenarios(&net14, &y14, 500, 2024);
    if samples14.len() < 500 {
        return Err(format!("case14 label yield {}/500", samples14.len()));
    }
    let study14 = calibration_study(&net14, &y14, &samples14, 0.01)?;
    if study14.converged != study14.total {
        return Err(format!(
            "case14: {}/{} converged (need 100%)",
            study14.converged, study14.total
        ));
    }
    if study14.median_epochs > 60 {
        return Err(format!("case14 median epochs {} exceeds 60", study14.median_epochs));
    }

    let (net118, y118) = load("case118.m");
    let samples118 = labeled_scenarios(&net118, &y118, 200, 2024);
    if samples118.len() < 200 {
        return Err(format!("case118 label yield {}/200", samples118.len()));
    }
    // The literal noise construction is pinned here. Three load buses (9, 17,
    // 37) hold their voltage upper bound in every reference solution, and the
    // Gauss-Seidel target at an active bound exceeds the box for about half of
    // all unbiased perturbations of the neighboring generator voltages, so
    // this leg cannot statistically reach the stated rate; see the decisions
    // ledger for the full analysis. The measured rate is reported either way.
    let study118 = calibration_study(&net118, &y118, &samples118, 0.01)?;
    let rate118 = study118.converged as f64 / study118.total as f64;
    if rate118 < 0.90 {
        return Err(format!(
            "case118: {}/{} converged ({:.1}%, need 90%)",
            study118.converged,
            study118.total,
            rate118 * 100.0
        ));
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 600.0 {
        return Err(format!("runtime {elapsed:.1?} exceeds 10 min"));
    }
    Ok(format!(
        "case14 {}/{} (median {} epochs); case118 {}/{} ({:.1}%); {:.1?}",
        study14.converged,
        study14.total,
        study14.median_epochs,
        study118.converged,
        study118.total,
        rate118 * 100.0,
        elapsed
    ))
}

fn criterion_5_optimality_preservation() -> Result<String, String> {
    let (net, ybus) = load("case14.m");
    let samples = labeled_scenarios(&net, &ybus, 500, 2024);
    if samples.len() < 500 {
        return Err(format!("label yield {}/500", samples.len()));
    }
    let study = calibration_study(&net, &ybus, &samples, 0.01)?;
    if study.converged == 0 {
        return Err("no converged scenarios to compare".into());
    }
    let drift = (study.gap_post - study.gap_pre).abs();
    if drift > 0.005 {
        return Err(format!(
            "gap drift {:.3} pp exceeds 0.5 pp ({:.3}% -> {:.3}%)",
            drift * 100.0,
            study.gap_pre * 100.0,
            study.gap_post * 100.0
        ));
    }
    Ok(format!(
        "mean gap {:.3}% -> {:.3}% over {} converged scenarios",
        study.gap_pre * 100.0,
        study.gap_post * 100.0,
        study.converged
    ))
}

fn criterion_6_desk_scale_training() -> Result<String, String> {
    let started = Instant::now();
    let (net, ybus) = load("case14.m");
    let (samples, _) = dataset::generate_dataset(&net, &ybus, &SolverConfig::default(), 10_000, (0.8, 1.2), 42)
        .map_err(|e| e.to_string())?;
    let (train_set, test_set) = dataset::split(&samples, 0.8, 42).map_err(|e| e.to_string())?;

    let spec = ModelSpec::default_for_network(&net);
    let model = neural::init_model(&spec, 1).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 2000,
        batch_size: 512,
        learning_rate: 1e-3,
        lr_decay_every: 400,
        seed: 1,
        ..TrainConfig::default()
    };
    let outcome = neural::train(model, &net, &ybus, &train_set, &config);
    if outcome.diverged {
        return Err("training diverged".into());
    }
    let metrics = neural::evaluate(&outcome.model, &test_set, &net, &ybus);
    if metrics.v_mse > 1e-3 {
        return Err(format!("test v_mse {:.3e} exceeds 1e-3", metrics.v_mse));
    }
    if metrics.feasibility > 1e-2 {
        return Err(format!(
            "pre-calibration feasibility {:.3e} exceeds 1e-2",
            metrics.feasibility
        ));
    }
    if metrics.optimality_gap > 0.03 {
        return Err(format!(
            "mean optimality gap {:.2}% exceeds 3%",
            metrics.optimality_gap * 100.0
        ));
    }
    // post-calibration feasibility on the test scenarios
    let cal_config = CalibrationConfig::default();
    let below: usize = test_set
        .par_iter()
        .map(|s| {
            let pf = neural::physics_forward(&outcome.model, &net, &ybus, &s.demand);
            let candidate = pf.solution(&net, &ybus, &s.demand);
            let out = calibrate(&net, &ybus, &s.demand, &candidate, &cal_config).expect("calibration runs");
            let post = balance_residual(&net, &ybus, &out.solution.voltage, &s.demand).mean_abs;
            (post < 1e-6) as usize
        })
        .sum();
    let share = below as f64 / test_set.len() as f64;
    if share < 0.95 {
        return Err(format!(
            "post-calibration feasibility < 1e-6 on only {:.1}% of test scenarios",
            share * 100.0
        ));
    }
    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() > 3600.0 {
        return Err(format!("runtime {elapsed:.1?} exceeds 1 hr"));
    }
    Ok(format!(
        "v_mse {:.2e}, feasibility {:.2e} -> <1e-6 on {:.1}% of scenarios, gap {:.2}%, {:.1?}",
        metrics.v_mse,
        metrics.feasibility,
        share * 100.0,
        metrics.optimality_gap * 100.0,
        elapsed
    ))
}

fn criterion_7_ablation() -> Result<String, String> {
    let (net, ybus) = load("case14.m");
    let (samples, _) = dataset::generate_dataset(&net, &ybus, &SolverConfig::default(), 2000, (0.8, 1.2), 7)
        .map_err(|e| e.to_string())?;
    let (train_set, test_set) = dataset::split(&samples, 0.8, 7).map_err(|e| e.to_string())?;
    let spec = ModelSpec::for_network(&net, vec![128, 64], Activation::LeakyRelu);
    let mut feasibility = Vec::new();
    for mode in [LossMode::PhysicsInformed, LossMode::SupervisedOnly] {
        let model = neural::init_model(&spec, 11).map_err(|e| e.to_string())?;
        let config = TrainConfig {
            epochs: 300,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_decay_every: 150,
            seed: 11,
            loss_mode: mode,
            ..TrainConfig::default()
        };
        let outcome = neural::train(model, &net, &ybus, &train_set, &config);
        feasibility.push(neural::evaluate(&outcome.model, &test_set, &net, &ybus).feasibility);
    }
    if feasibility[0] >= feasibility[1] {
        return Err(format!(
            "physics-informed feasibility {:.3e} is not below supervised-only {:.3e}",
            feasibility[0], feasibility[1]
        ));
    }
    Ok(format!(
        "pre-calibration feasibility: physics {:.3e} < supervised {:.3e}",
        feasibility[0], feasibility[1]
    ))
}

fn criterion_8_property_suites() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(88);

    // clip range and idempotence
    for _ in 0..1000 {
        let lo = rng.gen_range(-10.0..10.0);
        let hi = lo + rng.gen_range(0.0..10.0);
        let z: f64 = rng.gen_range(-100.0..100.0);
        let c = gridflow_core::calibration::clip_scalar(z, lo, hi);
        if !(c >= lo && c <= hi) || gridflow_core::calibration::clip_scalar(c, lo, hi) != c {
            return Err(format!("clip violates range/idempotence for ({z}, {lo}, {hi})"));
        }
        if z >= lo && z <= hi && c != z {
            return Err("clip not identity inside the box".into());
        }
    }

    // sigmoid output containment for arbitrary models
    let (net14, y14) = load("case14.m");
    for seed in 0..20 {
        let spec = ModelSpec::for_network(&net14, vec![16, 8], Activation::LeakyRelu);
        let mut model = neural::init_model(&spec, seed).map_err(|e| e.to_string())?;
        for layer in &mut model.layers {
            layer.w.mapv_inplace(|w| w * 10.0);
        }
        let mut demand = nominal_demand(&net14);
        for v in demand.pd.iter_mut().chain(demand.qd.iter_mut()) {
            *v *= rng.gen_range(0.0..3.0);
        }
        let out = model.forward(&demand);
        for (i, b) in net14.buses.iter().enumerate() {
            if !(out.vm[i] >= b.v_min && out.vm[i] <= b.v_max && out.va[i] >= b.ang_min && out.va[i] <= b.ang_max) {
                return Err(format!("bounded output escaped its box at bus {}", b.ext_id));
            }
        }
    }

    // Y-bus symmetry with unity taps, row sums against independent accumulation
    let (net118, _) = load("case118.m");
    for net in [&net14, &net118] {
        let mut flat = net.clone();
        for br in &mut flat.branches {
            br.tap = 1.0;
            br.shift = 0.0;
        }
        let y = build_ybus(&flat);
        for i in 0..net.n() {
            for j in (i + 1)..net.n() {
                if y.get(i, j) != y.get(j, i) {
                    return Err(format!("{}: Y asymmetric at ({i},{j}) with unity taps", net.name));
                }
            }
        }
        let y = build_ybus(net);
        let mut expected = vec![num_complex::Complex64::new(0.0, 0.0); net.n()];
        for br in &net.branches {
            let ys = num_complex::Complex64::new(1.0, 0.0) / num_complex::Complex64::new(br.r, br.x);
            let half = num_complex::Complex64::new(0.0, br.b_charging / 2.0);
            let shift = num_complex::Complex64::from_polar(1.0, br.shift);
            expected[br.from_bus] += ys / (br.tap * br.tap) + half - ys / (br.tap * shift.conj());
            expected[br.to_bus] += ys + half - ys / (br.tap * shift);
        }
        for b in &net.buses {
            expected[b.id] += num_complex::Complex64::new(b.shunt_g, b.shunt_b);
        }
        for i in 0..net.n() {
            let sum: num_complex::Complex64 = (0..net.n()).map(|j| y.get(i, j)).sum();
            if (sum - expected[i]).norm() > 1e-12 {
                return Err(format!("{}: row {i} sum off by {:.2e}", net.name, (sum - expected[i]).norm()));
            }
        }
    }

    // dataset determinism and round trip
    let a = dataset::sample_demands(&net14, 50, (0.8, 1.2), 123);
    let b = dataset::sample_demands(&net14, 50, (0.8, 1.2), 123);
    if a != b {
        return Err("demand sampling is not deterministic".into());
    }
    let (small, _) = dataset::generate_dataset(&net14, &y14, &SolverConfig::default(), 5, (0.9, 1.1), 3)
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = dataset::DatasetManifest {
        case_name: net14.name.clone(),
        sample_count: small.len(),
        perturbation_range: (0.9, 1.1),
        seed: 3,
        train_fraction: 0.8,
        schema_version: 1,
        columns: dataset::sample_csv_header(&net14).join(","),
    };
    dataset::write_dataset(dir.path(), &net14, &manifest, &small).map_err(|e| e.to_string())?;
    let (_, loaded) = dataset::read_dataset(dir.path(), &net14).map_err(|e| e.to_string())?;
    for (x, y) in small.iter().zip(&loaded) {
        if x.demand != y.demand
            || x.solution.voltage != y.solution.voltage
            || x.solution.objective.to_bits() != y.solution.objective.to_bits()
        {
            return Err("dataset round trip is not exact".into());
        }
    }

    // parser round trip through the JSON schema
    for net in [&net14, &net118] {
        let json = gridflow_core::grid_model::serialize_case(net);
        let back = gridflow_core::grid_model::parse_case(&json).map_err(|e| e.to_string())?;
        if serde_json::to_string(net).unwrap() != serde_json::to_string(&back).unwrap() {
            return Err(format!("{}: JSON round trip not identity", net.name));
        }
    }

    let elapsed = started.elapsed();
    if elapsed.as_secs_f64() >= 60.0 {
        return Err(format!("runtime {elapsed:.1?} exceeds 1 min"));
    }
    Ok(format!("clip, bounding, Y-bus, dataset and parser properties hold; {elapsed:.2?}"))
}

fn three_bus_toy() -> (Network, AdmittanceMatrix) {
    use gridflow_core::grid_model::{Branch, Bus, BusKind, Generator};
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mk_bus = |id: usize, kind: BusKind, pd: f64, qd: f64| Bus {
        id,
        ext_id: id + 1,
        kind,
        p_demand_nominal: pd,
        q_demand_nominal: qd,
        v_min: 0.9,
        v_max: 1.1,
        ang_min: -half_pi,
        ang_max: half_pi,
        shunt_g: 0.0,
        shunt_b: 0.0,
        base_kv: 138.0,
        vm_operating: 1.0,
        va_operating: 0.0,
    };
    let mk_branch = |f: usize, t: usize, r: f64, x: f64| Branch {
        from_bus: f,
        to_bus: t,
        r,
        x,
        b_charging: 0.02,
        tap: 1.0,
        shift: 0.0,
        s_max: 0.0,
    };
    let net = Network {
        name: "threebus".into(),
        base_mva: 100.0,
        buses: vec![
            mk_bus(0, BusKind::Reference, 0.0, 0.0),
            mk_bus(1, BusKind::Generator, 0.2, 0.05),
            mk_bus(2, BusKind::Load, 0.9, 0.3),
        ],
        generators: vec![
            Generator {
                bus: 0,
                p_min: 0.0,
                p_max: 3.0,
                q_min: -2.0,
                q_max: 2.0,
                cost_c2: 0.04,
                cost_c1: 25.0,
                cost_c0: 10.0,
                pg_setpoint: 0.6,
                qg_setpoint: 0.1,
                vg_setpoint: 1.02,
            },
            Generator {
                bus: 1,
                p_min: 0.0,
                p_max: 2.0,
                q_min: -1.5,
                q_max: 1.5,
                cost_c2: 0.09,
                cost_c1: 30.0,
                cost_c0: 5.0,
                pg_setpoint: 0.5,
                qg_setpoint: 0.05,
                vg_setpoint: 1.01,
            },
        ],
        branches: vec![
            mk_branch(0, 1, 0.02, 0.08),
            mk_branch(0, 2, 0.03, 0.12),
            mk_branch(1, 2, 0.025, 0.1),
        ],
    };
    net.validate().expect("toy network valid");
    let ybus = build_ybus(&net);
    (net, ybus)
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn() -> Result<String, String>)> = vec![
        ("1 power-flow oracle suite", criterion_1_power_flow_oracles),
        ("2 gradient correctness", criterion_2_gradient_correctness),
        ("3 algebraic identities", criterion_3_algebraic_identities),
        ("4 calibration convergence", criterion_4_calibration_convergence),
        ("5 optimality preservation", criterion_5_optimality_preservation),
        ("6 desk-scale training", criterion_6_desk_scale_training),
        ("7 physics vs supervised ablation", criterion_7_ablation),
        ("8 property suites", criterion_8_property_suites),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        let started = Instant::now();
        match run() {
            Ok(detail) => {
                println!("criterion {name}: PASS — {detail}");
            }
            Err(reason) => {
                println!("criterion {name}: FAIL — {reason} ({:.1?})", started.elapsed());
                failures.push(format!("{name}: {reason}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
