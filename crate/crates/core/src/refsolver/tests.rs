use super::*;
use crate::calibration::{calibrate, CalibrationConfig};
use crate::dataset;
use crate::grid_model::{build_ybus, nominal_demand};
use crate::powerflow::{solve_newton_raphson_with, NrOptions};
use crate::testutil::{case14, case14_opf_fixture, two_bus};

fn lossy_two_bus() -> Network {
    let mut net = two_bus(0.05, 0.15, 0.6, 0.15);
    net.generators[0].cost_c2 = 0.05;
    net.generators[0].cost_c1 = 25.0;
    net.generators[0].cost_c0 = 8.0;
    net
}

/// Reduce the two-bus ACOPF to one dimension: for a fixed generator voltage
/// the load bus is determined by the power flow, so the dispatch and cost are
/// functions of that single setpoint. Golden-section search over it is the
/// independent oracle.
fn two_bus_oracle(net: &Network) -> (f64, f64) {
    let ybus = build_ybus(net);
    let demand = nominal_demand(net);
    let pg_of = |vset_g: f64| -> f64 {
        let pf = solve_newton_raphson_with(
            net,
            &ybus,
            &demand,
            &[0.0, 0.0],
            &[vset_g, 1.0],
            &crate::powerflow::VoltageProfile::flat(2),
            &NrOptions {
                tol: 1e-12,
                max_iter: 50,
            },
        );
        assert!(pf.converged);
        pf.gen.pg[0]
    };
    let cost_of = |vset: f64| -> f64 {
        let mw = pg_of(vset) * net.base_mva;
        let g = &net.generators[0];
        g.cost_c2 * mw * mw + g.cost_c1 * mw + g.cost_c0
    };
    let (mut a, mut b) = (net.buses[0].v_min, net.buses[0].v_max);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
    let (mut fc, mut fd) = (cost_of(c), cost_of(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost_of(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost_of(d);
        }
    }
    let v_star = 0.5 * (a + b);
    (pg_of(v_star), cost_of(v_star))
}

#[test]
fn two_bus_optimum_matches_one_dimensional_oracle() {
    let net = lossy_two_bus();
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let (pg_oracle, cost_oracle) = two_bus_oracle(&net);
    let (sol, _) = solve_acopf(&net, &ybus, &demand, &SolverConfig::default(), None).unwrap();
    assert!(
        (sol.gen.pg[0] - pg_oracle).abs() < 1e-5,
        "pg {} vs oracle {pg_oracle}",
        sol.gen.pg[0]
    );
    assert!((sol.objective - cost_oracle).abs() < 1e-3);
    // dispatch covers the load plus line losses
    assert!(sol.gen.pg[0] > demand.pd[1]);
}

#[test]
fn case14_objective_matches_reference_fixture() {
    let net = case14();
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let (sol, diag) = solve_acopf(&net, &ybus, &demand, &SolverConfig::default(), None).unwrap();
    let (fixture, _) = case14_opf_fixture(&net);
    let rel = (sol.objective - fixture.objective).abs() / fixture.objective;
    assert!(rel < 5e-3, "objective {} vs fixture {}", sol.objective, fixture.objective);
    assert!(sol.feasibility.mean_abs < 1e-6);
    assert_eq!(diag.line_violations, 0);
    assert!(crate::refsolver::validate_label(&net, &sol.voltage, &sol.gen).is_none());
}

#[test]
fn zero_cost_network_returns_feasible_point_at_zero_objective() {
    let mut net = case14();
    for g in &mut net.generators {
        g.cost_c2 = 0.0;
        g.cost_c1 = 0.0;
        g.cost_c0 = 0.0;
    }
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let (sol, _) = solve_acopf(&net, &ybus, &demand, &SolverConfig::default(), None).unwrap();
    assert_eq!(sol.objective, 0.0);
    assert!(sol.feasibility.mean_abs < 1e-6);
}

#[test]
fn solver_labels_are_calibration_fixed_points() {
    let net = case14();
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let (sol, _) = solve_acopf(&net, &ybus, &demand, &SolverConfig::default(), None).unwrap();
    let outcome = calibrate(&net, &ybus, &demand, &sol, &CalibrationConfig::default()).unwrap();
    assert!(outcome.converged);
    assert_eq!(outcome.epochs_used, 0);
}

#[test]
fn perturbing_any_dispatch_does_not_find_a_cheaper_point() {
    // local optimality: nudge one generator, let the slack re-balance through
    // a power-flow solve at the optimal voltage setpoints, and compare cost
    let net = case14();
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let config = SolverConfig::default();
    let (sol, _) = solve_acopf(&net, &ybus, &demand, &config, None).unwrap();
    let slack = net.reference_bus();
    let vset: Vec<f64> = (0..net.n()).map(|i| sol.voltage.vm[i]).collect();

    for g in &net.generators {
        if g.bus == slack {
            continue;
        }
        for delta in [-1e-3, 1e-3] {
            let mut dispatch: Vec<f64> = sol.gen.pg.clone();
            let nudged = (dispatch[g.bus] + delta).clamp(g.p_min, g.p_max);
            if nudged == dispatch[g.bus] {
                continue; // pinned at a bound
            }
            dispatch[g.bus] = nudged;
            let pf = solve_newton_raphson_with(
                &net,
                &ybus,
                &demand,
                &dispatch,
                &vset,
                &sol.voltage,
                &NrOptions::default(),
            );
            assert!(pf.converged);
            let cost = crate::powerflow::generation_cost(&net, &pf.gen);
            let decrease = sol.objective - cost;
            assert!(
                decrease <= config.opt_tol * 10.0,
                "gen at bus {} delta {delta}: cost fell by {decrease}",
                net.buses[g.bus].ext_id
            );
        }
    }
}

#[test]
fn import_rejects_bound_violations_and_corrupt_rows() {
    let net = case14();
    let ybus = build_ybus(&net);
    let demand = nominal_demand(&net);
    let (sol, _) = solve_acopf(&net, &ybus, &demand, &SolverConfig::default(), None).unwrap();
    let sample = dataset::LabeledSample {
        scenario_id: 0,
        demand: demand.clone(),
        solution: sol,
    };
    let mut csv = Vec::new();
    dataset::write_samples_csv(&mut csv, &net, &[sample.clone()]).unwrap();
    let text = String::from_utf8(csv).unwrap();

    // clean import round-trips the sample
    let outcome = import_labels_from_str(&text, &net).unwrap();
    assert_eq!(outcome.samples.len(), 1);
    assert!(outcome.rejects.is_empty());
    assert_eq!(outcome.samples[0].solution.voltage, sample.solution.voltage);
    assert_eq!(outcome.samples[0].solution.gen, sample.solution.gen);
    assert_eq!(outcome.samples[0].solution.objective, sample.solution.objective);

    // voltage magnitude forced above its bound on a 1.06-bounded bus
    let row = text.lines().nth(1).unwrap();
    let mut fields: Vec<String> = row.split(',').map(String::from).collect();
    fields[1 + 2 * net.n() + 4] = "1.5".into();
    let violated = format!("{}\n{}\n", text.lines().next().unwrap(), fields.join(","));
    let outcome = import_labels_from_str(&violated, &net).unwrap();
    assert!(outcome.samples.is_empty());
    assert_eq!(outcome.rejects.len(), 1);
    assert!(outcome.rejects[0].reason.contains("bound violation"), "{}", outcome.rejects[0].reason);

    // unparsable field
    let mut fields: Vec<String> = row.split(',').map(String::from).collect();
    fields[3] = "not-a-number".into();
    let corrupt = format!("{}\n{}\n", text.lines().next().unwrap(), fields.join(","));
    let outcome = import_labels_from_str(&corrupt, &net).unwrap();
    assert_eq!(outcome.rejects.len(), 1);

    // header from a different column layout
    let wrong_header = text.replace("pd_1,", "pd_0,");
    assert!(matches!(
        import_labels_from_str(&wrong_header, &net),
        Err(ImportError::Schema(_))
    ));

    // empty file
    let header_only: String = text.lines().next().unwrap().to_string() + "\n";
    assert!(matches!(
        import_labels_from_str(&header_only, &net),
        Err(ImportError::Empty)
    ));
}

#[test]
fn imported_labels_satisfy_residual_and_box_checks() {
    let net = case14();
    let ybus = build_ybus(&net);
    let demands = dataset::sample_demands(&net, 5, (0.9, 1.1), 7);
    let config = SolverConfig::default();
    let nominal = nominal_demand(&net);
    let (warm, _) = solve_acopf(&net, &ybus, &nominal, &config, None).unwrap();
    let samples: Vec<dataset::LabeledSample> = demands
        .iter()
        .enumerate()
        .map(|(k, d)| dataset::LabeledSample {
            scenario_id: k,
            demand: d.clone(),
            solution: solve_acopf(&net, &ybus, d, &config, Some(&warm)).unwrap().0,
        })
        .collect();
    let mut csv = Vec::new();
    dataset::write_samples_csv(&mut csv, &net, &samples).unwrap();
    let outcome = import_labels_from_str(&String::from_utf8(csv).unwrap(), &net).unwrap();
    assert_eq!(outcome.samples.len(), 5);
    for s in &outcome.samples {
        assert!(s.solution.feasibility.mean_abs < IMPORT_RESIDUAL_TOL);
        assert!(validate_label(&net, &s.solution.voltage, &s.solution.gen).is_none());
    }
}
