//! Shared fixtures for unit tests: bundled cases and small synthetic grids.

use crate::grid_model::{self, build_ybus, Branch, Bus, BusKind, Generator, Network};
use crate::powerflow::{DemandVector, GenSetpoints, VoltageProfile};
use crate::refsolver::{OpfSolution, SolutionSource};
use std::path::PathBuf;

/// The case14 optimum produced by an independent solver during development,
/// kept as a regression fixture.
pub fn case14_opf_fixture(net: &Network) -> (OpfSolution, DemandVector) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/case14_opf_reference.json");
    let text = std::fs::read_to_string(path).expect("fixture readable");
    let raw: serde_json::Value = serde_json::from_str(&text).expect("fixture parses");
    let vec_of = |key: &str| -> Vec<f64> {
        raw[key]
            .as_array()
            .unwrap_or_else(|| panic!("fixture field {key}"))
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect()
    };
    let voltage = VoltageProfile {
        vm: vec_of("vm"),
        va: vec_of("va"),
    };
    let (pg, qg) = (vec_of("pg"), vec_of("qg"));
    let mut gen = GenSetpoints::zeros(net.n());
    for (g, gspec) in net.generators.iter().enumerate() {
        gen.pg[gspec.bus] = pg[g];
        gen.qg[gspec.bus] = qg[g];
    }
    let demand = grid_model::nominal_demand(net);
    let ybus = build_ybus(net);
    let sol = OpfSolution::assemble(net, &ybus, voltage, gen, &demand, SolutionSource::Imported);
    (sol, demand)
}

pub fn cases_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

pub fn case14() -> Network {
    grid_model::parse_case_file(&cases_dir().join("case14.m")).expect("bundled case14 parses")
}

pub fn case118() -> Network {
    grid_model::parse_case_file(&cases_dir().join("case118.m")).expect("bundled case118 parses")
}

/// Two buses: a reference generator feeding one load over a single line.
pub fn two_bus(r: f64, x: f64, pd: f64, qd: f64) -> Network {
    let net = Network {
        name: "twobus".into(),
        base_mva: 100.0,
        buses: vec![
            Bus {
                id: 0,
                ext_id: 1,
                kind: BusKind::Reference,
                p_demand_nominal: 0.0,
                q_demand_nominal: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                ang_min: -std::f64::consts::FRAC_PI_2,
                ang_max: std::f64::consts::FRAC_PI_2,
                shunt_g: 0.0,
                shunt_b: 0.0,
                base_kv: 138.0,
                vm_operating: 1.0,
                va_operating: 0.0,
            },
            Bus {
                id: 1,
                ext_id: 2,
                kind: BusKind::Load,
                p_demand_nominal: pd,
                q_demand_nominal: qd,
                v_min: 0.9,
                v_max: 1.1,
                ang_min: -std::f64::consts::FRAC_PI_2,
                ang_max: std::f64::consts::FRAC_PI_2,
                shunt_g: 0.0,
                shunt_b: 0.0,
                base_kv: 138.0,
                vm_operating: 1.0,
                va_operating: 0.0,
            },
        ],
        generators: vec![Generator {
            bus: 0,
            p_min: 0.0,
            p_max: 5.0,
            q_min: -5.0,
            q_max: 5.0,
            cost_c2: 0.02,
            cost_c1: 20.0,
            cost_c0: 0.0,
            pg_setpoint: pd,
            qg_setpoint: qd,
            vg_setpoint: 1.0,
        }],
        branches: vec![Branch {
            from_bus: 0,
            to_bus: 1,
            r,
            x,
            b_charging: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: 0.0,
        }],
    };
    net.validate().expect("two-bus network is valid");
    net
}

/// Three buses in a triangle: reference generator, PV generator, one load.
pub fn three_bus() -> Network {
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
    net.validate().expect("three-bus network is valid");
    net
}
