//! AC power-flow evaluation: bus injections, generation recovery, demand
//! reconstruction, residuals, branch flows, generation cost, and the two
//! conventional solvers (Newton-Raphson and Gauss-Seidel).
//!
//! Sign convention: injections are positive into the network, demand is
//! positive consumed. All operations are pure functions over immutable inputs.

mod gauss;
mod newton;

pub use gauss::{gauss_seidel_update, gs_update_complex, solve_gauss_seidel, GsError};
pub use newton::{solve_newton_raphson, solve_newton_raphson_with, NrOptions};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid_model::{AdmittanceMatrix, Network};

/// Per-bus voltage magnitude (per-unit) and phase angle (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageProfile {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl VoltageProfile {
    /// Flat start: 1.0 per-unit, zero angle, at every bus.
    pub fn flat(n: usize) -> Self {
        VoltageProfile {
            vm: vec![1.0; n],
            va: vec![0.0; n],
        }
    }

    /// The case file's stored operating point.
    pub fn from_operating_point(net: &Network) -> Self {
        VoltageProfile {
            vm: net.buses.iter().map(|b| b.vm_operating).collect(),
            va: net.buses.iter().map(|b| b.va_operating).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn from_complex(v: &[Complex64]) -> Self {
        VoltageProfile {
            vm: v.iter().map(|c| c.norm()).collect(),
            va: v.iter().map(|c| c.arg()).collect(),
        }
    }
}

/// Per-bus active/reactive demand, per-unit. This is the ACOPF input x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandVector {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

impl DemandVector {
    pub fn zeros(n: usize) -> Self {
        DemandVector {
            pd: vec![0.0; n],
            qd: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.pd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pd.is_empty()
    }
}

/// Generator dispatch zero-extended to all buses: identically zero on pure
/// load buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSetpoints {
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl GenSetpoints {
    pub fn zeros(n: usize) -> Self {
        GenSetpoints {
            pg: vec![0.0; n],
            qg: vec![0.0; n],
        }
    }

    /// Case-file setpoints spread onto the bus vector.
    pub fn from_case(net: &Network) -> Self {
        let mut s = Self::zeros(net.n());
        for g in &net.generators {
            s.pg[g.bus] += g.pg_setpoint;
            s.qg[g.bus] += g.qg_setpoint;
        }
        s
    }
}

/// Power-balance mismatch report: per-bus complex ΔP + jΔQ plus the mean and
/// max of the complex magnitudes over all buses.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub per_bus_mismatch: Vec<Complex64>,
    pub mean_abs: f64,
    pub max_abs: f64,
}

/// Outcome of a conventional power-flow solve.
#[derive(Debug, Clone)]
pub struct PFResult {
    pub voltage: VoltageProfile,
    pub gen: GenSetpoints,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

/// Complex power injected at every bus: `S_i = V_i Σ_j V_j* Y_ij*`.
pub fn bus_injections(ybus: &AdmittanceMatrix, v: &VoltageProfile) -> Vec<Complex64> {
    let vc = v.to_complex();
    bus_injections_complex(ybus, &vc)
}

/// Same as [`bus_injections`] for an already-materialized complex profile.
pub fn bus_injections_complex(ybus: &AdmittanceMatrix, vc: &[Complex64]) -> Vec<Complex64> {
    let current = ybus.mul_vec(vc);
    vc.iter().zip(&current).map(|(&vi, &ii)| vi * ii.conj()).collect()
}

/// Recover generator dispatch from a voltage profile: on each generator bus g,
/// `pg = pd_g + Re(S_g)` and `qg = qd_g + Im(S_g)`, unclipped; zero on load
/// buses.
pub fn recover_generation(
    net: &Network,
    ybus: &AdmittanceMatrix,
    v: &VoltageProfile,
    demand: &DemandVector,
) -> GenSetpoints {
    let s = bus_injections(ybus, v);
    let mut gen = GenSetpoints::zeros(net.n());
    for g in &net.generators {
        let i = g.bus;
        gen.pg[i] = demand.pd[i] + s[i].re;
        gen.qg[i] = demand.qd[i] + s[i].im;
    }
    gen
}

/// Reconstruct the demand implied by a voltage profile and dispatch:
/// `pd_i = pg_i − Re(S_i)`, `qd_i = qg_i − Im(S_i)` on every bus.
pub fn reconstruct_demand(
    _net: &Network,
    ybus: &AdmittanceMatrix,
    v: &VoltageProfile,
    gen: &GenSetpoints,
) -> DemandVector {
    let s = bus_injections(ybus, v);
    DemandVector {
        pd: gen.pg.iter().zip(&s).map(|(&pg, si)| pg - si.re).collect(),
        qd: gen.qg.iter().zip(&s).map(|(&qg, si)| qg - si.im).collect(),
    }
}

/// Power-balance residual of a full candidate solution:
/// `mismatch_i = (pg_i − pd_i) + j(qg_i − qd_i) − S_i(v)`.
pub fn residual_check(
    ybus: &AdmittanceMatrix,
    v: &VoltageProfile,
    demand: &DemandVector,
    gen: &GenSetpoints,
) -> ResidualReport {
    let vc = v.to_complex();
    residual_check_complex(ybus, &vc, demand, gen)
}

/// [`residual_check`] for an already-materialized complex profile.
pub fn residual_check_complex(
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    demand: &DemandVector,
    gen: &GenSetpoints,
) -> ResidualReport {
    let s = bus_injections_complex(ybus, vc);
    let per_bus: Vec<Complex64> = (0..ybus.n)
        .map(|i| Complex64::new(gen.pg[i] - demand.pd[i], gen.qg[i] - demand.qd[i]) - s[i])
        .collect();
    summarize_mismatch(per_bus)
}

pub(crate) fn summarize_mismatch(per_bus: Vec<Complex64>) -> ResidualReport {
    let n = per_bus.len().max(1) as f64;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for m in &per_bus {
        let a = m.norm();
        sum += a;
        max = max.max(a);
    }
    ResidualReport {
        per_bus_mismatch: per_bus,
        mean_abs: sum / n,
        max_abs: max,
    }
}

/// Power-balance residual with the dispatch implied by the voltages, i.e.
/// `recover_generation` before any box projection. Generator rows balance
/// exactly by construction, so this measures the load-bus imbalance — the
/// feasibility metric tracked by the calibration loop and the run reports.
pub fn balance_residual(
    net: &Network,
    ybus: &AdmittanceMatrix,
    v: &VoltageProfile,
    demand: &DemandVector,
) -> ResidualReport {
    let gen = recover_generation(net, ybus, v, demand);
    residual_check(ybus, v, demand, &gen)
}

/// Apparent-power magnitude on one branch end and the associated rating check.
#[derive(Debug, Clone)]
pub struct BranchFlow {
    pub branch: usize,
    /// |V_f (V_f* − V_t*) Y_ft*| with Y_ft the branch's own off-diagonal stamp.
    pub s_from: f64,
    /// Same expression evaluated from the to end.
    pub s_to: f64,
    /// Standard pi-model apparent power leaving each end, for diagnostics.
    pub s_from_pi: f64,
    pub s_to_pi: f64,
    pub s_max: f64,
    pub violation: bool,
}

/// Evaluate branch loading at a voltage profile. The feasibility flag uses the
/// admittance-difference expression; the pi-model figures are reported
/// alongside for diagnostics.
pub fn branch_flows(net: &Network, v: &VoltageProfile) -> Vec<BranchFlow> {
    let vc = v.to_complex();
    net.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let (f, t) = (br.from_bus, br.to_bus);
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let shift = Complex64::from_polar(1.0, br.shift);
            let y_ft = -ys / (br.tap * shift.conj());
            let y_tf = -ys / (br.tap * shift);
            let s_from = (vc[f] * (vc[f] - vc[t]).conj() * y_ft.conj()).norm();
            let s_to = (vc[t] * (vc[t] - vc[f]).conj() * y_tf.conj()).norm();

            let half_charge = Complex64::new(0.0, br.b_charging / 2.0);
            let y_ff = ys / (br.tap * br.tap) + half_charge / (br.tap * br.tap);
            let y_tt = ys + half_charge;
            let s_from_pi = (vc[f] * (y_ff * vc[f] + y_ft * vc[t]).conj()).norm();
            let s_to_pi = (vc[t] * (y_tf * vc[f] + y_tt * vc[t]).conj()).norm();

            let violation = br.s_max > 0.0 && (s_from > br.s_max || s_to > br.s_max);
            BranchFlow {
                branch: k,
                s_from,
                s_to,
                s_from_pi,
                s_to_pi,
                s_max: br.s_max,
                violation,
            }
        })
        .collect()
}

/// Total generation cost in $/hr: Σ_g c2·MW² + c1·MW + c0 with dispatch
/// converted from per-unit to the cost curve's MW base.
pub fn generation_cost(net: &Network, gen: &GenSetpoints) -> f64 {
    net.generators
        .iter()
        .map(|g| {
            let mw = gen.pg[g.bus] * net.base_mva;
            g.cost_c2 * mw * mw + g.cost_c1 * mw + g.cost_c0
        })
        .sum()
}

/// Partial derivatives of the injection vector S with respect to voltage
/// magnitudes and angles, contracted against a complex per-bus weight vector.
///
/// Given weights w_i, returns (d/dvm, d/dva) of Σ_i Re(conj(w_i)·S_i), i.e.
/// the exact adjoint of the injection map. With w = wP + j·wQ this evaluates
/// Σ_i wP_i·∂ReS_i/∂x + wQ_i·∂ImS_i/∂x for every voltage coordinate x.
pub fn injection_adjoint(
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    w: &[Complex64],
) -> (Vec<f64>, Vec<f64>) {
    let n = ybus.n;
    // A_k = conj(I_k) with I = Y·V ; B_k = Σ_i conj(w_i) V_i conj(Y_ik)
    let current = ybus.mul_vec(vc);
    let wv: Vec<Complex64> = w.iter().zip(vc).map(|(&wi, &vi)| (wi.conj() * vi).conj()).collect();
    let b: Vec<Complex64> = ybus
        .mul_vec_transpose(&wv)
        .into_iter()
        .map(|z| z.conj())
        .collect();
    let mut dvm = vec![0.0; n];
    let mut dva = vec![0.0; n];
    for k in 0..n {
        let vmk = vc[k].norm();
        let own = w[k].conj() * vc[k] * current[k].conj();
        let cross = b[k] * vc[k].conj();
        if vmk > 0.0 {
            dvm[k] = ((own + cross) / vmk).re;
        }
        dva[k] = (Complex64::i() * (own - cross)).re;
    }
    (dvm, dva)
}
