//! Gauss-Seidel voltage iteration: the single-bus fixed-point update used by
//! the calibration loop, and a conventional full power-flow solver built on it.

use num_complex::Complex64;
use thiserror::Error;

use super::{recover_generation, residual_check, DemandVector, PFResult, VoltageProfile};
use crate::grid_model::{AdmittanceMatrix, BusKind, Network};

#[derive(Debug, Error, PartialEq)]
pub enum GsError {
    #[error("zero Y-bus diagonal at bus index {0}")]
    ZeroDiagonal(usize),
    #[error("zero voltage at bus index {0}")]
    ZeroVoltage(usize),
}

/// One Gauss-Seidel voltage update for a load bus:
///
/// `V_new = (1/Y_ii)·((−P_D + jQ_D)/V_i* − Σ_{j≠i} Y_ij V_j)`
///
/// This is the textbook update `S_i*/V_i*` with the load-bus injection
/// `S_i = −(P_D + jQ_D)`; the inputs are not mutated.
pub fn gauss_seidel_update(
    ybus: &AdmittanceMatrix,
    v: &VoltageProfile,
    demand: &DemandVector,
    bus_id: usize,
) -> Result<Complex64, GsError> {
    let vc = v.to_complex();
    gs_update_complex(ybus, &vc, demand.pd[bus_id], demand.qd[bus_id], bus_id)
}

/// Slice-level Gauss-Seidel update used by the sweep loops.
pub fn gs_update_complex(
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    pd: f64,
    qd: f64,
    bus_id: usize,
) -> Result<Complex64, GsError> {
    gs_update_spec(ybus, vc, Complex64::new(-pd, -qd), bus_id)
}

/// Gauss-Seidel update for an arbitrary specified injection S_i.
fn gs_update_spec(
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    s_spec: Complex64,
    bus_id: usize,
) -> Result<Complex64, GsError> {
    let yii = ybus.get(bus_id, bus_id);
    if yii.norm() == 0.0 {
        return Err(GsError::ZeroDiagonal(bus_id));
    }
    let vi = vc[bus_id];
    if vi.norm() == 0.0 {
        return Err(GsError::ZeroVoltage(bus_id));
    }
    let mut sum = Complex64::new(0.0, 0.0);
    let row = ybus.row(bus_id);
    for (j, (&y, &vj)) in row.iter().zip(vc.iter()).enumerate() {
        if j != bus_id {
            sum += y * vj;
        }
    }
    Ok((s_spec.conj() / vi.conj() - sum) / yii)
}

/// Conventional Gauss-Seidel power flow with the usual PV-bus treatment:
/// load buses take the plain update, generator buses substitute their implied
/// reactive injection and are rescaled back to the magnitude setpoint, and the
/// reference bus is held fixed. Dispatch and setpoints come from case data.
pub fn solve_gauss_seidel(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
    init: &VoltageProfile,
    tol: f64,
    max_iter: usize,
) -> PFResult {
    let n = net.n();
    let slack = net.reference_bus();
    let mut pg = vec![0.0; n];
    let mut vset = vec![1.0; n];
    for g in &net.generators {
        pg[g.bus] += g.pg_setpoint;
        vset[g.bus] = g.vg_setpoint;
    }
    let p_spec: Vec<f64> = (0..n).map(|i| pg[i] - demand.pd[i]).collect();

    let mut vc = init.to_complex();
    for i in 0..n {
        if i == slack {
            vc[i] = Complex64::from_polar(vset[i], net.buses[slack].va_operating);
        } else if net.buses[i].kind != BusKind::Load {
            vc[i] = Complex64::from_polar(vset[i], vc[i].arg());
        }
    }

    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        for i in 0..n {
            if i == slack {
                continue;
            }
            match net.buses[i].kind {
                BusKind::Load => {
                    let Ok(vnew) = gs_update_complex(ybus, &vc, demand.pd[i], demand.qd[i], i) else {
                        break;
                    };
                    vc[i] = vnew;
                }
                _ => {
                    // implied reactive injection at the current state
                    let mut ii = Complex64::new(0.0, 0.0);
                    for (j, &y) in ybus.row(i).iter().enumerate() {
                        ii += y * vc[j];
                    }
                    let q_implied = (vc[i] * ii.conj()).im;
                    let s_spec = Complex64::new(p_spec[i], q_implied);
                    let Ok(vnew) = gs_update_spec(ybus, &vc, s_spec, i) else {
                        break;
                    };
                    vc[i] = Complex64::from_polar(vset[i], vnew.arg());
                }
            }
        }
        iterations = it + 1;
        if max_mismatch(net, ybus, &vc, &p_spec, demand) < tol {
            converged = true;
            break;
        }
    }

    let voltage = VoltageProfile::from_complex(&vc);
    let gen = recover_generation(net, ybus, &voltage, demand);
    let final_residual = residual_check(ybus, &voltage, demand, &gen).mean_abs;
    PFResult {
        voltage,
        gen,
        converged,
        iterations,
        final_residual,
    }
}

/// Max power mismatch over the solved equations (P at non-slack buses, Q at
/// load buses) — the same stopping metric as the Newton solver.
fn max_mismatch(
    net: &Network,
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    p_spec: &[f64],
    demand: &DemandVector,
) -> f64 {
    let slack = net.reference_bus();
    let current = ybus.mul_vec(vc);
    let mut worst = 0.0f64;
    for i in 0..net.n() {
        if i == slack {
            continue;
        }
        let s = vc[i] * current[i].conj();
        worst = worst.max((p_spec[i] - s.re).abs());
        if net.buses[i].kind == BusKind::Load {
            worst = worst.max((-demand.qd[i] - s.im).abs());
        }
    }
    worst
}
