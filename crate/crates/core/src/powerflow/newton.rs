//! Polar Newton-Raphson power flow on the PV/PQ/slack partition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{recover_generation, residual_check, DemandVector, PFResult, VoltageProfile};
use crate::grid_model::{AdmittanceMatrix, BusKind, Network};

#[derive(Debug, Clone)]
pub struct NrOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NrOptions {
    fn default() -> Self {
        NrOptions {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

/// Newton-Raphson solve with generator dispatch and voltage setpoints taken
/// from the network's case data. The initial guess supplies load-bus voltages
/// and all angles; generator-bus magnitudes are pinned to their setpoints.
pub fn solve_newton_raphson(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
    init: &VoltageProfile,
    opts: &NrOptions,
) -> PFResult {
    let mut pg = vec![0.0; net.n()];
    let mut vset = vec![1.0; net.n()];
    for g in &net.generators {
        pg[g.bus] += g.pg_setpoint;
        vset[g.bus] = g.vg_setpoint;
    }
    solve_newton_raphson_with(net, ybus, demand, &pg, &vset, init, opts)
}

/// Newton-Raphson solve with an explicit active dispatch (per-bus, per-unit)
/// and per-bus generator voltage setpoints.
pub fn solve_newton_raphson_with(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
    dispatch_pg: &[f64],
    vm_setpoints: &[f64],
    init: &VoltageProfile,
    opts: &NrOptions,
) -> PFResult {
    let n = net.n();
    assert_eq!(demand.len(), n, "demand dimension mismatch");
    assert_eq!(init.len(), n, "initial profile dimension mismatch");

    let slack = net.reference_bus();
    let pv: Vec<usize> = (0..n)
        .filter(|&i| i != slack && net.buses[i].kind != BusKind::Load)
        .collect();
    let pq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind == BusKind::Load).collect();
    let pvpq: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();

    let mut vm = init.vm.clone();
    let mut va = init.va.clone();
    for &i in pv.iter().chain(std::iter::once(&slack)) {
        vm[i] = vm_setpoints[i];
    }
    va[slack] = net.buses[slack].va_operating;

    let p_spec: Vec<f64> = (0..n).map(|i| dispatch_pg[i] - demand.pd[i]).collect();
    let q_spec: Vec<f64> = (0..n).map(|i| -demand.qd[i]).collect();

    let n_state = pvpq.len() + pq.len();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..=opts.max_iter {
        let vc: Vec<Complex64> = vm
            .iter()
            .zip(&va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        let current = ybus.mul_vec(&vc);
        let s: Vec<Complex64> = vc.iter().zip(&current).map(|(&v, &i)| v * i.conj()).collect();

        let mut f = DVector::zeros(n_state);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = p_spec[i] - s[i].re;
        }
        for (r, &i) in pq.iter().enumerate() {
            f[pvpq.len() + r] = q_spec[i] - s[i].im;
        }
        let max_mismatch = f.amax();
        if !max_mismatch.is_finite() || max_mismatch > 1e8 {
            break; // diverged
        }
        if max_mismatch < opts.tol {
            converged = true;
            iterations = it;
            break;
        }
        if it == opts.max_iter {
            iterations = it;
            break;
        }

        // dS/dVa and dS/dVm, dense.
        let jac = assemble_jacobian(ybus, &vc, &current, &vm, &pvpq, &pq);
        let lu = jac.lu();
        let Some(dx) = lu.solve(&f) else {
            break; // singular Jacobian: report non-converged
        };
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + r];
        }
        iterations = it + 1;
    }

    let voltage = VoltageProfile { vm, va };
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

fn assemble_jacobian(
    ybus: &AdmittanceMatrix,
    vc: &[Complex64],
    current: &[Complex64],
    vm: &[f64],
    pvpq: &[usize],
    pq: &[usize],
) -> DMatrix<f64> {
    let npvpq = pvpq.len();
    let npq = pq.len();
    let mut jac = DMatrix::zeros(npvpq + npq, npvpq + npq);
    // dS_i/dva_k = j(δ_ik V_i I_i* − V_i (Y_ik V_k)*)
    // dS_i/dvm_k = δ_ik V_i I_i*/vm_i + V_i Y_ik* V_k*/vm_k
    let ds = |i: usize, k: usize| -> (Complex64, Complex64) {
        let coupling = vc[i] * (ybus.get(i, k) * vc[k]).conj();
        let mut dva = -coupling;
        let mut dvm = coupling / vm[k];
        if i == k {
            let own = vc[i] * current[i].conj();
            dva += own;
            dvm += own / vm[i];
        }
        (Complex64::i() * dva, dvm)
    };
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds(i, k).0.re;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(r, npvpq + c)] = ds(i, k).1.re;
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            jac[(npvpq + r, c)] = ds(i, k).0.im;
        }
        for (c, &k) in pq.iter().enumerate() {
            jac[(npvpq + r, npvpq + c)] = ds(i, k).1.im;
        }
    }
    jac
}
