//! Iterative feasibility restoration.
//!
//! Each epoch sweeps a Gauss-Seidel voltage update over the load buses in
//! ascending index order (true in-place updates, then a box clip on magnitude
//! and angle), then recomputes every generator bus's injections from the
//! current voltages and clips them to their dispatch bounds. The loop exits
//! when the mean power-balance residual r drops below ρ or the epoch budget is
//! exhausted; r measures the imbalance of the recovered (pre-projection)
//! injections, so generator rows are balanced by construction and r tracks the
//! load-bus mismatch the voltage sweeps are eliminating. Non-convergence is
//! reported, never raised: the outcome carries the best-effort solution and
//! the residual trace.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::grid_model::{AdmittanceMatrix, Bus, BusKind, Network};
use crate::powerflow::{gs_update_complex, residual_check_complex, DemandVector, GsError};
use crate::refsolver::{OpfSolution, SolutionSource};

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    /// Mean-residual stop threshold ρ, per-unit.
    pub rho: f64,
    /// Epoch budget E.
    pub max_epochs: usize,
    /// Keep per-epoch max-residual and clip diagnostics for trace export.
    pub record_trace: bool,
    /// Stop on the max rather than the mean per-bus mismatch.
    pub use_max_residual: bool,
    /// Hold the reference-bus angle fixed during sweeps (off by default; the
    /// angle box is what bounds it).
    pub pin_reference_angle: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            rho: 1e-6,
            max_epochs: 100,
            record_trace: true,
            use_max_residual: false,
            pin_reference_angle: false,
        }
    }
}

/// Clip-event counts accumulated over a calibration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClipCounts {
    pub vm: usize,
    pub angle: usize,
    pub pg: usize,
    pub qg: usize,
}

impl ClipCounts {
    pub fn total(&self) -> usize {
        self.vm + self.angle + self.pg + self.qg
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub solution: OpfSolution,
    pub converged: bool,
    pub epochs_used: usize,
    /// Mean per-bus mismatch per epoch; entry 0 is the residual at entry, so
    /// the length is always `epochs_used + 1`.
    pub residual_trace: Vec<f64>,
    /// Max per-bus mismatch per epoch (populated when `record_trace`).
    pub max_trace: Vec<f64>,
    /// Clip events per trace entry (populated when `record_trace`).
    pub epoch_clips: Vec<ClipCounts>,
    /// Totals over the whole run, including the entry projection.
    pub clip_events: ClipCounts,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("zero Y-bus diagonal at load bus index {0}")]
    ZeroDiagonal(usize),
    #[error("degenerate candidate: zero voltage at bus index {0}")]
    ZeroVoltage(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `max(min(z, hi), lo)` — the scalar box clip. `lo ≤ hi` is a contract.
pub fn clip_scalar(z: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "clip_scalar: lo {lo} > hi {hi}");
    z.min(hi).max(lo)
}

/// A voltage clipped into a bus's magnitude and angle boxes.
#[derive(Debug, Clone, Copy)]
pub struct ClippedVoltage {
    pub value: Complex64,
    pub vm_clipped: bool,
    pub angle_clipped: bool,
}

/// Clip a complex voltage against the bus's boxes: magnitude and angle are
/// clipped independently, so a magnitude clamp preserves the angle and vice
/// versa.
pub fn clip_voltage(v: Complex64, bus: &Bus) -> ClippedVoltage {
    let vm = v.norm();
    let va = v.arg();
    let vm_c = clip_scalar(vm, bus.v_min, bus.v_max);
    let va_c = clip_scalar(va, bus.ang_min, bus.ang_max);
    let vm_clipped = vm_c != vm;
    let angle_clipped = va_c != va;
    let value = if vm_clipped || angle_clipped {
        Complex64::from_polar(vm_c, va_c)
    } else {
        v
    };
    ClippedVoltage {
        value,
        vm_clipped,
        angle_clipped,
    }
}

/// Run the calibration loop on a candidate solution against the target demand.
///
/// The returned solution satisfies every voltage and dispatch box exactly,
/// whether or not the residual threshold was reached: the candidate is
/// projected into the boxes on entry, load-bus updates are clipped as they
/// happen, and generator injections are clipped each epoch.
pub fn calibrate(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
    candidate: &OpfSolution,
    config: &CalibrationConfig,
) -> Result<CalibrationOutcome, CalibrationError> {
    let n = net.n();
    if candidate.voltage.len() != n || demand.len() != n {
        return Err(CalibrationError::Dimension(format!(
            "candidate/demand dimension does not match the {n}-bus network"
        )));
    }

    // The polar pair (vm, va) is the source of truth throughout so clipped
    // values land exactly on their bounds; the complex view is derived.
    let mut vm = candidate.voltage.vm.clone();
    let mut va = candidate.voltage.va.clone();
    let mut gen = candidate.gen.clone();
    let mut clips = ClipCounts::default();
    let slack = net.reference_bus();

    // Entry projection: every bus voltage and every generator setpoint into
    // its box, so the output bound guarantee holds even at zero epochs.
    let mut entry_clips = ClipCounts::default();
    for b in &net.buses {
        let m = clip_scalar(vm[b.id], b.v_min, b.v_max);
        let a = clip_scalar(va[b.id], b.ang_min, b.ang_max);
        entry_clips.vm += (m != vm[b.id]) as usize;
        entry_clips.angle += (a != va[b.id]) as usize;
        vm[b.id] = m;
        va[b.id] = a;
    }
    for g in &net.generators {
        let pg = clip_scalar(gen.pg[g.bus], g.p_min, g.p_max);
        let qg = clip_scalar(gen.qg[g.bus], g.q_min, g.q_max);
        entry_clips.pg += (pg != gen.pg[g.bus]) as usize;
        entry_clips.qg += (qg != gen.qg[g.bus]) as usize;
        gen.pg[g.bus] = pg;
        gen.qg[g.bus] = qg;
    }
    if config.pin_reference_angle {
        va[slack] = net.buses[slack].va_operating;
    }
    accumulate(&mut clips, &entry_clips);

    let mut vc: Vec<Complex64> = vm
        .iter()
        .zip(&va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();

    let load_buses: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind == BusKind::Load).collect();
    let gen_order: Vec<usize> = {
        let mut v: Vec<usize> = net.generators.iter().map(|g| g.bus).collect();
        v.sort_unstable();
        v
    };

    // Entry residual: the candidate checked with its own (projected) dispatch.
    let report = residual_check_complex(ybus, &vc, demand, &gen);
    let mut residual_trace = vec![report.mean_abs];
    let mut max_trace = Vec::new();
    let mut epoch_clips = Vec::new();
    if config.record_trace {
        max_trace.push(report.max_abs);
        epoch_clips.push(entry_clips);
    }
    let stop_metric = |r: &crate::powerflow::ResidualReport| {
        if config.use_max_residual {
            r.max_abs
        } else {
            r.mean_abs
        }
    };
    let mut metric = stop_metric(&report);
    let mut epochs_used = 0;

    while metric >= config.rho && epochs_used < config.max_epochs {
        let mut round_clips = ClipCounts::default();
        // (a) Gauss-Seidel sweep over load buses, in place, ascending.
        for &i in &load_buses {
            let vnew = gs_update_complex(ybus, &vc, demand.pd[i], demand.qd[i], i).map_err(|e| match e {
                GsError::ZeroDiagonal(b) => CalibrationError::ZeroDiagonal(b),
                GsError::ZeroVoltage(b) => CalibrationError::ZeroVoltage(b),
            })?;
            let bus = &net.buses[i];
            let m = clip_scalar(vnew.norm(), bus.v_min, bus.v_max);
            let a = clip_scalar(vnew.arg(), bus.ang_min, bus.ang_max);
            round_clips.vm += (m != vnew.norm()) as usize;
            round_clips.angle += (a != vnew.arg()) as usize;
            vm[i] = m;
            va[i] = a;
            vc[i] = Complex64::from_polar(m, a);
        }
        // (b) recompute generator injections at the current voltages, then
        // project them into the dispatch boxes. Generator-bus voltages are
        // untouched by the sweep, so all injections can be evaluated once.
        let injections = crate::powerflow::bus_injections_complex(ybus, &vc);
        let mut raw_mismatch = vec![Complex64::new(0.0, 0.0); n];
        for &i in &load_buses {
            raw_mismatch[i] = Complex64::new(-demand.pd[i], -demand.qd[i]) - injections[i];
        }
        for &i in &gen_order {
            let g = &net.generators[net.generator_at(i).expect("generator bus")];
            let pg_raw = demand.pd[i] + injections[i].re;
            let qg_raw = demand.qd[i] + injections[i].im;
            let pg = clip_scalar(pg_raw, g.p_min, g.p_max);
            let qg = clip_scalar(qg_raw, g.q_min, g.q_max);
            round_clips.pg += (pg != pg_raw) as usize;
            round_clips.qg += (qg != qg_raw) as usize;
            gen.pg[i] = pg;
            gen.qg[i] = qg;
        }
        // (c) residual check. The progress metric r is the power-flow
        // imbalance of the recovered (pre-projection) injections: generator
        // rows balance exactly by construction, so r tracks how far the load
        // buses are from satisfying their own balance equations. Box
        // projection still applies to the returned dispatch above; the
        // residual it may leave behind is visible through the returned
        // solution's feasibility summary.
        let report = crate::powerflow::summarize_mismatch(raw_mismatch);
        metric = stop_metric(&report);
        epochs_used += 1;
        residual_trace.push(report.mean_abs);
        if config.record_trace {
            max_trace.push(report.max_abs);
            epoch_clips.push(round_clips);
        }
        accumulate(&mut clips, &round_clips);
    }

    let voltage = crate::powerflow::VoltageProfile { vm, va };
    let solution = OpfSolution::assemble(net, ybus, voltage, gen, demand, SolutionSource::Calibrated);
    Ok(CalibrationOutcome {
        converged: metric < config.rho,
        epochs_used,
        residual_trace,
        max_trace,
        epoch_clips,
        clip_events: clips,
        solution,
    })
}

fn accumulate(total: &mut ClipCounts, round: &ClipCounts) {
    total.vm += round.vm;
    total.angle += round.angle;
    total.pg += round.pg;
    total.qg += round.qg;
}
