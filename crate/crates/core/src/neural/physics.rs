//! The differentiable power-flow reconstruction layer and the composite loss.
//!
//! A model output (vm, va) is pushed through the injection map
//! S_i = V_i Σ_j V_j* Y_ij* to recover generator dispatch on generator buses
//! and reconstruct demand on all buses. Gradients of the composite loss flow
//! back through this map analytically via the injection adjoint; nothing here
//! is approximated.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{matmul_nn, sigmoid, Layer, LossBreakdown, LossMode, Model};
use crate::dataset::LabeledSample;
use crate::grid_model::{AdmittanceMatrix, BusKind, Network};
use crate::powerflow::{bus_injections_complex, injection_adjoint, DemandVector, GenSetpoints, VoltageProfile};
use crate::refsolver::{OpfSolution, SolutionSource};

/// Full output of the reconstruction layer for one scenario.
#[derive(Debug, Clone)]
pub struct PhysicsForward {
    pub voltage: VoltageProfile,
    /// Recovered dispatch, unclipped so bound violations stay visible to the
    /// loss.
    pub gen: GenSetpoints,
    /// Reconstructed demand x̂.
    pub recon_demand: DemandVector,
    /// Bus injections S at the predicted voltages.
    pub injections: Vec<Complex64>,
}

impl PhysicsForward {
    /// Package as a solution record (source `nn`).
    pub fn solution(&self, net: &Network, ybus: &AdmittanceMatrix, demand: &DemandVector) -> OpfSolution {
        OpfSolution::assemble(
            net,
            ybus,
            self.voltage.clone(),
            self.gen.clone(),
            demand,
            SolutionSource::Nn,
        )
    }
}

/// Run the model and the power-flow reconstruction for one demand scenario.
pub fn physics_forward(
    model: &Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
) -> PhysicsForward {
    let voltage = model.forward(demand);
    reconstruct(net, ybus, voltage, demand)
}

/// The reconstruction layer alone, for an arbitrary voltage profile.
pub fn reconstruct(
    net: &Network,
    ybus: &AdmittanceMatrix,
    voltage: VoltageProfile,
    demand: &DemandVector,
) -> PhysicsForward {
    let vc = voltage.to_complex();
    let injections = bus_injections_complex(ybus, &vc);
    let n = net.n();
    let mut gen = GenSetpoints::zeros(n);
    for g in &net.generators {
        let i = g.bus;
        gen.pg[i] = demand.pd[i] + injections[i].re;
        gen.qg[i] = demand.qd[i] + injections[i].im;
    }
    let recon_demand = DemandVector {
        pd: (0..n).map(|i| gen.pg[i] - injections[i].re).collect(),
        qd: (0..n).map(|i| gen.qg[i] - injections[i].im).collect(),
    };
    PhysicsForward {
        voltage,
        gen,
        recon_demand,
        injections,
    }
}

/// Composite loss for one scenario: bus-set expectation of the demand
/// reconstruction and voltage terms plus generator-set expectation of the
/// dispatch terms. `SupervisedOnly` zeroes the reconstruction terms.
pub fn loss_single(
    net: &Network,
    pf: &PhysicsForward,
    label: &OpfSolution,
    input: &DemandVector,
    mode: LossMode,
) -> LossBreakdown {
    let n = net.n() as f64;
    let ng = net.generators.len() as f64;
    let mut out = LossBreakdown::default();
    for i in 0..net.n() {
        out.v_mse += sq(pf.voltage.vm[i] - label.voltage.vm[i]) / n;
        out.phi_mse += sq(pf.voltage.va[i] - label.voltage.va[i]) / n;
        if mode == LossMode::PhysicsInformed {
            out.pd_recon_mse += sq(pf.recon_demand.pd[i] - input.pd[i]) / n;
            out.qd_recon_mse += sq(pf.recon_demand.qd[i] - input.qd[i]) / n;
        }
    }
    for g in &net.generators {
        out.pg_mse += sq(pf.gen.pg[g.bus] - label.gen.pg[g.bus]) / ng;
        out.qg_mse += sq(pf.gen.qg[g.bus] - label.gen.qg[g.bus]) / ng;
    }
    out.total = out.v_mse + out.phi_mse + out.pg_mse + out.qg_mse + out.pd_recon_mse + out.qd_recon_mse;
    out
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// Per-parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<Layer>,
}

impl GradientSet {
    fn zeros_like(model: &Model) -> Self {
        GradientSet {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

struct SampleAdjoint {
    d_out: Vec<f64>,
    loss: LossBreakdown,
}

/// Exact reverse-mode gradients of the mean batch loss with respect to every
/// weight and bias, including the paths through the power-flow reconstruction.
/// Also returns the mean batch loss breakdown.
pub fn gradients(
    model: &Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    batch: &[&LabeledSample],
    mode: LossMode,
) -> (GradientSet, LossBreakdown) {
    assert!(!batch.is_empty(), "gradient batch must be non-empty");
    let bsz = batch.len();
    let n = net.n();
    let in_dim = model.spec.input_dim;

    let mut x = Array2::zeros((bsz, in_dim));
    for (r, s) in batch.iter().enumerate() {
        for i in 0..n {
            x[(r, i)] = s.demand.pd[i];
            x[(r, n + i)] = s.demand.qd[i];
        }
    }
    let cache = model.forward_cached(x.view());

    // Per-sample physics adjoints, in parallel, written into fixed slots so
    // the later reductions are order-deterministic.
    let inv_b = 1.0 / bsz as f64;
    let adjoints: Vec<SampleAdjoint> = batch
        .par_iter()
        .enumerate()
        .map(|(r, sample)| {
            let vm: Vec<f64> = cache.out.row(r).iter().take(n).copied().collect();
            let va: Vec<f64> = cache.out.row(r).iter().skip(n).copied().collect();
            let voltage = VoltageProfile { vm, va };
            let pf = reconstruct(net, ybus, voltage, &sample.demand);
            let loss = loss_single(net, &pf, &sample.solution, &sample.demand, mode);

            // Complex weights per bus for the injection adjoint: the factor on
            // ∂ReS_i goes in the real part, the factor on ∂ImS_i in the
            // imaginary part.
            let nf = n as f64;
            let ngf = net.generators.len() as f64;
            let mut w = vec![Complex64::new(0.0, 0.0); n];
            for g in &net.generators {
                let i = g.bus;
                w[i] += Complex64::new(
                    2.0 / ngf * (pf.gen.pg[i] - sample.solution.gen.pg[i]),
                    2.0 / ngf * (pf.gen.qg[i] - sample.solution.gen.qg[i]),
                );
            }
            if mode == LossMode::PhysicsInformed {
                for i in 0..n {
                    if net.buses[i].kind == BusKind::Load {
                        // load-bus reconstruction is −S_i, hence the sign flip;
                        // on generator buses the recovered dispatch cancels the
                        // reconstruction path exactly, so nothing flows there.
                        w[i] += Complex64::new(
                            -2.0 / nf * (pf.recon_demand.pd[i] - sample.demand.pd[i]),
                            -2.0 / nf * (pf.recon_demand.qd[i] - sample.demand.qd[i]),
                        );
                    }
                }
            }
            let vc = pf.voltage.to_complex();
            let (dvm_phys, dva_phys) = injection_adjoint(ybus, &vc, &w);

            let mut d_out = vec![0.0; 2 * n];
            for i in 0..n {
                d_out[i] = inv_b * (dvm_phys[i] + 2.0 / nf * (pf.voltage.vm[i] - sample.solution.voltage.vm[i]));
                d_out[n + i] = inv_b * (dva_phys[i] + 2.0 / nf * (pf.voltage.va[i] - sample.solution.voltage.va[i]));
            }
            SampleAdjoint { d_out, loss }
        })
        .collect();

    let mut mean_loss = LossBreakdown::default();
    for adj in &adjoints {
        mean_loss.add(&adj.loss, inv_b);
    }

    // Backprop through the sigmoid bounding stage.
    let logits = cache.z.last().expect("output logits");
    let mut dz = Array2::zeros((bsz, model.spec.output_dim));
    for r in 0..bsz {
        for k in 0..model.spec.output_dim {
            let (lo, hi) = model.spec.output_bounds[k];
            let s = sigmoid(logits[(r, k)]);
            dz[(r, k)] = adjoints[r].d_out[k] * (hi - lo) * s * (1.0 - s);
        }
    }

    // Backprop through the dense stack.
    let mut grads = GradientSet::zeros_like(model);
    for l in (0..model.layers.len()).rev() {
        grads.layers[l].w = matmul_nn(&dz.t(), &cache.h[l].view());
        grads.layers[l].b = dz.sum_axis(Axis(0));
        if l > 0 {
            let mut dh = matmul_nn(&dz.view(), &model.layers[l].w.view());
            let z_prev = &cache.z[l - 1];
            for (mut drow, zrow) in dh.rows_mut().into_iter().zip(z_prev.rows()) {
                for (d, &z) in drow.iter_mut().zip(zrow.iter()) {
                    *d *= model.spec.activation.derivative(z);
                }
            }
            dz = dh;
        }
    }
    (grads, mean_loss)
}

/// Mean loss over a batch without computing gradients.
pub fn loss_batch(
    model: &Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    batch: &[&LabeledSample],
    mode: LossMode,
) -> LossBreakdown {
    assert!(!batch.is_empty());
    let n = net.n();
    let mut x = Array2::zeros((batch.len(), model.spec.input_dim));
    for (r, s) in batch.iter().enumerate() {
        for i in 0..n {
            x[(r, i)] = s.demand.pd[i];
            x[(r, n + i)] = s.demand.qd[i];
        }
    }
    let out = model.forward_batch(x.view());
    let losses: Vec<LossBreakdown> = batch
        .par_iter()
        .enumerate()
        .map(|(r, sample)| {
            let vm: Vec<f64> = out.row(r).iter().take(n).copied().collect();
            let va: Vec<f64> = out.row(r).iter().skip(n).copied().collect();
            let pf = reconstruct(net, ybus, VoltageProfile { vm, va }, &sample.demand);
            loss_single(net, &pf, &sample.solution, &sample.demand, mode)
        })
        .collect();
    let mut mean = LossBreakdown::default();
    let w = 1.0 / batch.len() as f64;
    for l in &losses {
        mean.add(l, w);
    }
    mean
}
