//! Mini-batch training with seeded shuffling, step-decayed learning rate, and
//! best-validation-snapshot selection.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gradients, loss_batch, GradientSet, LossBreakdown, Model, Normalization, OptimizerKind, TrainConfig};
use crate::dataset::LabeledSample;
use crate::grid_model::{AdmittanceMatrix, Network};

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training-loss breakdown per epoch.
    pub history: Vec<LossBreakdown>,
    /// Validation total loss per epoch (empty when no validation split).
    pub validation_history: Vec<f64>,
    /// Epoch of the returned snapshot (0-based; equals the last epoch when no
    /// validation split is configured).
    pub best_epoch: usize,
    /// True when training stopped early on a non-finite loss.
    pub diverged: bool,
}

struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    t: usize,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Train a model on labeled samples. Deterministic for a fixed config: the
/// shuffle stream, validation split and parameter updates all derive from
/// `config.seed`.
pub fn train(
    mut model: Model,
    net: &Network,
    ybus: &AdmittanceMatrix,
    train_set: &[LabeledSample],
    config: &TrainConfig,
) -> TrainOutcome {
    assert!(!train_set.is_empty(), "train set must be non-empty");
    assert!(config.batch_size >= 1 && config.learning_rate > 0.0);

    // Validation split, fixed by seed.
    let mut idx: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    idx.shuffle(&mut rng);
    let val_count = if config.validation_fraction > 0.0 && train_set.len() >= 10 {
        ((config.validation_fraction * train_set.len() as f64).round() as usize)
            .clamp(1, train_set.len() - 1)
    } else {
        0
    };
    let (fit_idx, val_idx) = idx.split_at(train_set.len() - val_count);
    let fit: Vec<&LabeledSample> = fit_idx.iter().map(|&i| &train_set[i]).collect();
    let val: Vec<&LabeledSample> = val_idx.iter().map(|&i| &train_set[i]).collect();

    // Input standardization from the fitting split.
    let n = net.n();
    let mut feats = Array2::zeros((fit.len(), model.spec.input_dim));
    for (r, s) in fit.iter().enumerate() {
        for i in 0..n {
            feats[(r, i)] = s.demand.pd[i];
            feats[(r, n + i)] = s.demand.qd[i];
        }
    }
    model.normalization = Normalization::fit(feats.view());

    let mut adam = AdamState {
        m: model
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect(),
        v: model
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
            .collect(),
        t: 0,
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut validation_history = Vec::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut diverged = false;

    'epochs: for epoch in 0..config.epochs {
        let lr = config.learning_rate
            * config
                .lr_decay_factor
                .powi((epoch / config.lr_decay_every.max(1)) as i32);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = LossBreakdown::default();
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| fit[i]).collect();
            let (grads, loss) = gradients(&model, net, ybus, &batch, config.loss_mode);
            if !loss.is_finite() {
                log::warn!("training diverged at epoch {epoch}; keeping last finite snapshot");
                diverged = true;
                break 'epochs;
            }
            epoch_loss.add(&loss, batch.len() as f64);
            seen += batch.len();
            apply_update(&mut model, &grads, lr, config.optimizer, &mut adam);
        }
        history.push(epoch_loss.scaled(1.0 / seen.max(1) as f64));

        if !val.is_empty() {
            let val_loss = loss_batch(&model, net, ybus, &val, config.loss_mode).total;
            validation_history.push(val_loss);
            let improved = best.as_ref().map(|(b, _, _)| val_loss < *b).unwrap_or(true);
            if val_loss.is_finite() && improved {
                best = Some((val_loss, model.clone(), epoch));
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, snapshot, epoch)) => (snapshot, epoch),
        None => {
            let last = history.len().saturating_sub(1);
            (model, last)
        }
    };
    TrainOutcome {
        model,
        history,
        validation_history,
        best_epoch,
        diverged,
    }
}

fn apply_update(
    model: &mut Model,
    grads: &GradientSet,
    lr: f64,
    optimizer: OptimizerKind,
    adam: &mut AdamState,
) {
    match optimizer {
        OptimizerKind::Sgd => {
            for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
                layer.w.zip_mut_with(&g.w, |w, &gw| *w -= lr * gw);
                layer.b.zip_mut_with(&g.b, |b, &gb| *b -= lr * gb);
            }
        }
        OptimizerKind::Adam => {
            adam.t += 1;
            let t = adam.t as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for (l, (layer, g)) in model.layers.iter_mut().zip(&grads.layers).enumerate() {
                let (mw, mb) = &mut adam.m[l];
                let (vw, vb) = &mut adam.v[l];
                mw.zip_mut_with(&g.w, |m, &gw| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gw);
                vw.zip_mut_with(&g.w, |v, &gw| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gw * gw);
                mb.zip_mut_with(&g.b, |m, &gb| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gb);
                vb.zip_mut_with(&g.b, |v, &gb| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gb * gb);
                for ((w, &m), &v) in layer.w.iter_mut().zip(mw.iter()).zip(vw.iter()) {
                    *w -= lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                }
                for ((b, &m), &v) in layer.b.iter_mut().zip(mb.iter()).zip(vb.iter()) {
                    *b -= lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
