//! Minibatch SGD with momentum for model weights.

use super::{LayerVars, ModelGraph, Trainable};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        SgdSchedule {
            epochs: 1,
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

/// Momentum buffers, one per trainable tensor.
#[derive(Clone, Debug, Default)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
}

impl Evaluation {
    /// Test error in percent.
    pub fn error_pct(&self) -> f64 {
        100.0 * (1.0 - self.accuracy)
    }
}

fn trainable_vars(layers: &[LayerVars]) -> Vec<Option<Var>> {
    layers
        .iter()
        .flat_map(|l| match *l {
            LayerVars::None => vec![],
            LayerVars::Linear { weight, bias } => vec![Some(weight), Some(bias)],
            LayerVars::Affine { scale, shift } => vec![Some(scale), Some(shift)],
            LayerVars::Switch { .. } => vec![None],
        })
        .collect()
}

/// One pass over `data` in shuffled minibatches. Returns the mean
/// training loss over the batches seen.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut ModelGraph,
    data: &Dataset,
    schedule: &SgdSchedule,
    state: &mut SgdState,
    rng: &mut R,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let batches = data.batch_indices(schedule.batch_size, Some(rng));
    let mut total = 0.0;
    let mut tape = Tape::new();
    for idx in &batches {
        let batch = data.subset(idx)?;
        tape.clear();
        let bound = model.bind(&mut tape, Trainable::Weights);
        let x = tape.constant(batch.inputs);
        let logits = model.run_layers(&mut tape, &bound, x, 0..model.layers.len(), &mut Default::default())?;
        let loss = tape.softmax_cross_entropy(logits, &batch.labels)?;
        total += tape.value(loss).item()?;
        tape.backward(loss)?;
        let vars = trainable_vars(&bound.layers);
        let tensors = model.tensors_mut();
        if state.velocity.len() != tensors.len() {
            state.velocity = tensors.iter().map(|t| vec![0.0; t.numel()]).collect();
        }
        for ((t, v), vel) in tensors.into_iter().zip(vars).zip(&mut state.velocity) {
            let Some(v) = v else { continue };
            let Some(g) = tape.grad(v) else { continue };
            for ((w, &gi), m) in t.data_mut().iter_mut().zip(g).zip(vel.iter_mut()) {
                *m = schedule.momentum * *m + gi + schedule.weight_decay * *w;
                *w -= schedule.lr * *m;
            }
        }
    }
    Ok(total / batches.len() as f64)
}

/// Mean cross-entropy and accuracy of `model` on `data`.
pub fn evaluate(model: &ModelGraph, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for idx in data.batch_indices::<rand_chacha::ChaCha8Rng>(batch_size, None) {
        let batch = data.subset(&idx)?;
        let logits = model.forward(&batch.inputs)?;
        let k = logits.shape()[1];
        for (row, &label) in logits.data().chunks(k).zip(&batch.labels) {
            if label >= k {
                return Err(Error::Index(format!("label {label} outside {k} classes")));
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        correct += logits
            .argmax_rows()
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}
