//! Channel ranking, pruning plans, physical channel removal and
//! fine-tuning.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    evaluate, train_epoch, Evaluation, ForwardHooks, LayerParams, LayerSpec, ModelGraph, SgdSchedule, SgdState,
    Trainable,
};
use crate::switch::SwitchState;
use crate::tensor::{Tape, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Dirichlet,
    L1,
    L2,
    Derivative,
    Random,
}

impl RankMethod {
    pub fn tag(self) -> &'static str {
        match self {
            RankMethod::Dirichlet => "dirichlet",
            RankMethod::L1 => "l1",
            RankMethod::L2 => "l2",
            RankMethod::Derivative => "derivative",
            RankMethod::Random => "random",
        }
    }
}

impl fmt::Display for RankMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RankMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(RankMethod::Dirichlet),
            "l1" => Ok(RankMethod::L1),
            "l2" => Ok(RankMethod::L2),
            "derivative" => Ok(RankMethod::Derivative),
            "random" => Ok(RankMethod::Random),
            other => Err(Error::config(format!(
                "unknown ranking method {other:?} (dirichlet|l1|l2|derivative|random)"
            ))),
        }
    }
}

/// Scores for one prunable layer and the channel order they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerRanking {
    /// Prunable-layer ordinal.
    pub layer: usize,
    pub scores: Vec<f64>,
    /// Channels from most to least important.
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingReport {
    pub method: RankMethod,
    pub per_layer: Vec<LayerRanking>,
}

/// Indices sorted by descending score; equal scores keep index order.
pub fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

impl RankingReport {
    pub fn from_scores(method: RankMethod, scores: Vec<Vec<f64>>) -> Self {
        let per_layer = scores
            .into_iter()
            .enumerate()
            .map(|(layer, scores)| LayerRanking {
                layer,
                order: order_by_score(&scores),
                scores,
            })
            .collect();
        RankingReport { method, per_layer }
    }

    /// Checks that every order is a permutation sorted by score with
    /// index tie-breaking.
    pub fn validate(&self) -> Result<()> {
        for l in &self.per_layer {
            if l.order != order_by_score(&l.scores) {
                return Err(Error::contract(format!("layer {} order is not the score order", l.layer)));
            }
        }
        Ok(())
    }

    /// Writes `layer,channel,score,rank,method` rows, one per channel.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer", "channel", "score", "rank", "method"])?;
        for l in &self.per_layer {
            for (rank, &c) in l.order.iter().enumerate() {
                w.write_record([
                    l.layer.to_string(),
                    c.to_string(),
                    format!("{:e}", l.scores[c]),
                    rank.to_string(),
                    self.method.tag().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut method = None;
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::config(format!("short ranking row {rec:?}")));
            let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::config(format!("{s:?}: {e}")));
            let layer = parse_usize(field(0)?)?;
            let channel = parse_usize(field(1)?)?;
            let score = field(2)?
                .parse::<f64>()
                .map_err(|e| Error::config(format!("score: {e}")))?;
            let m: RankMethod = field(4)?.parse()?;
            if method.get_or_insert(m) != &m {
                return Err(Error::config("ranking CSV mixes methods"));
            }
            rows.push((layer, channel, score));
        }
        let method = method.ok_or_else(|| Error::config("empty ranking CSV"))?;
        let layers = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut scores: Vec<Vec<Option<f64>>> = vec![Vec::new(); layers];
        for (layer, channel, score) in rows {
            let s = &mut scores[layer];
            if s.len() <= channel {
                s.resize(channel + 1, None);
            }
            s[channel] = Some(score);
        }
        let scores = scores
            .into_iter()
            .enumerate()
            .map(|(l, s)| {
                s.into_iter()
                    .enumerate()
                    .map(|(c, v)| v.ok_or_else(|| Error::config(format!("layer {l} channel {c} missing"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RankingReport::from_scores(method, scores))
    }
}

/// Ranks channels by posterior-mean switch value.
pub fn rank_dirichlet(states: &[SwitchState]) -> RankingReport {
    RankingReport::from_scores(RankMethod::Dirichlet, states.iter().map(|s| s.mean()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// Ranks channels by the norm of their incoming weights and bias.
pub fn rank_magnitude(model: &ModelGraph, norm: Norm) -> RankingReport {
    let scores = model
        .prunable_layers()
        .into_iter()
        .map(|i| {
            let LayerParams::Linear { weight, bias } = &model.params()[i] else {
                unreachable!("prunable layers are linear")
            };
            let per_out = weight.numel() / bias.numel();
            weight
                .data()
                .chunks(per_out)
                .zip(bias.data())
                .map(|(row, &b)| {
                    let vals = row.iter().chain(std::iter::once(&b));
                    match norm {
                        Norm::L1 => vals.map(|v| v.abs()).sum(),
                        Norm::L2 => vals.map(|v| v * v).sum::<f64>().sqrt(),
                    }
                })
                .collect()
        })
        .collect();
    let method = match norm {
        Norm::L1 => RankMethod::L1,
        Norm::L2 => RankMethod::L2,
    };
    RankingReport::from_scores(method, scores)
}

/// Ranks channels by the first-order cost of zeroing them,
/// `|∂C/∂h · h|` averaged over examples and spatial positions, where `C`
/// is each example's cross-entropy and `h` the pre-activation.
pub fn rank_derivative(model: &ModelGraph, batch: &Dataset) -> Result<RankingReport> {
    if batch.is_empty() {
        return Err(Error::contract("derivative ranking needs a non-empty batch"));
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, Trainable::Frozen);
    let x = tape.leaf(batch.inputs.clone(), true);
    let mut taps = Vec::new();
    let logits = model.run_layers(
        &mut tape,
        &bound,
        x,
        0..model.layers().len(),
        &mut ForwardHooks {
            switches: None,
            taps: Some(&mut taps),
        },
    )?;
    for &(_, v) in &taps {
        tape.retain_grad(v);
    }
    let loss = tape.softmax_cross_entropy(logits, &batch.labels)?;
    // the loss is a batch mean; scale back to per-example costs
    tape.backward_scaled(loss, batch.len() as f64)?;
    let mut scores = vec![Vec::new(); taps.len()];
    for (p, v) in taps {
        let h = tape.value(v);
        let c = h.shape()[1];
        let spatial = h.numel() / (h.shape()[0] * c);
        let zeros = vec![0.0; h.numel()];
        let g = tape.grad(v).unwrap_or(&zeros);
        let mut s = vec![0.0; c];
        for (i, (&hv, &gv)) in h.data().iter().zip(g).enumerate() {
            s[(i / spatial) % c] += (hv * gv).abs();
        }
        let denom = (h.shape()[0] * spatial) as f64;
        scores[p] = s.into_iter().map(|v| v / denom).collect();
    }
    Ok(RankingReport::from_scores(RankMethod::Derivative, scores))
}

/// Uniformly random channel order.
pub fn rank_random<R: Rng + ?Sized>(model: &ModelGraph, rng: &mut R) -> RankingReport {
    let scores = model
        .prunable_widths()
        .into_iter()
        .map(|w| (0..w).map(|_| rng.random::<f64>()).collect())
        .collect();
    RankingReport::from_scores(RankMethod::Random, scores)
}

/// Per-layer retained channel indices, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub keep: Vec<Vec<usize>>,
}

/// How many channels each layer keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum KeepSpec {
    Counts(Vec<usize>),
    /// Fraction of channels removed; each layer keeps `ceil((1-rate)·width)`.
    Rate(f64),
}

/// Channels kept at `rate` for a layer of width `width`.
pub fn kept_at_rate(width: usize, rate: f64) -> usize {
    // guard against (1-rate)·width landing a hair above an integer
    (((1.0 - rate) * width as f64) - 1e-9).ceil().max(1.0) as usize
}

/// The top channels of each layer's order, sorted ascending.
pub fn make_plan(report: &RankingReport, spec: &KeepSpec) -> Result<PruningPlan> {
    let widths: Vec<usize> = report.per_layer.iter().map(|l| l.order.len()).collect();
    let counts = match spec {
        KeepSpec::Counts(c) => {
            if c.len() != widths.len() {
                return Err(Error::contract(format!(
                    "{} keep counts for {} layers",
                    c.len(),
                    widths.len()
                )));
            }
            c.clone()
        }
        KeepSpec::Rate(r) => {
            if !(0.0..1.0).contains(r) {
                return Err(Error::contract(format!("pruning rate {r} outside [0, 1)")));
            }
            widths.iter().map(|&w| kept_at_rate(w, *r)).collect()
        }
    };
    let keep = report
        .per_layer
        .iter()
        .zip(&counts)
        .map(|(l, &k)| {
            if k == 0 || k > l.order.len() {
                return Err(Error::contract(format!(
                    "layer {} keeps {k} of {} channels",
                    l.layer,
                    l.order.len()
                )));
            }
            let mut kept = l.order[..k].to_vec();
            kept.sort_unstable();
            Ok(kept)
        })
        .collect::<Result<_>>()?;
    Ok(PruningPlan { keep })
}

impl PruningPlan {
    pub fn identity(model: &ModelGraph) -> Self {
        PruningPlan {
            keep: model.prunable_widths().into_iter().map(|w| (0..w).collect()).collect(),
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.keep.iter().map(|k| k.len()).collect()
    }

    /// Checks the plan against a model's prunable widths.
    pub fn validate(&self, model: &ModelGraph) -> Result<()> {
        let widths = model.prunable_widths();
        if widths.len() != self.keep.len() {
            return Err(Error::dim(format!(
                "plan covers {} layers, model has {} prunable layers",
                self.keep.len(),
                widths.len()
            )));
        }
        for (l, (k, &w)) in self.keep.iter().zip(&widths).enumerate() {
            if k.is_empty() || k.windows(2).any(|p| p[0] >= p[1]) || k.last().is_some_and(|&c| c >= w) {
                return Err(Error::dim(format!(
                    "layer {l}: keep list {k:?} is not a non-empty increasing subset of 0..{w}"
                )));
            }
        }
        Ok(())
    }

    /// The single plan equal to applying `self` and then `next`, where
    /// `next` indexes into the channels `self` kept.
    pub fn compose(&self, next: &PruningPlan) -> Result<PruningPlan> {
        if self.keep.len() != next.keep.len() {
            return Err(Error::dim("composed plans cover different layer counts"));
        }
        let keep = self
            .keep
            .iter()
            .zip(&next.keep)
            .map(|(outer, inner)| {
                inner
                    .iter()
                    .map(|&j| {
                        outer
                            .get(j)
                            .copied()
                            .ok_or_else(|| Error::dim(format!("channel {j} beyond {} kept", outer.len())))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(PruningPlan { keep })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn select_axis0(t: &Tensor, keep: &[usize]) -> Tensor {
    let stride = t.numel() / t.shape()[0];
    let mut data = Vec::with_capacity(keep.len() * stride);
    for &k in keep {
        data.extend_from_slice(&t.data()[k * stride..(k + 1) * stride]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = keep.len();
    Tensor::new(shape, data).expect("consistent shape")
}

fn select_axis1(t: &Tensor, keep: &[usize]) -> Tensor {
    let rows = t.shape()[0];
    let cols = t.shape()[1];
    let inner = t.numel() / (rows * cols);
    let mut data = Vec::with_capacity(rows * keep.len() * inner);
    for r in 0..rows {
        for &k in keep {
            let start = (r * cols + k) * inner;
            data.extend_from_slice(&t.data()[start..start + inner]);
        }
    }
    let mut shape = t.shape().to_vec();
    shape[1] = keep.len();
    Tensor::new(shape, data).expect("consistent shape")
}

fn scale_rows(t: &mut Tensor, s: &[f64]) {
    let stride = t.numel() / s.len();
    for (row, &v) in t.data_mut().chunks_mut(stride).zip(s) {
        row.iter_mut().for_each(|x| *x *= v);
    }
}

/// Removes the channels `plan` drops and all switch layers.
///
/// Each switch's stored values are first folded into the kept channels
/// (into the preceding affine if there is one, otherwise into the
/// linear weights and bias), so the pruned model computes exactly what
/// the switched model computes with the dropped channels zeroed.
pub fn apply_plan(model: &ModelGraph, plan: &PruningPlan) -> Result<ModelGraph> {
    plan.validate(model)?;
    let shapes = model.layer_output_shapes()?;
    let prunable = model.prunable_layers();
    let mut layers = Vec::new();
    let mut params: Vec<LayerParams> = Vec::new();
    // channels (or flattened features) flowing out of the last layer
    let mut current: Option<Vec<usize>> = None;
    for (i, (layer, p)) in model.layers().iter().zip(model.params()).enumerate() {
        match (layer, p) {
            (LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. }, LayerParams::Linear { weight, bias }) => {
                let (mut w, mut b) = (weight.clone(), bias.clone());
                if let Some(k) = &current {
                    w = select_axis1(&w, k);
                }
                current = None;
                if let Some(pi) = prunable.iter().position(|&l| l == i) {
                    let k = &plan.keep[pi];
                    w = select_axis0(&w, k);
                    b = select_axis0(&b, k);
                    current = Some(k.clone());
                }
                let (new_out, new_in) = (w.shape()[0], w.shape()[1]);
                let mut spec = layer.clone();
                match &mut spec {
                    LayerSpec::Conv2d { c_in, c_out, .. } => (*c_in, *c_out) = (new_in, new_out),
                    LayerSpec::FullyConnected { d_in, d_out } => (*d_in, *d_out) = (new_in, new_out),
                    _ => unreachable!(),
                }
                layers.push(spec);
                params.push(LayerParams::Linear { weight: w, bias: b });
            }
            (LayerSpec::ChannelAffine { .. }, LayerParams::Affine { scale, shift }) => {
                let (scale, shift) = match &current {
                    Some(k) => (select_axis0(scale, k), select_axis0(shift, k)),
                    None => (scale.clone(), shift.clone()),
                };
                layers.push(LayerSpec::ChannelAffine { c: scale.numel() });
                params.push(LayerParams::Affine { scale, shift });
            }
            (LayerSpec::Switch { .. }, LayerParams::Switch { values }) => {
                let s = match &current {
                    Some(k) => select_axis0(values, k),
                    None => values.clone(),
                };
                match params.last_mut() {
                    Some(LayerParams::Affine { scale, shift }) => {
                        scale_rows(scale, s.data());
                        scale_rows(shift, s.data());
                    }
                    Some(LayerParams::Linear { weight, bias }) => {
                        scale_rows(weight, s.data());
                        scale_rows(bias, s.data());
                    }
                    _ => unreachable!("validated switch placement"),
                }
            }
            (LayerSpec::Flatten, _) => {
                if let Some(k) = &current {
                    let input = if i == 0 { model.input_shape().to_vec() } else { shapes[i - 1].clone() };
                    let spatial: usize = input[1..].iter().product();
                    current = Some(
                        k.iter()
                            .flat_map(|&c| (c * spatial..(c + 1) * spatial).collect::<Vec<_>>())
                            .collect(),
                    );
                }
                layers.push(layer.clone());
                params.push(LayerParams::None);
            }
            _ => {
                layers.push(layer.clone());
                params.push(p.clone());
            }
        }
    }
    let mut pruned = ModelGraph::new(model.input_shape().to_vec(), layers, params)?;
    pruned.metadata = model.metadata.clone();
    pruned
        .metadata
        .training_history
        .push(format!("pruned {} -> {}", model.arch_string(), pruned.arch_string()));
    Ok(pruned)
}

/// Outcome of [`finetune`].
#[derive(Clone, Debug)]
pub struct Finetuned {
    pub model: ModelGraph,
    /// Validation result of the returned model.
    pub best: Evaluation,
    /// Epoch that produced it (0 is the starting model).
    pub best_epoch: usize,
    /// Validation result after every epoch, starting with epoch 0.
    pub history: Vec<Evaluation>,
}

/// SGD-with-momentum retraining; returns the best model on `val`,
/// counting the starting model as epoch 0.
pub fn finetune<R: Rng + ?Sized>(
    model: &ModelGraph,
    train: &Dataset,
    val: &Dataset,
    schedule: &SgdSchedule,
    rng: &mut R,
) -> Result<Finetuned> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract("fine-tuning needs non-empty training and validation data"));
    }
    let eval_batch = 500;
    let mut current = model.clone();
    let start = evaluate(&current, val, eval_batch)?;
    let mut best = (current.clone(), start, 0);
    let mut history = vec![start];
    let mut state = SgdState::default();
    for epoch in 1..=schedule.epochs {
        train_epoch(&mut current, train, schedule, &mut state, rng)?;
        let e = evaluate(&current, val, eval_batch)?;
        history.push(e);
        if e.accuracy > best.1.accuracy {
            best = (current.clone(), e, epoch);
        }
    }
    let (mut model, best_eval, best_epoch) = best;
    if best_epoch > 0 {
        model
            .metadata
            .training_history
            .push(format!("finetuned {best_epoch} epochs, val error {:.2}%", best_eval.error_pct()));
    }
    Ok(Finetuned {
        model,
        best: best_eval,
        best_epoch,
        history,
    })
}
