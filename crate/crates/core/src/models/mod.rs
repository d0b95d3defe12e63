//! Layer graphs for the desk-scale architectures.
//!
//! A [`ModelGraph`] is an ordered list of [`LayerSpec`]s plus their
//! parameters. The "prunable" layers are every convolution or
//! fully-connected layer except the final (output) one; their output widths
//! form the architecture string, e.g. `"6-8-40-20"` for LeNet-5.

mod io;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MAGIC, FORMAT_VERSION};
pub use train::{evaluate, train_epoch, Evaluation, SgdSchedule, SgdState};

use crate::error::{Error, Result};
use crate::tensor::kernels::conv_out_dim;
use crate::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    FullyConnected {
        d_in: usize,
        d_out: usize,
    },
    Relu,
    MaxPool {
        k: usize,
        stride: usize,
    },
    Flatten,
    /// Per-channel `scale · h + shift`; a folded batch-norm.
    ChannelAffine {
        c: usize,
    },
    /// Importance switch multiplying the preceding pre-activation.
    Switch {
        d: usize,
    },
}

impl LayerSpec {
    pub fn is_linear(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. })
    }

    /// Output channels of a linear layer.
    pub fn out_channels(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d { c_out, .. } => Some(c_out),
            LayerSpec::FullyConnected { d_out, .. } => Some(d_out),
            _ => None,
        }
    }
}

/// Parameters owned by one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    None,
    /// `weight` is `[c_out, c_in, kh, kw]` or `[d_out, d_in]`.
    Linear { weight: Tensor, bias: Tensor },
    Affine { scale: Tensor, shift: Tensor },
    /// Fixed switch values used when no switch sample is supplied.
    Switch { values: Tensor },
}

impl LayerParams {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Linear { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerParams::Affine { scale, shift } => vec![("scale", scale), ("shift", shift)],
            LayerParams::Switch { values } => vec![("switch", values)],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Linear { weight, bias } => vec![weight, bias],
            LayerParams::Affine { scale, shift } => vec![scale, shift],
            LayerParams::Switch { values } => vec![values],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub training_history: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    pub metadata: Metadata,
}

/// Tape handles for one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub enum LayerVars {
    None,
    Linear { weight: Var, bias: Var },
    Affine { scale: Var, shift: Var },
    Switch { values: Var },
}

/// A model's parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    pub layers: Vec<LayerVars>,
}

/// Which tensors, if any, receive gradients when a model is bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    Frozen,
    Weights,
}

/// Per-call overrides and taps for [`ModelGraph::run_layers`].
#[derive(Default)]
pub struct ForwardHooks<'a> {
    /// Switch values by switch ordinal; `None` uses the stored values.
    pub switches: Option<&'a [Option<Var>]>,
    /// Collects `(prunable index, pre-activation)` at every switch position.
    pub taps: Option<&'a mut Vec<(usize, Var)>>,
}

impl ModelGraph {
    /// Validates shapes and parameters and builds the graph.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, params: Vec<LayerParams>) -> Result<Self> {
        if layers.len() != params.len() {
            return Err(Error::dim(format!(
                "{} layers but {} parameter entries",
                layers.len(),
                params.len()
            )));
        }
        let model = ModelGraph {
            input_shape,
            layers,
            params,
            metadata: Metadata::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a graph with zeroed weights, unit affine scales and unit switches.
    pub fn with_default_params(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let params = layers.iter().map(default_params).collect();
        Self::new(input_shape, layers, params)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Every tensor with its `"<layer>.<role>"` name, in declared order.
    pub fn named_weights(&self) -> Vec<(String, &Tensor)> {
        self.params
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                p.tensors()
                    .into_iter()
                    .map(move |(role, t)| (format!("{i}.{role}"), t))
            })
            .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }

    /// Per-example shape after every layer.
    pub fn layer_output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = propagate_shape(layer, &shape).map_err(|e| Error::dim(format!("layer {i}: {e}")))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::dim(format!("invalid input shape {:?}", self.input_shape)));
        }
        self.layer_output_shapes()?;
        for (i, (layer, params)) in self.layers.iter().zip(&self.params).enumerate() {
            let expected = expected_param_shapes(layer);
            let got: Vec<Vec<usize>> = params.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
            let kind_ok = matches!(
                (layer, params),
                (LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. }, LayerParams::Linear { .. })
                    | (LayerSpec::ChannelAffine { .. }, LayerParams::Affine { .. })
                    | (LayerSpec::Switch { .. }, LayerParams::Switch { .. })
                    | (
                        LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Flatten,
                        LayerParams::None
                    )
            );
            if !kind_ok || expected != got {
                return Err(Error::dim(format!(
                    "layer {i} ({layer:?}) expects parameter shapes {expected:?}, got {got:?}"
                )));
            }
            if let LayerSpec::Switch { .. } = layer {
                let attached = match i.checked_sub(1).map(|p| &self.layers[p]) {
                    Some(l) if l.is_linear() => true,
                    Some(LayerSpec::ChannelAffine { .. }) => i >= 2 && self.layers[i - 2].is_linear(),
                    _ => false,
                };
                if !attached {
                    return Err(Error::dim(format!(
                        "switch at layer {i} must follow a conv/fc pre-activation"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Layer indices of the prunable linear layers.
    pub fn prunable_layers(&self) -> Vec<usize> {
        let linear: Vec<usize> = (0..self.layers.len()).filter(|&i| self.layers[i].is_linear()).collect();
        match linear.split_last() {
            Some((_, rest)) => rest.to_vec(),
            None => vec![],
        }
    }

    /// Output widths of the prunable layers.
    pub fn prunable_widths(&self) -> Vec<usize> {
        self.prunable_layers()
            .iter()
            .map(|&i| self.layers[i].out_channels().expect("linear"))
            .collect()
    }

    /// Widths of the prunable layers joined by `-`.
    pub fn arch_string(&self) -> String {
        self.prunable_widths()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Layer index where the pre-activation of each prunable layer is
    /// complete (the linear layer itself, or its trailing affine).
    pub fn tap_layers(&self) -> Vec<usize> {
        self.prunable_layers()
            .into_iter()
            .map(|i| match self.layers.get(i + 1) {
                Some(LayerSpec::ChannelAffine { .. }) => i + 1,
                _ => i,
            })
            .collect()
    }

    /// Layer indices of the switch layers, in order.
    pub fn switch_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| matches!(self.layers[i], LayerSpec::Switch { .. }))
            .collect()
    }

    /// Switch widths in order.
    pub fn switch_dims(&self) -> Vec<usize> {
        self.switch_layers()
            .iter()
            .map(|&i| match self.layers[i] {
                LayerSpec::Switch { d } => d,
                _ => unreachable!(),
            })
            .collect()
    }

    /// Prunable index of the layer feeding each switch.
    pub fn switch_owners(&self) -> Vec<usize> {
        let taps = self.tap_layers();
        self.switch_layers()
            .iter()
            .map(|&s| taps.iter().position(|&t| t + 1 == s).expect("validated switch placement"))
            .collect()
    }

    /// Stored switch values, by switch ordinal.
    pub fn switch_values(&self) -> Vec<&[f64]> {
        self.switch_layers()
            .iter()
            .map(|&i| match &self.params[i] {
                LayerParams::Switch { values } => values.data(),
                _ => unreachable!(),
            })
            .collect()
    }

    /// Overwrites the stored switch values.
    pub fn set_switch_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let layers = self.switch_layers();
        if layers.len() != values.len() {
            return Err(Error::dim(format!(
                "model has {} switches, got {} value vectors",
                layers.len(),
                values.len()
            )));
        }
        for (&i, v) in layers.iter().zip(values) {
            let LayerParams::Switch { values: stored } = &mut self.params[i] else {
                unreachable!()
            };
            if stored.numel() != v.len() {
                return Err(Error::dim(format!(
                    "switch at layer {i} has width {}, got {} values",
                    stored.numel(),
                    v.len()
                )));
            }
            stored.data_mut().copy_from_slice(v);
        }
        Ok(())
    }

    /// Inserts a unit switch after every prunable pre-activation that
    /// lacks one.
    pub fn with_switches(&self) -> Result<ModelGraph> {
        let taps = self.tap_layers();
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for (i, (l, p)) in self.layers.iter().zip(&self.params).enumerate() {
            layers.push(l.clone());
            params.push(p.clone());
            let has_switch = matches!(self.layers.get(i + 1), Some(LayerSpec::Switch { .. }));
            if taps.contains(&i) && !has_switch {
                let d = self.channel_width_at(i);
                layers.push(LayerSpec::Switch { d });
                params.push(LayerParams::Switch {
                    values: Tensor::ones(&[d]),
                });
            }
        }
        let mut m = ModelGraph::new(self.input_shape.clone(), layers, params)?;
        m.metadata = self.metadata.clone();
        Ok(m)
    }

    fn channel_width_at(&self, layer: usize) -> usize {
        let mut l = layer;
        loop {
            if let Some(c) = self.layers[l].out_channels() {
                return c;
            }
            l -= 1;
        }
    }

    /// Registers the parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape, trainable: Trainable) -> Bound {
        let train = trainable == Trainable::Weights;
        let layers = self
            .params
            .iter()
            .map(|p| match p {
                LayerParams::None => LayerVars::None,
                LayerParams::Linear { weight, bias } => LayerVars::Linear {
                    weight: tape.leaf(weight.clone(), train),
                    bias: tape.leaf(bias.clone(), train),
                },
                LayerParams::Affine { scale, shift } => LayerVars::Affine {
                    scale: tape.leaf(scale.clone(), train),
                    shift: tape.leaf(shift.clone(), train),
                },
                LayerParams::Switch { values } => LayerVars::Switch {
                    values: tape.constant(values.clone()),
                },
            })
            .collect();
        Bound { layers }
    }

    /// Runs the layers in `range` on a batch `x`.
    pub fn run_layers(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        mut x: Var,
        range: Range<usize>,
        hooks: &mut ForwardHooks<'_>,
    ) -> Result<Var> {
        let taps = self.tap_layers();
        let switch_layers = self.switch_layers();
        for i in range {
            x = match (&self.layers[i], bound.layers[i]) {
                (LayerSpec::Conv2d { stride, pad, .. }, LayerVars::Linear { weight, bias }) => {
                    let y = tape.conv2d(x, weight, *stride, *pad)?;
                    tape.add_channel_bias(y, bias)?
                }
                (LayerSpec::FullyConnected { .. }, LayerVars::Linear { weight, bias }) => {
                    tape.linear(x, weight, Some(bias))?
                }
                (LayerSpec::Relu, _) => tape.relu(x),
                (LayerSpec::MaxPool { k, stride }, _) => tape.max_pool2d(x, *k, *stride)?,
                (LayerSpec::Flatten, _) => tape.flatten(x)?,
                (LayerSpec::ChannelAffine { .. }, LayerVars::Affine { scale, shift }) => {
                    let y = tape.broadcast_mul_channels(x, scale)?;
                    tape.add_channel_bias(y, shift)?
                }
                (LayerSpec::Switch { .. }, LayerVars::Switch { values }) => {
                    let ordinal = switch_layers.iter().position(|&s| s == i).expect("switch layer");
                    let s = hooks
                        .switches
                        .and_then(|sw| sw.get(ordinal).copied().flatten())
                        .unwrap_or(values);
                    tape.broadcast_mul_channels(x, s)?
                }
                (layer, _) => {
                    return Err(Error::contract(format!("layer {i} ({layer:?}) bound to wrong parameters")))
                }
            };
            if let Some(p) = taps.iter().position(|&t| t == i) {
                if let Some(t) = hooks.taps.as_deref_mut() {
                    t.push((p, x));
                }
            }
        }
        Ok(x)
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::dim(format!(
                "batch of shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Inference forward pass on a batch, returning logits.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_batch(x)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::Frozen);
        let xv = tape.constant(x.clone());
        let out = self.run_layers(&mut tape, &bound, xv, 0..self.layers.len(), &mut ForwardHooks::default())?;
        Ok(tape.value(out).clone())
    }

    /// Forward pass that stops after layer `last` (inclusive).
    pub fn forward_until(&self, x: &Tensor, last: usize) -> Result<Tensor> {
        self.check_batch(x)?;
        if last >= self.layers.len() {
            return Err(Error::Index(format!("layer {last} out of range")));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::Frozen);
        let xv = tape.constant(x.clone());
        let out = self.run_layers(&mut tape, &bound, xv, 0..last + 1, &mut ForwardHooks::default())?;
        Ok(tape.value(out).clone())
    }

    /// Sets every parameter tensor to zero.
    pub fn zero_weights(&mut self) {
        for p in &mut self.params {
            for t in p.tensors_mut() {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// He-uniform initialisation of linear weights; zero biases.
    pub fn init_weights<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (layer, p) in self.layers.iter().zip(&mut self.params) {
            if let LayerParams::Linear { weight, bias } = p {
                let fan_in = match *layer {
                    LayerSpec::Conv2d { c_in, kh, kw, .. } => c_in * kh * kw,
                    LayerSpec::FullyConnected { d_in, .. } => d_in,
                    _ => unreachable!(),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                weight
                    .data_mut()
                    .iter_mut()
                    .for_each(|w| *w = rng.random_range(-bound..bound));
                bias.data_mut().iter_mut().for_each(|b| *b = 0.0);
            }
        }
    }
}

fn default_params(layer: &LayerSpec) -> LayerParams {
    let shapes = expected_param_shapes(layer);
    match layer {
        LayerSpec::Conv2d { .. } | LayerSpec::FullyConnected { .. } => LayerParams::Linear {
            weight: Tensor::zeros(&shapes[0]),
            bias: Tensor::zeros(&shapes[1]),
        },
        LayerSpec::ChannelAffine { c } => LayerParams::Affine {
            scale: Tensor::ones(&[*c]),
            shift: Tensor::zeros(&[*c]),
        },
        LayerSpec::Switch { d } => LayerParams::Switch {
            values: Tensor::ones(&[*d]),
        },
        _ => LayerParams::None,
    }
}

fn expected_param_shapes(layer: &LayerSpec) -> Vec<Vec<usize>> {
    match *layer {
        LayerSpec::Conv2d { c_in, c_out, kh, kw, .. } => vec![vec![c_out, c_in, kh, kw], vec![c_out]],
        LayerSpec::FullyConnected { d_in, d_out } => vec![vec![d_out, d_in], vec![d_out]],
        LayerSpec::ChannelAffine { c } => vec![vec![c], vec![c]],
        LayerSpec::Switch { d } => vec![vec![d]],
        _ => vec![],
    }
}

fn propagate_shape(layer: &LayerSpec, shape: &[usize]) -> Result<Vec<usize>> {
    match *layer {
        LayerSpec::Conv2d {
            c_in,
            c_out,
            kh,
            kw,
            stride,
            pad,
        } => {
            if shape.len() != 3 || shape[0] != c_in {
                return Err(Error::dim(format!("conv expects [{c_in}, H, W], got {shape:?}")));
            }
            Ok(vec![
                c_out,
                conv_out_dim(shape[1], kh, stride, pad)?,
                conv_out_dim(shape[2], kw, stride, pad)?,
            ])
        }
        LayerSpec::FullyConnected { d_in, d_out } => {
            if shape != [d_in] {
                return Err(Error::dim(format!("fc expects [{d_in}], got {shape:?}")));
            }
            Ok(vec![d_out])
        }
        LayerSpec::Relu => Ok(shape.to_vec()),
        LayerSpec::MaxPool { k, stride } => {
            if shape.len() != 3 {
                return Err(Error::dim(format!("max pool expects [C, H, W], got {shape:?}")));
            }
            Ok(vec![
                shape[0],
                conv_out_dim(shape[1], k, stride, 0)?,
                conv_out_dim(shape[2], k, stride, 0)?,
            ])
        }
        LayerSpec::Flatten => Ok(vec![shape.iter().product()]),
        LayerSpec::ChannelAffine { c } | LayerSpec::Switch { d: c } => {
            if shape.first() != Some(&c) {
                return Err(Error::dim(format!("per-channel layer of width {c} on {shape:?}")));
            }
            Ok(shape.to_vec())
        }
    }
}

/// LeNet-5 on `1×28×28` inputs with widths `[c1, c2, f1, f2]`:
/// conv5×5–relu–pool2–conv5×5–relu–pool2–flatten–fc–relu–fc–relu–fc(10),
/// with a unit switch after each of the four prunable pre-activations.
pub fn build_lenet5(widths: [usize; 4], seed: u64) -> Result<ModelGraph> {
    let [c1, c2, f1, f2] = widths;
    if widths.contains(&0) {
        return Err(Error::dim(format!("LeNet-5 widths must be positive, got {widths:?}")));
    }
    let layers = vec![
        LayerSpec::Conv2d { c_in: 1, c_out: c1, kh: 5, kw: 5, stride: 1, pad: 0 },
        LayerSpec::Switch { d: c1 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { k: 2, stride: 2 },
        LayerSpec::Conv2d { c_in: c1, c_out: c2, kh: 5, kw: 5, stride: 1, pad: 0 },
        LayerSpec::Switch { d: c2 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { k: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::FullyConnected { d_in: c2 * 16, d_out: f1 },
        LayerSpec::Switch { d: f1 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { d_in: f1, d_out: f2 },
        LayerSpec::Switch { d: f2 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { d_in: f2, d_out: 10 },
    ];
    build_initialised(vec![1, 28, 28], layers, seed)
}

/// One-hidden-layer MLP: fc(d_h)–switch–relu–fc(d_out).
pub fn build_mlp(d_x: usize, d_h: usize, d_out: usize, seed: u64) -> Result<ModelGraph> {
    if d_x == 0 || d_h == 0 || d_out == 0 {
        return Err(Error::dim(format!("MLP dims must be positive, got ({d_x}, {d_h}, {d_out})")));
    }
    let layers = vec![
        LayerSpec::FullyConnected { d_in: d_x, d_out: d_h },
        LayerSpec::Switch { d: d_h },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { d_in: d_h, d_out },
    ];
    build_initialised(vec![d_x], layers, seed)
}

fn build_initialised(input: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<ModelGraph> {
    let mut m = ModelGraph::with_default_params(input, layers)?;
    m.init_weights(&mut ChaCha8Rng::seed_from_u64(seed));
    m.metadata.seed = seed;
    Ok(m)
}

/// Scalar parameter count: linear weights and biases plus affine
/// scales and shifts. Switch values are not counted.
pub fn count_params(model: &ModelGraph) -> usize {
    model
        .params
        .iter()
        .map(|p| match p {
            LayerParams::Linear { weight, bias } => weight.numel() + bias.numel(),
            LayerParams::Affine { scale, shift } => scale.numel() + shift.numel(),
            _ => 0,
        })
        .sum()
}

/// How multiply-accumulates are turned into a FLOP count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlopConvention {
    /// One FLOP per multiply-accumulate.
    #[default]
    MultiplyAccumulate,
    /// Two FLOPs (a multiply and an add) per multiply-accumulate.
    MultiplyAndAdd,
}

/// Multiply-accumulates of conv and fc layers for one example of
/// per-example shape `input_shape`.
pub fn count_macs(model: &ModelGraph, input_shape: &[usize]) -> Result<u64> {
    let mut shape = input_shape.to_vec();
    let mut total = 0u64;
    for layer in &model.layers {
        let next = propagate_shape(layer, &shape)?;
        total += match *layer {
            LayerSpec::Conv2d { c_in, c_out, kh, kw, .. } => (kh * kw * c_in * c_out * next[1] * next[2]) as u64,
            LayerSpec::FullyConnected { d_in, d_out } => (d_in * d_out) as u64,
            _ => 0,
        };
        shape = next;
    }
    Ok(total)
}

/// FLOPs under the default [`FlopConvention`].
pub fn count_flops(model: &ModelGraph, input_shape: &[usize]) -> Result<u64> {
    count_flops_with(model, input_shape, FlopConvention::default())
}

pub fn count_flops_with(model: &ModelGraph, input_shape: &[usize], convention: FlopConvention) -> Result<u64> {
    let macs = count_macs(model, input_shape)?;
    Ok(match convention {
        FlopConvention::MultiplyAccumulate => macs,
        FlopConvention::MultiplyAndAdd => 2 * macs,
    })
}
