use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::spec::{LayerKind, NetworkSpec, NormAxis};
use crate::error::{Error, Result};
use crate::layers::{self, AttentionParams, AttentionPoolConfig, BatchNormStats, Mode};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    first_param: usize,
    n_params: usize,
    stats: Option<usize>,
}

/// Executable instance of a [`NetworkSpec`]: trainable tensors plus batch
/// norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    spec: NetworkSpec,
    params: Vec<Param<T>>,
    stats: Vec<BatchNormStats<T>>,
    slots: Vec<Slot>,
}

/// Result of one forward pass.
pub struct Forward {
    /// Pre-softmax class scores `[B x n_classes]`.
    pub logits: Var,
    /// Tape handles of the parameters, in [`Model::params`] order.
    pub params: Vec<Var>,
}

fn param_shapes(kind: &LayerKind) -> Vec<(&'static str, Vec<usize>)> {
    match kind {
        LayerKind::Conv2d { kernel, cin, cout } => {
            vec![("weight", vec![kernel[0], kernel[1], *cin, *cout]), ("bias", vec![*cout])]
        }
        LayerKind::Conv1d { offsets, cin, cout } => {
            vec![("weight", vec![offsets.len(), *cin, *cout]), ("bias", vec![*cout])]
        }
        LayerKind::Dense { din, dout } => vec![("weight", vec![*din, *dout]), ("bias", vec![*dout])],
        LayerKind::BatchNorm { len, .. } => vec![("gamma", vec![*len]), ("beta", vec![*len])],
        LayerKind::AttentionPool { d, .. } => vec![("w", vec![*d, *d]), ("b", vec![*d]), ("u", vec![*d])],
        _ => Vec::new(),
    }
}

fn init_tensor<T: Scalar>(kind: &LayerKind, role: &str, shape: &[usize], rng: &mut impl RngCore) -> Tensor<T> {
    let normal = |std: f64, rng: &mut dyn RngCore| {
        let dist = Normal::new(0.0, std).expect("positive std");
        Tensor::from_fn(shape.to_vec(), |_| T::from_f64(dist.sample(rng)))
    };
    match (kind, role) {
        (LayerKind::BatchNorm { .. }, "gamma") => Tensor::full(shape.to_vec(), T::one()),
        (LayerKind::AttentionPool { d, .. }, "w" | "u") => normal((1.0 / *d as f64).sqrt(), rng),
        (_, "weight") => {
            // He initialization over the fan-in.
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            normal((2.0 / fan_in as f64).sqrt(), rng)
        }
        _ => Tensor::zeros(shape.to_vec()),
    }
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from the `Init` stream of `seed`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = Vec::new();
        let mut stats = Vec::new();
        let mut slots = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let mut rng = stream_rng(seed, Stream::Init, i as u64, 0);
            let first_param = params.len();
            for (role, shape) in param_shapes(&layer.kind) {
                params.push(Param {
                    name: format!("{}.{role}", layer.name),
                    value: init_tensor(&layer.kind, role, &shape, &mut rng),
                });
            }
            let stat = match layer.kind {
                LayerKind::BatchNorm { len, .. } => {
                    stats.push(BatchNormStats::new(len));
                    Some(stats.len() - 1)
                }
                _ => None,
            };
            slots.push(Slot { first_param, n_params: params.len() - first_param, stats: stat });
        }
        Ok(Self { spec, params, stats, slots })
    }

    /// Rebuilds a model from stored tensors, checking every shape.
    pub fn from_parts(spec: NetworkSpec, params: Vec<Param<T>>, stats: Vec<BatchNormStats<T>>) -> Result<Self> {
        let mut model = Self::init(spec, 0)?;
        if params.len() != model.params.len() || stats.len() != model.stats.len() {
            return Err(Error::Integrity(format!(
                "expected {} parameter tensors and {} batch-norm states, got {} and {}",
                model.params.len(),
                model.stats.len(),
                params.len(),
                stats.len()
            )));
        }
        for (slot, p) in model.params.iter_mut().zip(params) {
            if slot.name != p.name || slot.value.shape() != p.value.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    p.name,
                    p.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            *slot = p;
        }
        for (slot, s) in model.stats.iter_mut().zip(stats) {
            if slot.len() != s.len() {
                return Err(Error::Integrity("batch-norm statistics have the wrong length".into()));
            }
            *slot = s;
        }
        Ok(model)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn stats(&self) -> &[BatchNormStats<T>] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [BatchNormStats<T>] {
        &mut self.stats
    }

    /// Names of the batch-norm layers, in [`Model::stats`] order.
    pub fn stats_names(&self) -> Vec<&str> {
        self.spec
            .layers
            .iter()
            .zip(&self.slots)
            .filter(|(_, s)| s.stats.is_some())
            .map(|(l, _)| l.name.as_str())
            .collect()
    }

    pub fn n_trainable(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Runs the network on `input` (`[B x ..]` in the spec's input
    /// layout) and returns the pre-softmax scores. With `track_grads` the
    /// parameters are recorded as gradient leaves.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        input: Var,
        mode: Mode,
        rng: &mut dyn RngCore,
        track_grads: bool,
    ) -> Result<Forward> {
        let expect = self.spec.input_shape(tape.shape(input).get(2).copied().unwrap_or(0));
        let got = &tape.shape(input)[1..];
        let layout_ok = match self.spec.input {
            super::InputLayout::FreqTimeChannel => got.len() == 3 && got[0] == expect[0] && got[2] == 1,
            super::InputLayout::TimeFeature => got.len() == 2 && got[1] == self.spec.n_mels,
        };
        if !layout_ok {
            return Err(Error::Dimension(format!(
                "{} expects input {:?} per example, got {got:?}",
                self.spec.topology,
                self.spec.input_shape(0)
            )));
        }

        let params: Vec<Var> =
            self.params
                .iter()
                .map(|p| {
                    if track_grads {
                        tape.leaf(p.value.clone().requiring_grad())
                    } else {
                        tape.constant(p.value.clone())
                    }
                })
                .collect();

        let mut h = input;
        for (layer, slot) in self.spec.layers.iter().zip(&self.slots) {
            let p = &params[slot.first_param..slot.first_param + slot.n_params];
            h = match &layer.kind {
                LayerKind::Conv2d { .. } => layers::conv2d(tape, h, p[0], p[1]),
                LayerKind::Conv1d { offsets, .. } => layers::conv1d_ctx(tape, h, offsets, p[0], p[1]),
                LayerKind::MaxPool => layers::maxpool_freq(tape, h),
                LayerKind::Mfm => layers::mfm(tape, h),
                LayerKind::BatchNorm { axis, .. } => {
                    let axis = match axis {
                        NormAxis::Frequency => 1,
                        NormAxis::Feature => tape.shape(h).len() - 1,
                    };
                    let stats = &mut self.stats[slot.stats.expect("batch norm has stats")];
                    layers::batchnorm(tape, h, p[0], p[1], stats, axis, mode)
                }
                LayerKind::Dense { .. } => layers::dense(tape, h, p[0], p[1]),
                LayerKind::Dropout { rate } => layers::dropout(tape, h, *rate, mode, rng),
                LayerKind::Activation { function } => Ok(function.apply(tape, h)),
                LayerKind::AttentionPool { d, use_std } => {
                    let cfg = AttentionPoolConfig::new(*d, *use_std)?;
                    let ap = AttentionParams { w: p[0], b: p[1], u: p[2] };
                    layers::attention_pool(tape, h, &cfg, ap)
                }
                LayerKind::Flatten => {
                    let s = tape.shape(h).to_vec();
                    tape.reshape(h, &[s[0], s[1..].iter().product()])
                }
                LayerKind::Softmax => break,
            }
            .map_err(|e| e.context(&layer.name))?;
        }
        Ok(Forward { logits: h, params })
    }
}
