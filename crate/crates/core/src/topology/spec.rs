use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{Activation, AttentionPoolConfig};

/// Axis a batch-norm layer normalizes per index of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormAxis {
    /// Frequency rows of a `F x T x C` map.
    Frequency,
    /// Last axis of a frame sequence or vector.
    Feature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d { kernel: [usize; 2], cin: usize, cout: usize },
    Conv1d { offsets: Vec<isize>, cin: usize, cout: usize },
    MaxPool,
    Mfm,
    BatchNorm { axis: NormAxis, len: usize },
    Dense { din: usize, dout: usize },
    Dropout { rate: f64 },
    Activation { function: Activation },
    AttentionPool { d: usize, use_std: bool },
    Flatten,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }

    /// Closed-form parameter count. Batch norm counts its running
    /// statistics alongside gamma and beta.
    pub fn param_count(&self) -> usize {
        match &self.kind {
            LayerKind::Conv2d { kernel, cin, cout } => kernel[0] * kernel[1] * cin * cout + cout,
            LayerKind::Conv1d { offsets, cin, cout } => offsets.len() * cin * cout + cout,
            LayerKind::Dense { din, dout } => din * dout + dout,
            LayerKind::BatchNorm { len, .. } => 4 * len,
            LayerKind::AttentionPool { d, .. } => d * d + 2 * d,
            _ => 0,
        }
    }

    /// Per-example output shape, without running data.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |why: &str| Error::Dimension(format!("{}: {why} (input {input:?})", self.name));
        match &self.kind {
            LayerKind::Conv2d { kernel, cin, cout } => match input {
                [f, t, c] if c == cin => {
                    if kernel[0] % 2 == 0 || kernel[1] % 2 == 0 {
                        return Err(bad("same padding needs odd kernel sides"));
                    }
                    Ok(vec![*f, *t, *cout])
                }
                _ => Err(bad(&format!("expects F x T x {cin}"))),
            },
            LayerKind::Conv1d { offsets, cin, cout } => match input {
                [t, c] if c == cin && !offsets.is_empty() => Ok(vec![*t, *cout]),
                _ => Err(bad(&format!("expects T x {cin} and a non-empty offset list"))),
            },
            LayerKind::MaxPool => match input {
                [f, t, c] if f % 2 == 0 => Ok(vec![f / 2, *t, *c]),
                _ => Err(bad("expects F x T x C with even F")),
            },
            LayerKind::Mfm => match input.last() {
                Some(c) if c % 2 == 0 => {
                    let mut s = input.to_vec();
                    *s.last_mut().unwrap() = c / 2;
                    Ok(s)
                }
                _ => Err(bad("expects an even channel count")),
            },
            LayerKind::BatchNorm { axis, len } => {
                let extent = match (axis, input) {
                    (NormAxis::Frequency, [f, _, _]) => Some(*f),
                    (NormAxis::Feature, s) => s.last().copied(),
                    _ => None,
                };
                match extent {
                    Some(e) if e == *len => Ok(input.to_vec()),
                    _ => Err(bad(&format!("normalizes {len} bins along {axis:?}"))),
                }
            }
            LayerKind::Dense { din, dout } => match input {
                [d] if d == din => Ok(vec![*dout]),
                _ => Err(bad(&format!("expects a {din}-vector"))),
            },
            LayerKind::Dropout { .. } | LayerKind::Activation { .. } | LayerKind::Softmax => Ok(input.to_vec()),
            LayerKind::AttentionPool { d, use_std } => {
                let k = if *use_std { 2 } else { 1 };
                match input {
                    [f, _, c] if c == d => Ok(vec![*f, k * d]),
                    [_, c] if c == d => Ok(vec![k * d]),
                    _ => Err(bad(&format!("expects {d} channels"))),
                }
            }
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub fn attention_config(&self) -> Option<AttentionPoolConfig> {
        match self.kind {
            LayerKind::AttentionPool { d, use_std } => AttentionPoolConfig::new(d, use_std).ok(),
            _ => None,
        }
    }
}

/// The three network families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Vgg,
    Lcnn,
    #[serde(rename = "xvec")]
    XVector,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::Vgg, Topology::Lcnn, Topology::XVector];

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Vgg => "vgg",
            Topology::Lcnn => "lcnn",
            Topology::XVector => "xvec",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vgg" => Ok(Topology::Vgg),
            "lcnn" => Ok(Topology::Lcnn),
            "xvec" | "xvector" | "x-vector" => Ok(Topology::XVector),
            other => Err(Error::Config(format!("unknown topology {other:?} (vgg, lcnn, xvec)"))),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How log-mel features are presented to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLayout {
    /// `n_mels x T x 1` image.
    FreqTimeChannel,
    /// `T x n_mels` frame sequence.
    TimeFeature,
}

/// Declarative network description from which both the parameter counts
/// and the executable graph are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub width_divisor: usize,
    pub input: InputLayout,
    pub n_mels: usize,
    pub n_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn input_shape(&self, n_frames: usize) -> Vec<usize> {
        match self.input {
            InputLayout::FreqTimeChannel => vec![self.n_mels, n_frames, 1],
            InputLayout::TimeFeature => vec![n_frames, self.n_mels],
        }
    }

    /// Output shape after every layer for an input of `n_frames` frames.
    pub fn shapes(&self, n_frames: usize) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape(n_frames);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.out_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn param_counts(&self) -> Vec<(&str, usize)> {
        self.layers.iter().map(|l| (l.name.as_str(), l.param_count())).collect()
    }

    pub fn total_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Checks shape chaining and that the network ends in an
    /// `n_classes`-way dense layer followed by softmax.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes(128)?;
        let n = self.layers.len();
        let tail_ok = n >= 2
            && matches!(self.layers[n - 1].kind, LayerKind::Softmax)
            && matches!(self.layers[n - 2].kind, LayerKind::Dense { dout, .. } if dout == self.n_classes);
        if !tail_ok || shapes.last() != Some(&vec![self.n_classes]) {
            return Err(Error::Config(format!(
                "{} does not end in a {}-way dense softmax layer",
                self.topology, self.n_classes
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
