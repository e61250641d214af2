//! Random crops, per-band standardization and minibatch assembly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::LogMelFeatures;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::topology::{InputLayout, NetworkSpec};

/// A labelled feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: LogMelFeatures,
    pub label: usize,
}

/// Uniform start in `0..=n_frames - len`.
pub fn crop_start<R: Rng + ?Sized>(n_frames: usize, len: usize, rng: &mut R) -> Result<usize> {
    if n_frames < len {
        return Err(Error::Input(format!("{n_frames} frames cannot supply a {len}-frame crop")));
    }
    Ok(rng.random_range(0..=n_frames - len))
}

pub fn sample_crop<R: Rng + ?Sized>(f: &LogMelFeatures, len: usize, rng: &mut R) -> Result<LogMelFeatures> {
    let start = crop_start(f.n_frames, len, rng)?;
    f.window(start, len)
}

const STD_FLOOR: f64 = 1e-5;

/// Per-band mean and standard deviation of the training features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl BandNorm {
    pub fn identity(n_mels: usize) -> Self {
        Self { mean: vec![0.0; n_mels], std: vec![1.0; n_mels] }
    }

    pub fn fit<'a>(features: impl IntoIterator<Item = &'a LogMelFeatures>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for f in features {
            if sum.is_empty() {
                sum = vec![0.0; f.n_mels];
                sq = vec![0.0; f.n_mels];
            } else if f.n_mels != sum.len() {
                return Err(Error::Dimension(format!("{} bands after {}", f.n_mels, sum.len())));
            }
            for b in 0..f.n_mels {
                for &v in &f.values[b * f.n_frames..(b + 1) * f.n_frames] {
                    sum[b] += v as f64;
                    sq[b] += (v as f64) * (v as f64);
                }
            }
            count += f.n_frames;
        }
        if count == 0 {
            return Err(Error::Input("no training features to normalize".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| ((q / n - m * m).max(0.0).sqrt().max(STD_FLOOR)) as f32).collect();
        Ok(Self { mean: mean.iter().map(|&m| m as f32).collect(), std })
    }

    pub fn apply(&self, f: &LogMelFeatures) -> Result<LogMelFeatures> {
        if f.n_mels != self.mean.len() {
            return Err(Error::Dimension(format!("normalizer has {} bands, features {}", self.mean.len(), f.n_mels)));
        }
        let mut out = f.clone();
        for b in 0..f.n_mels {
            let (m, s) = (self.mean[b], self.std[b]);
            out.values[b * f.n_frames..(b + 1) * f.n_frames].iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

/// Stacks equally long feature matrices into a network input batch.
pub fn assemble<T: Scalar>(spec: &NetworkSpec, items: &[&LogMelFeatures]) -> Result<Tensor<T>> {
    let first = items.first().ok_or_else(|| Error::Input("empty batch".into()))?;
    let (f, t) = (first.n_mels, first.n_frames);
    if f != spec.n_mels {
        return Err(Error::Dimension(format!("{} expects {} mel bands, got {f}", spec.topology, spec.n_mels)));
    }
    let mut data = Vec::with_capacity(items.len() * f * t);
    for it in items {
        if (it.n_mels, it.n_frames) != (f, t) {
            return Err(Error::Dimension(format!(
                "batch mixes {f} x {t} and {} x {} features",
                it.n_mels, it.n_frames
            )));
        }
        match spec.input {
            InputLayout::FreqTimeChannel => data.extend(it.values.iter().map(|&v| T::from_f64(v as f64))),
            InputLayout::TimeFeature => {
                for frame in 0..t {
                    data.extend((0..f).map(|b| T::from_f64(it.values[b * t + frame] as f64)));
                }
            }
        }
    }
    let shape: Vec<usize> = std::iter::once(items.len()).chain(spec.input_shape(t)).collect();
    Tensor::new(shape, data)
}
