//! Checkpoint files: `"ASCM"`, version byte, `u32` header length, JSON
//! header, then little-endian `f32` tensors in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batch::BandNorm;
use super::optim::TrainConfig;
use crate::error::{read_file, write_file, Error, Result};
use crate::layers::BatchNormStats;
use crate::tensor::Tensor;
use crate::topology::{Model, NetworkSpec, Param};

const MAGIC: &[u8; 4] = b"ASCM";
const VERSION: u8 = 1;

/// A trained network with everything needed to score new segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub norm: BandNorm,
    pub config: TrainConfig,
    pub epoch: usize,
    pub best_val_loss: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: u64,
    epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec_hash: String,
    spec: NetworkSpec,
    config: TrainConfig,
    epoch: usize,
    best_val_loss: Option<f64>,
    rng: RngState,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn spec(&self) -> &NetworkSpec {
        self.model.spec()
    }

    fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out: Vec<(String, Vec<usize>, &[f32])> =
            self.model.params().iter().map(|p| (p.name.clone(), p.value.shape().to_vec(), p.value.data())).collect();
        for (name, s) in self.model.stats_names().into_iter().zip(self.model.stats()) {
            out.push((format!("{name}.running_mean"), vec![s.len()], &s.running_mean[..]));
            out.push((format!("{name}.running_var"), vec![s.len()], &s.running_var[..]));
        }
        out.push(("norm.mean".into(), vec![self.norm.mean.len()], &self.norm.mean[..]));
        out.push(("norm.std".into(), vec![self.norm.std.len()], &self.norm.std[..]));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let mut offset = 0;
        let entries = tensors
            .iter()
            .map(|(name, shape, data)| {
                let e = TensorEntry { name: name.clone(), shape: shape.clone(), offset };
                offset += 4 * data.len();
                e
            })
            .collect();
        let header = Header {
            spec_hash: self.spec().hash(),
            spec: self.spec().clone(),
            config: self.config.clone(),
            epoch: self.epoch,
            best_val_loss: self.best_val_loss,
            rng: RngState { seed: self.config.seed, epoch: self.epoch },
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(9 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::format(bytes.len(), "checkpoint header is truncated"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(0, "missing ASCM magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {}", bytes[4])));
        }
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body = 9 + len;
        let json = bytes.get(9..body).ok_or_else(|| Error::format(bytes.len(), "checkpoint header is truncated"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::format(9, format!("bad checkpoint header: {e}")))?;
        if header.spec.hash() != header.spec_hash {
            return Err(Error::Integrity("checkpoint spec does not match its recorded hash".into()));
        }
        let payload = &bytes[body..];
        let mut used = 0;
        let mut take = |entry: &TensorEntry| -> Result<Vec<f32>> {
            let n: usize = entry.shape.iter().product();
            let slice = entry
                .offset
                .checked_add(4 * n)
                .and_then(|end| payload.get(entry.offset..end))
                .ok_or_else(|| Error::format(body + entry.offset, format!("tensor {} is truncated", entry.name)))?;
            used = used.max(entry.offset + 4 * n);
            Ok(slice.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        };

        let template = Model::<f32>::init(header.spec.clone(), 0)?;
        let n_params = template.params().len();
        let n_stats = template.stats().len();
        if header.tensors.len() != n_params + 2 * n_stats + 2 {
            return Err(Error::Integrity(format!(
                "checkpoint holds {} tensors, the network needs {}",
                header.tensors.len(),
                n_params + 2 * n_stats + 2
            )));
        }
        let mut params = Vec::with_capacity(n_params);
        for e in &header.tensors[..n_params] {
            params.push(Param { name: e.name.clone(), value: Tensor::new(e.shape.clone(), take(e)?)? });
        }
        let mut stats = Vec::with_capacity(n_stats);
        for pair in header.tensors[n_params..n_params + 2 * n_stats].chunks(2) {
            stats.push(BatchNormStats { running_mean: take(&pair[0])?, running_var: take(&pair[1])? });
        }
        let norm_entries = &header.tensors[n_params + 2 * n_stats..];
        let norm = BandNorm { mean: take(&norm_entries[0])?, std: take(&norm_entries[1])? };
        if used != payload.len() {
            return Err(Error::format(body + used, "trailing bytes after the last tensor"));
        }
        let model = Model::from_parts(header.spec, params, stats)?;
        Ok(Self { model, norm, config: header.config, epoch: header.epoch, best_val_loss: header.best_val_loss })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?).map_err(|e| e.context(path.display()))
    }

    /// Fails unless the checkpoint was trained for exactly `spec`.
    pub fn ensure_spec(&self, spec: &NetworkSpec) -> Result<()> {
        if self.spec().hash() != spec.hash() {
            return Err(Error::Integrity(format!(
                "checkpoint holds a {} network (hash {}), requested {} (hash {})",
                self.spec().topology,
                &self.spec().hash()[..12],
                spec.topology,
                &spec.hash()[..12]
            )));
        }
        Ok(())
    }
}
