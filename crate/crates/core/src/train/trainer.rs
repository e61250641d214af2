//! Minibatch training with early stopping, and full-segment scoring.

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::batch::{assemble, sample_crop, BandNorm, Example};
use super::checkpoint::Checkpoint;
use super::optim::{Adam, EarlyStopping, TrainConfig};
use crate::dsp::LogMelFeatures;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::tensor::Tape;
use crate::topology::{Model, NetworkSpec};

/// Segments scored per forward pass outside training.
pub const EVAL_BATCH: usize = 8;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

impl EpochLog {
    /// `epoch, lr, train loss, val loss, val accuracy`, tab-separated.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.4e}\t{:.6}\t{:.6}\t{:.4}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.val_accuracy
        )
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

/// Mean cross-entropy of pre-softmax `scores` against `labels`.
pub fn cross_entropy(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &y)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[y]
        })
        .sum();
    total / scores.len() as f64
}

pub fn argmax(s: &[f64]) -> usize {
    s.iter().enumerate().fold(0, |best, (i, &v)| if v > s[best] { i } else { best })
}

/// Pre-softmax scores for already normalized features, in inference mode.
pub fn score_normalized(model: &mut Model<f32>, feats: &[&LogMelFeatures]) -> Result<Vec<Vec<f64>>> {
    let mut rng = StreamRng::seed_from_u64(0);
    let mut out = Vec::with_capacity(feats.len());
    for chunk in feats.chunks(EVAL_BATCH) {
        let x = assemble::<f32>(model.spec(), chunk)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let fwd = model.forward(&mut tape, xv, Mode::Infer, &mut rng, false)?;
        let k = model.spec().n_classes;
        for row in tape.data(fwd.logits).chunks(k) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("network produced a non-finite score".into()));
            }
            out.push(row.iter().map(|&v| v as f64).collect());
        }
    }
    Ok(out)
}

/// Scores raw features with a checkpoint (normalization applied here).
pub fn predict(ckpt: &Checkpoint, feats: &[&LogMelFeatures]) -> Result<Vec<Vec<f64>>> {
    let normalized = feats.iter().map(|f| ckpt.norm.apply(f)).collect::<Result<Vec<_>>>()?;
    let mut model = ckpt.model.clone();
    score_normalized(&mut model, &normalized.iter().collect::<Vec<_>>())
}

/// The ten pre-softmax scores of one full-length segment.
pub fn predict_segment(ckpt: &Checkpoint, features: &LogMelFeatures) -> Result<Vec<f64>> {
    Ok(predict(ckpt, &[features])?.remove(0))
}

fn check_labels(set: &[Example], n_classes: usize, what: &str) -> Result<()> {
    match set.iter().find(|e| e.label >= n_classes) {
        Some(e) => Err(Error::Input(format!("{what} segment {} has label {} of {n_classes}", e.id, e.label))),
        None => Ok(()),
    }
}

/// Trains `spec` from scratch and returns the best-validation checkpoint.
pub fn train(
    spec: NetworkSpec,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Input("empty validation set".into()));
    }
    check_labels(train_set, spec.n_classes, "training")?;
    check_labels(val_set, spec.n_classes, "validation")?;

    let norm = BandNorm::fit(train_set.iter().map(|e| &e.features))?;
    let train_feats = train_set.iter().map(|e| norm.apply(&e.features)).collect::<Result<Vec<_>>>()?;
    let val_feats = val_set.iter().map(|e| norm.apply(&e.features)).collect::<Result<Vec<_>>>()?;
    let val_refs: Vec<&LogMelFeatures> = val_feats.iter().collect();
    let val_labels: Vec<usize> = val_set.iter().map(|e| e.label).collect();

    let mut model = Model::<f32>::init(spec, cfg.seed)?;
    let mut adam = Adam::new();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<(Model<f32>, usize)> = None;
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.lr(epoch)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64, 0));

        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let crops = idx
                .iter()
                .map(|&i| {
                    let mut rng = stream_rng(cfg.seed, Stream::Crop, epoch as u64, i as u64);
                    sample_crop(&train_feats[i], cfg.crop_len, &mut rng).map_err(|e| e.context(&train_set[i].id))
                })
                .collect::<Result<Vec<_>>>()?;
            let targets: Vec<usize> = idx.iter().map(|&i| train_set[i].label).collect();
            let x = assemble::<f32>(model.spec(), &crops.iter().collect::<Vec<_>>())?;

            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout, epoch as u64, b as u64);
            let fwd = model.forward(&mut tape, xv, Mode::Train, &mut dropout_rng, true)?;
            let loss = tape.softmax_cross_entropy(fwd.logits, &targets)?;
            tape.backward(loss)?;
            loss_sum += tape.data(loss)[0] as f64 * idx.len() as f64;
            let grads: Vec<&[f32]> =
                fwd.params.iter().map(|&p| tape.grad(p).expect("parameter leaves carry gradients")).collect();
            adam.step(model.params_mut(), &grads, lr)?;
        }

        let scores = score_normalized(&mut model, &val_refs)?;
        let val_loss = cross_entropy(&scores, &val_labels);
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        let correct = scores.iter().zip(&val_labels).filter(|(s, &y)| argmax(s) == y).count();
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy: correct as f64 / val_labels.len() as f64,
        };
        on_epoch(&log);
        history.push(log);

        let decision = stopper.update(epoch, val_loss);
        if decision.improved {
            best = Some((model.clone(), epoch));
        }
        if decision.stop {
            break;
        }
    }

    let (model, epoch) = best.expect("the first epoch always improves on an infinite loss");
    let checkpoint = Checkpoint { model, norm, config: cfg.clone(), epoch, best_val_loss: Some(stopper.best()) };
    Ok(TrainOutcome { checkpoint, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_scores() {
        let s = vec![vec![0.0; 10]; 3];
        assert!((cross_entropy(&s, &[0, 4, 9]) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
