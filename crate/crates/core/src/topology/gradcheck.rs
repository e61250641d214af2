//! Finite-difference check of a whole network's parameter gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use super::model::Model;
use super::spec::NetworkSpec;
use crate::error::Result;
use crate::layers::Mode;
use crate::rng::{mix, stream_rng, Stream, StreamRng};
use crate::tensor::{Tape, Tensor};

/// Agreement of one parameter tensor's gradient with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coordinates: usize,
    /// Largest `|analytic - numeric|` over the probed coordinates.
    pub max_abs_error: f64,
    /// Largest analytic gradient magnitude anywhere in the tensor.
    pub scale: f64,
}

impl TensorCheck {
    /// Normwise relative error: `max_abs_error / scale`.
    ///
    /// Near-zero coordinates (dead units, biases cancelled by a following
    /// normalization) are judged against the tensor's gradient scale
    /// rather than their own, since their central differences are
    /// dominated by rounding noise of order `eps / h`.
    pub fn rel_error(&self) -> f64 {
        self.max_abs_error / self.scale.max(1e-12)
    }
}

/// Compares back-propagated parameter gradients of a freshly initialized
/// `spec` against central differences with step `h`.
///
/// The objective is a random projection of the logits of `batch` random
/// inputs of `n_frames` frames, evaluated in training mode with a fixed
/// dropout mask. Up to `per_tensor` coordinates of each tensor are probed.
pub fn check_model_gradients(
    spec: &NetworkSpec,
    seed: u64,
    batch: usize,
    n_frames: usize,
    per_tensor: usize,
    h: f64,
) -> Result<Vec<TensorCheck>> {
    let mut model = Model::<f64>::init(spec.clone(), seed)?;
    let mut rng = StreamRng::seed_from_u64(mix(seed, Stream::Init, u64::MAX, 0));
    let shape: Vec<usize> = std::iter::once(batch).chain(spec.input_shape(n_frames)).collect();
    let input = Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let projection = Tensor::from_fn([batch, spec.n_classes], |_| rng.random_range(-1.0..1.0));

    let objective = |model: &mut Model<f64>, track: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let mut dropout = stream_rng(seed, Stream::Dropout, 0, 0);
        let fwd = model.forward(&mut tape, x, Mode::Train, &mut dropout, track)?;
        let r = tape.constant(projection.clone());
        let prod = tape.mul(fwd.logits, r)?;
        let loss = tape.sum(prod);
        let value = tape.data(loss)[0];
        if !track {
            return Ok((value, Vec::new()));
        }
        tape.backward(loss)?;
        let grads = fwd.params.iter().map(|&p| tape.grad(p).expect("leaf").to_vec()).collect();
        Ok((value, grads))
    };

    let (_, analytic) = objective(&mut model, true)?;
    let mut out = Vec::with_capacity(analytic.len());
    for (i, grad) in analytic.iter().enumerate() {
        let n = grad.len();
        let coords: Vec<usize> = sample(&mut rng, n, per_tensor.min(n)).into_vec();
        let mut shifted = |j: usize, delta: f64| -> Result<f64> {
            let original = model.params()[i].value.data()[j];
            model.params_mut()[i].value.data_mut()[j] = original + delta;
            let value = objective(&mut model, false);
            model.params_mut()[i].value.data_mut()[j] = original;
            Ok(value?.0)
        };
        let mut max_abs_error = 0.0f64;
        for &j in &coords {
            let numeric = (shifted(j, h)? - shifted(j, -h)?) / (2.0 * h);
            let diff = (grad[j] - numeric).abs();
            if diff.is_nan() {
                max_abs_error = f64::NAN;
                break;
            }
            max_abs_error = max_abs_error.max(diff);
        }
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        out.push(TensorCheck { name: model.params()[i].name.clone(), coordinates: coords.len(), max_abs_error, scale });
    }
    Ok(out)
}
