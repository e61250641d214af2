//! Batch normalization along one axis.

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Running statistics, updated only in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNormStats<T> {
    pub fn new(len: usize) -> Self {
        Self { running_mean: vec![T::zero(); len], running_var: vec![T::one(); len] }
    }

    pub fn len(&self) -> usize {
        self.running_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.running_mean.is_empty()
    }
}

/// Normalizes `x` per index of `axis`, pooling statistics over every other
/// axis (batch included).
///
/// Training mode uses batch statistics (biased variance) and folds them
/// into `stats` with momentum 0.9; inference mode uses `stats` as is.
pub fn batchnorm<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    stats: &mut BatchNormStats<T>,
    axis: usize,
    mode: Mode,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if axis >= shape.len() {
        return Err(Error::Dimension(format!("batchnorm axis {axis} outside {shape:?}")));
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    if tape.shape(gamma) != [len] || tape.shape(beta) != [len] || stats.len() != len {
        return Err(Error::Dimension(format!(
            "batchnorm over {len} bins got gamma {:?}, beta {:?}, stats {}",
            tape.shape(gamma),
            tape.shape(beta),
            stats.len()
        )));
    }
    let count = outer * inner;
    if count == 0 {
        return Err(Error::Input("batchnorm on an empty batch".into()));
    }
    let eps = T::from_f64(BN_EPSILON);
    let src = tape.data(x);
    let index = move |o: usize, l: usize, i: usize| (o * len + l) * inner + i;

    let (mean, var) = match mode {
        Mode::Train => {
            let n = T::from_f64(count as f64);
            let mut mean = vec![T::zero(); len];
            let mut var = vec![T::zero(); len];
            for o in 0..outer {
                for l in 0..len {
                    let row = &src[index(o, l, 0)..index(o, l, 0) + inner];
                    mean[l] += row.iter().copied().sum::<T>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            for o in 0..outer {
                for l in 0..len {
                    let row = &src[index(o, l, 0)..index(o, l, 0) + inner];
                    var[l] += row.iter().map(|&v| (v - mean[l]) * (v - mean[l])).sum::<T>();
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            let m = T::from_f64(BN_MOMENTUM);
            for l in 0..len {
                stats.running_mean[l] = m * stats.running_mean[l] + (T::one() - m) * mean[l];
                stats.running_var[l] = m * stats.running_var[l] + (T::one() - m) * var[l];
            }
            (mean, var)
        }
        Mode::Infer => (stats.running_mean.clone(), stats.running_var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (g, b) = (tape.data(gamma), tape.data(beta));
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for l in 0..len {
            let base = index(o, l, 0);
            for i in 0..inner {
                out[base + i] = g[l] * (src[base + i] - mean[l]) * inv_std[l] + b[l];
            }
        }
    }
    let out = Tensor::new(shape, out)?;
    let training = mode == Mode::Train;
    Ok(tape.record(out, &[x, gamma, beta], move |ctx| {
        let xs = ctx.input(0).data();
        let gam = ctx.input(1).data();
        let dy = ctx.grad;
        // per-bin sums of dy and dy * xhat
        let mut sum_dy = vec![T::zero(); len];
        let mut sum_dy_xhat = vec![T::zero(); len];
        for o in 0..outer {
            for l in 0..len {
                let base = index(o, l, 0);
                for i in 0..inner {
                    let xhat = (xs[base + i] - mean[l]) * inv_std[l];
                    sum_dy[l] += dy[base + i];
                    sum_dy_xhat[l] += dy[base + i] * xhat;
                }
            }
        }
        let dx = ctx.needs(0).then(|| {
            let mut dx = vec![T::zero(); xs.len()];
            let n = T::from_f64(count as f64);
            for o in 0..outer {
                for l in 0..len {
                    let base = index(o, l, 0);
                    for i in 0..inner {
                        dx[base + i] = if training {
                            let xhat = (xs[base + i] - mean[l]) * inv_std[l];
                            gam[l] * inv_std[l] / n * (n * dy[base + i] - sum_dy[l] - xhat * sum_dy_xhat[l])
                        } else {
                            gam[l] * inv_std[l] * dy[base + i]
                        };
                    }
                }
            }
            dx
        });
        vec![dx, Some(sum_dy_xhat), Some(sum_dy)]
    }))
}
