//! Self-attentive statistics pooling over the time axis.
//!
//! Each frame gets a score `e_t = u^T tanh(W m_t + b)`, where `m_t` is the
//! frame's channel vector (frequency-averaged for 2D feature maps). The
//! softmax of the scores weights a mean over time and, optionally, a
//! standard deviation. For 2D maps the single per-frame weight pools the
//! whole frequency-by-channel slice, so only the time axis is removed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

pub const STD_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPoolConfig {
    /// Channel width of the attention input.
    pub d: usize,
    pub use_std: bool,
    pub epsilon: f64,
}

impl AttentionPoolConfig {
    pub fn new(d: usize, use_std: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("attention width must be positive".into()));
        }
        Ok(Self { d, use_std, epsilon: STD_EPSILON })
    }

    /// `W [d x d]`, `b [d]`, `u [d]`.
    pub fn param_count(&self) -> usize {
        self.d * self.d + 2 * self.d
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub w: Var,
    pub b: Var,
    pub u: Var,
}

fn as_four_d<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<(Var, [usize; 4])> {
    let s = tape.shape(x).to_vec();
    match s.len() {
        4 => Ok((x, [s[0], s[1], s[2], s[3]])),
        3 => {
            let dims = [s[0], 1, s[1], s[2]];
            Ok((tape.reshape(x, &dims)?, dims))
        }
        _ => Err(Error::Dimension(format!("attention pooling expects [B x T x D] or [B x F x T x C], got {s:?}"))),
    }
}

/// Per-frame scores `[B x T]` for `x [B x T x D]` or `x [B x F x T x C]`.
pub fn frame_scores<T: Scalar>(tape: &mut Tape<T>, x: Var, p: AttentionParams) -> Result<Var> {
    let (x4, [b, _, t, c]) = as_four_d(tape, x)?;
    if t == 0 {
        return Err(Error::Input("attention pooling over zero frames".into()));
    }
    if tape.shape(p.w) != [c, c] || tape.shape(p.b) != [c] || tape.shape(p.u) != [c] {
        return Err(Error::Dimension(format!(
            "attention over {c} channels got W {:?}, b {:?}, u {:?}",
            tape.shape(p.w),
            tape.shape(p.b),
            tape.shape(p.u)
        )));
    }
    let m = tape.mean_axis(x4, 1)?;
    let rows = tape.reshape(m, &[b * t, c])?;
    let proj = tape.matmul(rows, p.w)?;
    let proj = tape.add_bias(proj, p.b)?;
    let hidden = tape.tanh(proj);
    let u = tape.reshape(p.u, &[c, 1])?;
    let e = tape.matmul(hidden, u)?;
    tape.reshape(e, &[b, t])
}

/// Attention pooling. Output is `[B x D]` (`[B x 2D]` with std) for 1D
/// input and `[B x F x C]` (`[B x F x 2C]`) for 2D input.
pub fn attention_pool<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    cfg: &AttentionPoolConfig,
    p: AttentionParams,
) -> Result<Var> {
    let one_d = tape.shape(x).len() == 3;
    let c = *tape.shape(x).last().unwrap();
    if c != cfg.d {
        return Err(Error::Dimension(format!("attention configured for {} channels, input has {c}", cfg.d)));
    }
    let scores = frame_scores(tape, x, p)?;
    let weights = tape.softmax(scores);
    let (x4, [b, _, _, _]) = as_four_d(tape, x)?;
    let mut pooled = weighted_mean(tape, x4, weights)?;
    if cfg.use_std {
        let std = weighted_std(tape, x4, weights, T::from_f64(cfg.epsilon))?;
        pooled = tape.concat_last(pooled, std)?;
    }
    if one_d {
        let width = *tape.shape(pooled).last().unwrap();
        pooled = tape.reshape(pooled, &[b, width])?;
    }
    Ok(pooled)
}

fn check_weights<T: Scalar>(tape: &Tape<T>, x: Var, w: Var) -> Result<[usize; 4]> {
    let s = tape.shape(x);
    if s.len() != 4 || tape.shape(w) != [s[0], s[2]] {
        return Err(Error::Dimension(format!("frame weights {:?} do not match input {s:?}", tape.shape(w))));
    }
    Ok([s[0], s[1], s[2], s[3]])
}

/// `out[b,f,c] = sum_t w[b,t] x[b,f,t,c]` for `x [B x F x T x C]`.
pub fn weighted_mean<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var) -> Result<Var> {
    let [nb, nf, nt, nc] = check_weights(tape, x, w)?;
    let (xs, ws) = (tape.data(x), tape.data(w));
    let mut out = vec![T::zero(); nb * nf * nc];
    for b in 0..nb {
        for f in 0..nf {
            let dst = &mut out[(b * nf + f) * nc..(b * nf + f + 1) * nc];
            for t in 0..nt {
                let wt = ws[b * nt + t];
                let src = &xs[((b * nf + f) * nt + t) * nc..((b * nf + f) * nt + t + 1) * nc];
                dst.iter_mut().zip(src).for_each(|(d, &v)| *d += wt * v);
            }
        }
    }
    let out = Tensor::new([nb, nf, nc], out)?;
    Ok(tape.record(out, &[x, w], move |ctx| {
        let (xs, ws, g) = (ctx.input(0).data(), ctx.input(1).data(), ctx.grad);
        let mut dx = vec![T::zero(); xs.len()];
        let mut dw = vec![T::zero(); ws.len()];
        for b in 0..nb {
            for f in 0..nf {
                let gr = &g[(b * nf + f) * nc..(b * nf + f + 1) * nc];
                for t in 0..nt {
                    let base = ((b * nf + f) * nt + t) * nc;
                    let wt = ws[b * nt + t];
                    let mut acc = T::zero();
                    for c in 0..nc {
                        dx[base + c] = wt * gr[c];
                        acc += gr[c] * xs[base + c];
                    }
                    dw[b * nt + t] += acc;
                }
            }
        }
        vec![Some(dx), Some(dw)]
    }))
}

/// `sqrt(sum_t w (x - mu)^2 + eps)` with `mu` the weighted mean, for
/// `x [B x F x T x C]`. Exact derivatives are taken for weights that need
/// not sum to one.
pub fn weighted_std<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, eps: T) -> Result<Var> {
    let [nb, nf, nt, nc] = check_weights(tape, x, w)?;
    let (xs, ws) = (tape.data(x), tape.data(w));
    let cells = nb * nf * nc;
    let mut mu = vec![T::zero(); cells];
    let mut var = vec![T::zero(); cells];
    // sum_t w (x - mu), zero when the weights sum to one
    let mut resid = vec![T::zero(); cells];
    for b in 0..nb {
        for f in 0..nf {
            let cell = (b * nf + f) * nc;
            for t in 0..nt {
                let wt = ws[b * nt + t];
                let base = ((b * nf + f) * nt + t) * nc;
                for c in 0..nc {
                    mu[cell + c] += wt * xs[base + c];
                }
            }
            for t in 0..nt {
                let wt = ws[b * nt + t];
                let base = ((b * nf + f) * nt + t) * nc;
                for c in 0..nc {
                    let d = xs[base + c] - mu[cell + c];
                    var[cell + c] += wt * d * d;
                    resid[cell + c] += wt * d;
                }
            }
        }
    }
    let sigma: Vec<T> = var.iter().map(|&v| (v.max(T::zero()) + eps).sqrt()).collect();
    let out = Tensor::new([nb, nf, nc], sigma.clone())?;
    Ok(tape.record(out, &[x, w], move |ctx| {
        let (xs, ws, g) = (ctx.input(0).data(), ctx.input(1).data(), ctx.grad);
        let mut dx = vec![T::zero(); xs.len()];
        let mut dw = vec![T::zero(); ws.len()];
        let two = T::from_f64(2.0);
        for b in 0..nb {
            for f in 0..nf {
                let cell = (b * nf + f) * nc;
                for t in 0..nt {
                    let wt = ws[b * nt + t];
                    let base = ((b * nf + f) * nt + t) * nc;
                    let mut acc = T::zero();
                    for c in 0..nc {
                        let k = g[cell + c] / (two * sigma[cell + c]);
                        let d = xs[base + c] - mu[cell + c];
                        dx[base + c] = k * two * wt * (d - resid[cell + c]);
                        acc += k * (d * d - two * xs[base + c] * resid[cell + c]);
                    }
                    dw[b * nt + t] += acc;
                }
            }
        }
        vec![Some(dx), Some(dw)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tape: &mut Tape<f64>, w: Tensor<f64>, b: Tensor<f64>, u: Tensor<f64>) -> AttentionParams {
        AttentionParams { w: tape.leaf(w), b: tape.leaf(b), u: tape.leaf(u) }
    }

    #[test]
    fn zero_projection_gives_plain_mean_and_population_std() {
        let (t, d) = (5, 3);
        let x = Tensor::from_fn([1, t, d], |i| ((i * 31 % 17) as f64) * 0.7 - 3.0);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let p = params(&mut tape, Tensor::zeros([d, d]), Tensor::zeros([d]), Tensor::full([d], 0.3));
        let cfg = AttentionPoolConfig::new(d, true).unwrap();
        let y = attention_pool(&mut tape, xv, &cfg, p).unwrap();
        assert_eq!(tape.shape(y), &[1, 2 * d]);
        for c in 0..d {
            let col: Vec<f64> = (0..t).map(|ti| x.at(&[0, ti, c])).collect();
            let mean = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            assert!((tape.data(y)[c] - mean).abs() < 1e-12);
            assert!((tape.data(y)[d + c] - (var + STD_EPSILON).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_frames_with_log3_score_gap() {
        // d = 1: e_1 = u tanh(w * 1) = ln 3, e_2 = u tanh(0) = 0.
        let u = 3f64.ln() / 1f64.tanh();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new([1, 2, 1], vec![1.0, 0.0]).unwrap());
        let p = params(&mut tape, Tensor::full([1, 1], 1.0), Tensor::zeros([1]), Tensor::full([1], u));
        let e = frame_scores(&mut tape, x, p).unwrap();
        let w = tape.softmax(e);
        assert!((tape.data(w)[0] - 0.75).abs() < 1e-12);
        assert!((tape.data(w)[1] - 0.25).abs() < 1e-12);
        let cfg = AttentionPoolConfig::new(1, false).unwrap();
        let y = attention_pool(&mut tape, x, &cfg, p).unwrap();
        assert!((tape.data(y)[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn two_d_input_pools_time_only() {
        let (f, t, c) = (4, 6, 3);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn([2, f, t, c], |i| i as f64 * 0.01));
        let p = params(&mut tape, Tensor::zeros([c, c]), Tensor::zeros([c]), Tensor::zeros([c]));
        let cfg = AttentionPoolConfig::new(c, false).unwrap();
        let y = attention_pool(&mut tape, x, &cfg, p).unwrap();
        assert_eq!(tape.shape(y), &[2, f, c]);
    }

    #[test]
    fn parameter_count_is_d_squared_plus_two_d() {
        assert_eq!(AttentionPoolConfig::new(768, true).unwrap().param_count(), 591_360);
        assert_eq!(AttentionPoolConfig::new(256, false).unwrap().param_count(), 66_048);
        assert_eq!(AttentionPoolConfig::new(96, false).unwrap().param_count(), 9_408);
        assert!(AttentionPoolConfig::new(0, false).is_err());
    }
}
