//! Frequency max-pooling and Max-Feature-Map. Ties go to the first index.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Max over non-overlapping pairs of frequency rows:
/// `[B x F x T x C] -> [B x F/2 x T x C]`.
pub fn maxpool_freq<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 4 {
        return Err(Error::Dimension(format!("maxpool expects [B x F x T x C], got {s:?}")));
    }
    let (b, f, plane) = (s[0], s[1], s[2] * s[3]);
    if f % 2 != 0 {
        return Err(Error::Dimension(format!("maxpool needs an even frequency axis, got {f}")));
    }
    let half = f / 2;
    let src = tape.data(x);
    let mut out = Vec::with_capacity(b * half * plane);
    // true where the second row of the pair won
    let mut second = Vec::with_capacity(b * half * plane);
    for bi in 0..b {
        for fo in 0..half {
            let r0 = ((bi * f) + 2 * fo) * plane;
            let (top, bottom) = (&src[r0..r0 + plane], &src[r0 + plane..r0 + 2 * plane]);
            for (&u, &v) in top.iter().zip(bottom) {
                let pick = v > u;
                second.push(pick);
                out.push(if pick { v } else { u });
            }
        }
    }
    let out = Tensor::new([b, half, s[2], s[3]], out)?;
    Ok(tape.record(out, &[x], move |ctx| {
        let mut dx = vec![T::zero(); ctx.input(0).numel()];
        for (o, (&g, &pick)) in ctx.grad.iter().zip(&second).enumerate() {
            let (row, col) = (o / plane, o % plane);
            let (bi, fo) = (row / half, row % half);
            let src_row = bi * f + 2 * fo + usize::from(pick);
            dx[src_row * plane + col] = g;
        }
        vec![Some(dx)]
    }))
}

/// Max-Feature-Map on the last axis, pairing channel `i` with `i + C/2`:
/// `[.. x C] -> [.. x C/2]`.
pub fn mfm<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let c = *s.last().unwrap();
    if !c.is_multiple_of(2) {
        return Err(Error::Dimension(format!("MFM needs an even channel count, got {c}")));
    }
    let half = c / 2;
    let src = tape.data(x);
    let mut out = Vec::with_capacity(src.len() / 2);
    let mut second = Vec::with_capacity(src.len() / 2);
    for cell in src.chunks(c) {
        let (lo, hi) = cell.split_at(half);
        for (&u, &v) in lo.iter().zip(hi) {
            let pick = v > u;
            second.push(pick);
            out.push(if pick { v } else { u });
        }
    }
    let mut shape = s.clone();
    *shape.last_mut().unwrap() = half;
    let out = Tensor::new(shape, out)?;
    Ok(tape.record(out, &[x], move |ctx| {
        let mut dx = vec![T::zero(); ctx.input(0).numel()];
        for (o, (&g, &pick)) in ctx.grad.iter().zip(&second).enumerate() {
            let (cell, i) = (o / half, o % half);
            dx[cell * c + i + if pick { half } else { 0 }] = g;
        }
        vec![Some(dx)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_max_over_frequency() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new([1, 2, 3, 1], vec![1., 1., 1., 5., 5., 5.]).unwrap());
        let y = maxpool_freq(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 3, 1]);
        assert_eq!(tape.data(y), &[5., 5., 5.]);
    }

    #[test]
    fn constant_input_routes_gradient_to_first_row() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 4, 2, 1], 3.0).requiring_grad());
        let y = maxpool_freq(&mut tape, x).unwrap();
        assert!(tape.data(y).iter().all(|&v| v == 3.0));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., 1., 0., 0., 1., 1., 0., 0.]);
    }

    #[test]
    fn odd_frequency_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([1, 3, 2, 1]));
        assert!(matches!(maxpool_freq(&mut tape, x), Err(Error::Dimension(_))));
    }

    #[test]
    fn mfm_pairs_split_halves() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new([1, 4], vec![1., 3., -1., 4.]).unwrap());
        let y = mfm(&mut tape, x).unwrap();
        assert_eq!(tape.data(y), &[1., 4.]);
    }

    #[test]
    fn mfm_odd_channels_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([2, 3]));
        assert!(matches!(mfm(&mut tape, x), Err(Error::Dimension(_))));
    }

    #[test]
    fn mfm_ties_route_to_first_half() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 4], 2.0).requiring_grad());
        let y = mfm(&mut tape, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., 1., 0., 0.]);
    }
}
