//! Same-padded 2D convolution and context-offset 1D convolution.
//!
//! Both lower to a patch matrix times the kernel matrix. Patch rows are
//! built in blocks so the scratch buffer stays small; examples in a batch
//! run in parallel and weight gradients are summed in example order, which
//! keeps results independent of the thread count.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tape, Tensor, Var};

const BLOCK_ELEMS: usize = 1 << 18;

/// How one example's input maps onto patch-matrix rows.
trait Patches: Sync + Send + 'static {
    /// Patch rows per example (output positions).
    fn rows(&self) -> usize;
    /// Patch width (kernel fan-in).
    fn width(&self) -> usize;
    /// True when the patch matrix is the input itself.
    fn is_identity(&self) -> bool;
    fn fill<T: Scalar>(&self, x: &[T], rows: Range<usize>, cols: &mut [T]);
    fn scatter<T: Scalar>(&self, dcols: &[T], rows: Range<usize>, dx: &mut [T]);
}

struct Grid2d {
    f: usize,
    t: usize,
    cin: usize,
    kh: usize,
    kw: usize,
}

impl Patches for Grid2d {
    fn rows(&self) -> usize {
        self.f * self.t
    }

    fn width(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn is_identity(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn fill<T: Scalar>(&self, x: &[T], rows: Range<usize>, cols: &mut [T]) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let k = self.width();
        for (r, dst) in rows.zip(cols.chunks_mut(k)) {
            let (fi, ti) = ((r / self.t) as isize, (r % self.t) as isize);
            for i in 0..self.kh {
                let sf = fi + i as isize - ph;
                for j in 0..self.kw {
                    let st = ti + j as isize - pw;
                    let slot = &mut dst[(i * self.kw + j) * self.cin..(i * self.kw + j + 1) * self.cin];
                    if sf < 0 || sf >= self.f as isize || st < 0 || st >= self.t as isize {
                        slot.iter_mut().for_each(|v| *v = T::zero());
                    } else {
                        let src = (sf as usize * self.t + st as usize) * self.cin;
                        slot.copy_from_slice(&x[src..src + self.cin]);
                    }
                }
            }
        }
    }

    fn scatter<T: Scalar>(&self, dcols: &[T], rows: Range<usize>, dx: &mut [T]) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        let k = self.width();
        for (r, src) in rows.zip(dcols.chunks(k)) {
            let (fi, ti) = ((r / self.t) as isize, (r % self.t) as isize);
            for i in 0..self.kh {
                let sf = fi + i as isize - ph;
                if sf < 0 || sf >= self.f as isize {
                    continue;
                }
                for j in 0..self.kw {
                    let st = ti + j as isize - pw;
                    if st < 0 || st >= self.t as isize {
                        continue;
                    }
                    let dst = (sf as usize * self.t + st as usize) * self.cin;
                    let slot = &src[(i * self.kw + j) * self.cin..(i * self.kw + j + 1) * self.cin];
                    dx[dst..dst + self.cin].iter_mut().zip(slot).for_each(|(d, &g)| *d += g);
                }
            }
        }
    }
}

struct Context1d {
    t: usize,
    cin: usize,
    offsets: Vec<isize>,
}

impl Patches for Context1d {
    fn rows(&self) -> usize {
        self.t
    }

    fn width(&self) -> usize {
        self.offsets.len() * self.cin
    }

    fn is_identity(&self) -> bool {
        self.offsets == [0]
    }

    fn fill<T: Scalar>(&self, x: &[T], rows: Range<usize>, cols: &mut [T]) {
        let k = self.width();
        for (r, dst) in rows.zip(cols.chunks_mut(k)) {
            for (o, &off) in self.offsets.iter().enumerate() {
                let src = r as isize + off;
                let slot = &mut dst[o * self.cin..(o + 1) * self.cin];
                if src < 0 || src >= self.t as isize {
                    slot.iter_mut().for_each(|v| *v = T::zero());
                } else {
                    let s = src as usize * self.cin;
                    slot.copy_from_slice(&x[s..s + self.cin]);
                }
            }
        }
    }

    fn scatter<T: Scalar>(&self, dcols: &[T], rows: Range<usize>, dx: &mut [T]) {
        let k = self.width();
        for (r, src) in rows.zip(dcols.chunks(k)) {
            for (o, &off) in self.offsets.iter().enumerate() {
                let d = r as isize + off;
                if d < 0 || d >= self.t as isize {
                    continue;
                }
                let d = d as usize * self.cin;
                let slot = &src[o * self.cin..(o + 1) * self.cin];
                dx[d..d + self.cin].iter_mut().zip(slot).for_each(|(a, &g)| *a += g);
            }
        }
    }
}

fn block_rows(rows: usize, width: usize) -> usize {
    (BLOCK_ELEMS / width.max(1)).clamp(1, rows.max(1))
}

fn correlate_forward<T: Scalar, P: Patches>(geo: &P, x: &[T], w: &[T], bias: &[T], batch: usize) -> Vec<T> {
    let (rows, k, cout) = (geo.rows(), geo.width(), bias.len());
    let in_len = x.len() / batch;
    let mut out = vec![T::zero(); batch * rows * cout];
    out.par_chunks_mut(rows * cout).enumerate().for_each(|(b, yb)| {
        let xb = &x[b * in_len..(b + 1) * in_len];
        if geo.is_identity() {
            gemm(rows, k, cout, xb, false, w, false, yb, false);
        } else {
            let step = block_rows(rows, k);
            let mut cols = vec![T::zero(); step * k];
            let mut r0 = 0;
            while r0 < rows {
                let r1 = (r0 + step).min(rows);
                let n = r1 - r0;
                geo.fill(xb, r0..r1, &mut cols[..n * k]);
                gemm(n, k, cout, &cols[..n * k], false, w, false, &mut yb[r0 * cout..r1 * cout], false);
                r0 = r1;
            }
        }
        for row in yb.chunks_mut(cout) {
            row.iter_mut().zip(bias).for_each(|(y, &c)| *y += c);
        }
    });
    out
}

struct CorrelateGrads<T> {
    dx: Option<Vec<T>>,
    dw: Option<Vec<T>>,
    db: Option<Vec<T>>,
}

fn correlate_backward<T: Scalar, P: Patches>(
    geo: &P,
    x: &[T],
    w: &[T],
    dy: &[T],
    batch: usize,
    cout: usize,
    needs: [bool; 3],
) -> CorrelateGrads<T> {
    let (rows, k) = (geo.rows(), geo.width());
    let in_len = x.len() / batch;
    let [need_x, need_w, need_b] = needs;
    let mut dx = vec![T::zero(); if need_x { x.len() } else { 0 }];

    let per_example = |b: usize, dxb: Option<&mut [T]>| -> Option<Vec<T>> {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let dyb = &dy[b * rows * cout..(b + 1) * rows * cout];
        let mut dw = need_w.then(|| vec![T::zero(); k * cout]);
        if geo.is_identity() {
            if let Some(dw) = dw.as_mut() {
                gemm(k, rows, cout, xb, true, dyb, false, dw, false);
            }
            if let Some(dxb) = dxb {
                gemm(rows, cout, k, dyb, false, w, true, dxb, false);
            }
            return dw;
        }
        let step = block_rows(rows, k);
        let mut cols = vec![T::zero(); step * k];
        let mut dcols = vec![T::zero(); if dxb.is_some() { step * k } else { 0 }];
        let mut dxb = dxb;
        let mut r0 = 0;
        while r0 < rows {
            let r1 = (r0 + step).min(rows);
            let n = r1 - r0;
            let dyblk = &dyb[r0 * cout..r1 * cout];
            if let Some(dw) = dw.as_mut() {
                geo.fill(xb, r0..r1, &mut cols[..n * k]);
                gemm(k, n, cout, &cols[..n * k], true, dyblk, false, dw, true);
            }
            if let Some(dxb) = dxb.as_deref_mut() {
                gemm(n, cout, k, dyblk, false, w, true, &mut dcols[..n * k], false);
                geo.scatter(&dcols[..n * k], r0..r1, dxb);
            }
            r0 = r1;
        }
        dw
    };

    let partials: Vec<Option<Vec<T>>> = if need_x {
        dx.par_chunks_mut(in_len).enumerate().map(|(b, dxb)| per_example(b, Some(dxb))).collect()
    } else {
        (0..batch).into_par_iter().map(|b| per_example(b, None)).collect()
    };

    let dw = need_w.then(|| {
        let mut total = vec![T::zero(); k * cout];
        for p in partials.iter().flatten() {
            total.iter_mut().zip(p).for_each(|(t, &v)| *t += v);
        }
        total
    });
    let db = need_b.then(|| {
        let mut db = vec![T::zero(); cout];
        for row in dy.chunks(cout) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
        db
    });
    CorrelateGrads { dx: need_x.then_some(dx), dw, db }
}

fn record_correlation<T: Scalar, P: Patches>(
    tape: &mut Tape<T>,
    geo: P,
    out_shape: Vec<usize>,
    batch: usize,
    inputs: [Var; 3],
) -> Result<Var> {
    let [x, weight, bias] = inputs;
    let cout = tape.shape(bias)[0];
    let y = correlate_forward(&geo, tape.data(x), tape.data(weight), tape.data(bias), batch);
    let out = Tensor::new(out_shape, y)?;
    Ok(tape.record(out, &inputs, move |ctx| {
        let g = correlate_backward(
            &geo,
            ctx.input(0).data(),
            ctx.input(1).data(),
            ctx.grad,
            batch,
            cout,
            [ctx.needs(0), ctx.needs(1), ctx.needs(2)],
        );
        vec![g.dx, g.dw, g.db]
    }))
}

/// Same-padded cross-correlation of `x [B x F x T x Cin]` with
/// `kernel [kh x kw x Cin x Cout]`, plus `bias [Cout]`.
pub fn conv2d<T: Scalar>(tape: &mut Tape<T>, x: Var, kernel: Var, bias: Var) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    let ks = tape.shape(kernel).to_vec();
    if xs.len() != 4 || ks.len() != 4 {
        return Err(Error::Dimension(format!("conv2d: input {xs:?}, kernel {ks:?}")));
    }
    let [batch, f, t, cin] = [xs[0], xs[1], xs[2], xs[3]];
    let [kh, kw, kcin, cout] = [ks[0], ks[1], ks[2], ks[3]];
    if kcin != cin {
        return Err(Error::Dimension(format!("conv2d: input has {cin} channels but kernel {ks:?} expects {kcin}")));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Dimension(format!("conv2d: same padding needs odd kernel sides, got {kh}x{kw}")));
    }
    if tape.shape(bias) != [cout] {
        return Err(Error::Dimension(format!("conv2d: bias {:?} for {cout} outputs", tape.shape(bias))));
    }
    let geo = Grid2d { f, t, cin, kh, kw };
    record_correlation(tape, geo, vec![batch, f, t, cout], batch, [x, kernel, bias])
}

/// Temporal convolution over `x [B x T x Cin]` where output frame `t`
/// reads input frames `t + offset` (zero outside `[0, T)`), with weights
/// `[offsets x Cin x Cout]`.
pub fn conv1d_ctx<T: Scalar>(tape: &mut Tape<T>, x: Var, offsets: &[isize], weight: Var, bias: Var) -> Result<Var> {
    if offsets.is_empty() {
        return Err(Error::Config("conv1d: empty offset list".into()));
    }
    let xs = tape.shape(x).to_vec();
    let ws = tape.shape(weight).to_vec();
    if xs.len() != 3 || ws.len() != 3 {
        return Err(Error::Dimension(format!("conv1d: input {xs:?}, weight {ws:?}")));
    }
    let [batch, t, cin] = [xs[0], xs[1], xs[2]];
    if ws[0] != offsets.len() || ws[1] != cin {
        return Err(Error::Dimension(format!(
            "conv1d: weight {ws:?} does not fit {} offsets over {cin} channels",
            offsets.len()
        )));
    }
    let cout = ws[2];
    if tape.shape(bias) != [cout] {
        return Err(Error::Dimension(format!("conv1d: bias {:?} for {cout} outputs", tape.shape(bias))));
    }
    let geo = Context1d { t, cin, offsets: offsets.to_vec() };
    record_correlation(tape, geo, vec![batch, t, cout], batch, [x, weight, bias])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity_mixing_is_identity() {
        let mut tape = Tape::<f64>::new();
        let xt = Tensor::from_fn([1, 3, 4, 2], |i| i as f64 - 7.5);
        let x = tape.leaf(xt.clone());
        let k = tape.leaf(Tensor::new([1, 1, 2, 2], vec![1., 0., 0., 1.]).unwrap());
        let b = tape.leaf(Tensor::zeros([2]));
        let y = conv2d(&mut tape, x, k, b).unwrap();
        assert_eq!(tape.data(y), xt.data());
    }

    #[test]
    fn centre_delta_kernel_is_identity() {
        let mut tape = Tape::<f64>::new();
        let xt = Tensor::from_fn([2, 5, 6, 1], |i| (i as f64).sin());
        let x = tape.leaf(xt.clone());
        let k = tape.leaf(Tensor::from_fn([3, 3, 1, 1], |i| if i == 4 { 1.0 } else { 0.0 }));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = conv2d(&mut tape, x, k, b).unwrap();
        assert_eq!(tape.data(y), xt.data());
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([1, 4, 4, 3]));
        let k = tape.leaf(Tensor::zeros([3, 3, 2, 4]));
        let b = tape.leaf(Tensor::zeros([4]));
        assert!(matches!(conv2d(&mut tape, x, k, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_offset_identity_weights_is_identity() {
        let mut tape = Tape::<f64>::new();
        let xt = Tensor::from_fn([1, 7, 3], |i| i as f64 * 0.5);
        let x = tape.leaf(xt.clone());
        let w = tape.leaf(Tensor::from_fn([1, 3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let b = tape.leaf(Tensor::zeros([3]));
        let y = conv1d_ctx(&mut tape, x, &[0], w, b).unwrap();
        assert_eq!(tape.data(y), xt.data());
    }

    #[test]
    fn boundary_frames_see_fewer_taps() {
        // Constant input, all-ones weights summing two channels into one.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 6, 2], 1.0));
        let w = tape.leaf(Tensor::full([3, 2, 1], 1.0));
        let b = tape.leaf(Tensor::zeros([1]));
        let y = conv1d_ctx(&mut tape, x, &[-1, 0, 1], w, b).unwrap();
        assert_eq!(tape.data(y), &[4., 6., 6., 6., 6., 4.]);
    }

    #[test]
    fn empty_offsets_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([1, 4, 2]));
        let w = tape.leaf(Tensor::zeros([1, 2, 2]));
        let b = tape.leaf(Tensor::zeros([2]));
        assert!(matches!(conv1d_ctx(&mut tape, x, &[], w, b), Err(Error::Config(_))));
    }

    #[test]
    fn blocked_patches_match_single_block() {
        // Large enough that the patch matrix is split into several blocks.
        let (f, t, cin, cout) = (64, 80, 16, 3);
        let xt = Tensor::from_fn([1, f, t, cin], |i| ((i * 37 % 101) as f64 - 50.0) / 50.0);
        let kt = Tensor::from_fn([3, 3, cin, cout], |i| ((i * 13 % 17) as f64 - 8.0) / 8.0);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(xt.clone());
        let k = tape.leaf(kt.clone());
        let b = tape.leaf(Tensor::zeros([cout]));
        let y = conv2d(&mut tape, x, k, b).unwrap();
        assert!(block_rows(f * t, 9 * cin) < f * t);
        for (fi, ti, co) in [(0, 0, 0), (63, 79, 2), (31, 40, 1), (10, 0, 2)] {
            let mut want = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let (sf, st) = (fi as isize + i - 1, ti as isize + j - 1);
                    if sf < 0 || st < 0 || sf >= f as isize || st >= t as isize {
                        continue;
                    }
                    for c in 0..cin {
                        want += xt.at(&[0, sf as usize, st as usize, c]) * kt.at(&[i as usize, j as usize, c, co]);
                    }
                }
            }
            let got = tape.value(y).at(&[0, fi, ti, co]);
            assert!((got - want).abs() < 1e-12);
        }
    }
}
