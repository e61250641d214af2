//! Differentiable primitives on the tape.

use super::{gemm, numel, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Splits `shape` around `axis` into `(outer, len, inner)`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax of each contiguous row of length `k`.
pub fn softmax_rows<T: Scalar>(x: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, dst) in x.chunks(k).zip(out.chunks_mut(k)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

impl<T: Scalar> Tape<T> {
    fn unary<F, G>(&mut self, x: Var, f: F, df: G) -> Var
    where
        F: Fn(T) -> T,
        G: Fn(T, T) -> T + 'static,
    {
        let input = self.value(x);
        let data = input.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(input.shape().to_vec(), data).expect("same shape");
        self.record(out, &[x], move |ctx| {
            let xs = ctx.input(0).data();
            let ys = ctx.output.data();
            let g = ctx.grad.iter().zip(xs.iter().zip(ys)).map(|(&g, (&x, &y))| g * df(x, y)).collect();
            vec![Some(g)]
        })
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!("{op}: shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    /// `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("matmul: cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        let out = Tensor::new([m, n], out)?;
        Ok(self.record(out, &[a, b], move |ctx| {
            let da = ctx.needs(0).then(|| {
                let mut da = vec![T::zero(); m * k];
                gemm(m, n, k, ctx.grad, false, ctx.input(1).data(), true, &mut da, false);
                da
            });
            let db = ctx.needs(1).then(|| {
                let mut db = vec![T::zero(); k * n];
                gemm(k, m, n, ctx.input(0).data(), true, ctx.grad, false, &mut db, false);
                db
            });
            vec![da, db]
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.record(out, &[a, b], |ctx| vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.record(out, &[a, b], |ctx| {
            let (xa, xb) = (ctx.input(0).data(), ctx.input(1).data());
            let da = ctx.needs(0).then(|| ctx.grad.iter().zip(xb).map(|(&g, &y)| g * y).collect());
            let db = ctx.needs(1).then(|| ctx.grad.iter().zip(xa).map(|(&g, &x)| g * x).collect());
            vec![da, db]
        }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.unary(x, move |v| v * factor, move |_, _| factor)
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        if self.shape(bias) != [n] {
            return Err(Error::Dimension(format!(
                "add_bias: bias {:?} does not match last axis of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let b = self.data(bias).to_vec();
        let data = self.data(x).chunks(n).flat_map(|row| row.iter().zip(&b).map(|(&v, &c)| v + c)).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.record(out, &[x, bias], move |ctx| {
            let db = ctx.needs(1).then(|| {
                let mut db = vec![T::zero(); n];
                for row in ctx.grad.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
                }
                db
            });
            vec![Some(ctx.grad.to_vec()), db]
        }))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.data(x).iter().copied().sum();
        let n = self.value(x).numel();
        self.record(Tensor::scalar(total), &[x], move |ctx| vec![Some(vec![ctx.grad[0]; n])])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum(x);
        self.scale(s, T::one() / T::from_f64(n as f64))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { v * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).numel() {
            return Err(Error::Dimension(format!("cannot reshape {:?} into {shape:?}", self.shape(x))));
        }
        let out = Tensor::new(shape.to_vec(), self.data(x).to_vec())?;
        Ok(self.record(out, &[x], |ctx| vec![Some(ctx.grad.to_vec())]))
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape.len() < 2 {
            return Err(Error::Dimension(format!("mean_axis: bad axis {axis} for {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let inv = T::one() / T::from_f64(len as f64);
        let src = self.data(x);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                let row = &src[(o * len + l) * inner..(o * len + l + 1) * inner];
                dst.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
            }
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let out = Tensor::new(out_shape, out)?;
        Ok(self.record(out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                let g = &ctx.grad[o * inner..(o + 1) * inner];
                for l in 0..len {
                    let d = &mut dx[(o * len + l) * inner..(o * len + l + 1) * inner];
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d = g * inv);
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let k = *self.shape(x).last().unwrap();
        let y = softmax_rows(self.data(x), k);
        let out = Tensor::new(self.shape(x).to_vec(), y).expect("same shape");
        self.record(out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); ctx.grad.len()];
            for ((g, y), d) in ctx.grad.chunks(k).zip(ctx.output.data().chunks(k)).zip(dx.chunks_mut(k)) {
                let dot: T = g.iter().zip(y).map(|(&g, &y)| g * y).sum();
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(y) {
                    *d = y * (g - dot);
                }
            }
            vec![Some(dx)]
        })
    }

    /// Joins two tensors along their last axis; leading axes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::Dimension(format!("concat: {sa:?} and {sb:?} do not line up")));
        }
        let (ka, kb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let mut data = Vec::with_capacity(self.value(a).numel() + self.value(b).numel());
        for (ra, rb) in self.data(a).chunks(ka).zip(self.data(b).chunks(kb)) {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = ka + kb;
        let out = Tensor::new(shape, data)?;
        Ok(self.record(out, &[a, b], move |ctx| {
            let mut da = Vec::with_capacity(ctx.input(0).numel());
            let mut db = Vec::with_capacity(ctx.input(1).numel());
            for row in ctx.grad.chunks(ka + kb) {
                da.extend_from_slice(&row[..ka]);
                db.extend_from_slice(&row[ka..]);
            }
            vec![Some(da), Some(db)]
        }))
    }

    /// Mean categorical cross-entropy of `logits [B x K]` against class
    /// indices. The softmax is folded in, with max-subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!("cross-entropy expects [B x K] logits, got {shape:?}")));
        }
        let (batch, k) = (shape[0], shape[1]);
        if targets.len() != batch {
            return Err(Error::Dimension(format!("cross-entropy: {} targets for a batch of {batch}", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Index(format!("target class {bad} outside [0, {k})")));
        }
        if self.data(logits).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        let probs = softmax_rows(self.data(logits), k);
        let mut loss = T::zero();
        for (row, &t) in self.data(logits).chunks(k).zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss += lse - row[t];
        }
        let inv_b = T::one() / T::from_f64(batch as f64);
        let targets = targets.to_vec();
        Ok(self.record(Tensor::scalar(loss * inv_b), &[logits], move |ctx| {
            let scale = ctx.grad[0] * inv_b;
            let mut d = probs.clone();
            for (row, &t) in d.chunks_mut(k).zip(&targets) {
                row[t] -= T::one();
                row.iter_mut().for_each(|v| *v *= scale);
            }
            vec![Some(d)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_check;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_hand_case() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.leaf(t(&[2, 2], &[5., 6., 7., 8.]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(c), &[19., 22., 43., 50.]);
    }

    #[test]
    fn matmul_identity_returns_rhs() {
        let mut tape = Tape::new();
        let eye = tape.leaf(Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let bdata = [0.5, -1.0, 2.0, 3.5, -0.25, 7.0];
        let b = tape.leaf(t(&[3, 2], &bdata));
        let c = tape.matmul(eye, b).unwrap();
        assert_eq!(tape.data(c), &bdata);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros([2, 3]));
        let b = tape.leaf(Tensor::zeros([2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.matches("[2, 3]").count() == 2, "{err}");
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros([1, 10]));
        let l = tape.softmax_cross_entropy(z, &[3]).unwrap();
        assert!((tape.data(l)[0] - 10f64.ln()).abs() < 1e-12);

        let z2 = tape.leaf(Tensor::zeros([1, 2]));
        let l2 = tape.softmax_cross_entropy(z2, &[0]).unwrap();
        assert!((tape.data(l2)[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_bad_input() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(Tensor::zeros([1, 10]));
        assert!(matches!(tape.softmax_cross_entropy(z, &[10]), Err(Error::Index(_))));
        let nan = tape.leaf(Tensor::full([1, 10], f64::NAN));
        assert!(matches!(tape.softmax_cross_entropy(nan, &[0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1., 2., 3.]).requiring_grad());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2., 4., 6.]);
    }

    #[test]
    fn sum_gradient_is_ones_and_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::zeros([4]).requiring_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., 1., 1., 1.]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2., 2., 2., 2.]);
        tape.zero_grad();
        assert_eq!(tape.grad(x).unwrap(), &[0., 0., 0., 0.]);
    }

    #[test]
    fn disconnected_leaf_gets_exact_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]).requiring_grad());
        let y = tape.leaf(t(&[3], &[1., 2., 3.]).requiring_grad());
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(y).unwrap(), &[0., 0., 0.]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]).requiring_grad());
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 1.7).sin() * 30.0).collect();
        for row in softmax_rows(&x, 10).chunks(10) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    type UnaryOp = Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>;

    #[test]
    fn elementwise_ops_pass_gradient_checks() {
        let x = Tensor::from_fn([3, 4], |i| ((i * 7 % 11) as f64 - 5.0) / 3.0 + 0.05);
        let checks: Vec<(&str, UnaryOp)> = vec![
            ("tanh", Box::new(|tp, v| Ok(tp.tanh(v)))),
            ("relu", Box::new(|tp, v| Ok(tp.relu(v)))),
            ("leaky", Box::new(|tp, v| Ok(tp.leaky_relu(v, 0.01)))),
            ("softmax", Box::new(|tp, v| Ok(tp.softmax(v)))),
            ("mean_axis0", Box::new(|tp, v| tp.mean_axis(v, 0))),
            ("mean_axis1", Box::new(|tp, v| tp.mean_axis(v, 1))),
            (
                "concat",
                Box::new(|tp, v| {
                    let s = tp.tanh(v);
                    tp.concat_last(v, s)
                }),
            ),
        ];
        let weights = Tensor::from_fn([24], |i| (i as f64 * 0.61).cos());
        for (name, op) in checks {
            let err = finite_difference_check(
                |tp, v| {
                    let y = op(tp, v)?;
                    let n = tp.value(y).numel();
                    let w = tp.constant(Tensor::new([n], weights.data()[..n].to_vec())?);
                    let flat = tp.reshape(y, &[n])?;
                    let p = tp.mul(flat, w)?;
                    Ok(tp.sum(p))
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "{name}: relative error {err}");
        }
    }
}
