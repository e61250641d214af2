//! Central-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// `|a - n| / max(1e-12, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares analytic derivatives against central differences.
///
/// `eval_shifted(i, delta)` must return the scalar objective with
/// coordinate `i` displaced by `delta` (and leave the point unchanged
/// afterwards). Returns the largest relative error over `coords`; a NaN
/// anywhere yields NaN.
pub fn check_coordinates<F>(analytic: &[f64], coords: &[usize], h: f64, mut eval_shifted: F) -> Result<f64>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for &i in coords {
        let plus = eval_shifted(i, h)?;
        let minus = eval_shifted(i, -h)?;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Gradient check of a scalar tape function at `x`, over every coordinate.
pub fn finite_difference_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_difference_check_at(f, x, h, &coords)
}

/// Gradient check of a scalar tape function at `x`, over `coords` only.
pub fn finite_difference_check_at<F>(f: F, x: &Tensor<f64>, h: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone().requiring_grad());
    let out = f(&mut tape, leaf)?;
    tape.backward(out)?;
    let analytic = tape.grad(leaf).expect("leaf requires grad").to_vec();

    let mut probe = x.clone();
    check_coordinates(&analytic, coords, h, |i, delta| {
        let original = probe.data()[i];
        probe.data_mut()[i] = original + delta;
        let mut tape = Tape::new();
        let v = tape.constant(probe.clone());
        let y = f(&mut tape, v);
        probe.data_mut()[i] = original;
        Ok(tape.data(y?)[0])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_checked_exactly() {
        let x = Tensor::zeros([5]);
        let err = finite_difference_check(|tp, v| Ok(tp.sum(v)), &x, 1e-5).unwrap();
        assert_eq!(err, 0.0);
        // Dyadic point and step: every partial sum is representable.
        let x = Tensor::from_fn([5], |i| i as f64 * 0.25 - 1.0);
        let err = finite_difference_check(|tp, v| Ok(tp.sum(v)), &x, 2f64.powi(-16)).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn half_squared_norm_matches() {
        let x = Tensor::new([2], vec![3.0, 4.0]).unwrap();
        let f = |tp: &mut Tape<f64>, v: Var| {
            let sq = tp.mul(v, v)?;
            let s = tp.sum(sq);
            Ok(tp.scale(s, 0.5))
        };
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone().requiring_grad());
        let y = f(&mut tape, leaf).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(leaf).unwrap(), &[3.0, 4.0]);
        let err = finite_difference_check(f, &x, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn nan_is_reported_as_failure() {
        let err = check_coordinates(&[1.0], &[0], 1e-5, |_, _| Ok(f64::NAN)).unwrap();
        assert!(err.is_nan());
    }
}
