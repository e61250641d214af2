//! Fully connected layers, dropout and pointwise activations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// `x [B x din] . W [din x dout] + b`.
pub fn dense<T: Scalar>(tape: &mut Tape<T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let y = tape.matmul(x, weight)?;
    tape.add_bias(y, bias)
}

/// Inverted dropout: in training each unit survives with probability
/// `1 - rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    x: Var,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> =
        (0..tape.value(x).numel()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
    let data = tape.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    let out = Tensor::new(tape.shape(x).to_vec(), data)?;
    Ok(tape.record(out, &[x], move |ctx| vec![Some(ctx.grad.iter().zip(&mask).map(|(&g, &m)| g * m).collect())]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub const LEAKY_SLOPE: f64 = 0.01;

    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: Self::LEAKY_SLOPE }
    }

    pub fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu { slope } => tape.leaky_relu(x, T::from_f64(slope)),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_rate_is_identity_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn([3, 4], |i| i as f64));
        for mode in [Mode::Train, Mode::Infer] {
            let y = dropout(&mut tape, x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(tape.data(y), tape.data(x));
        }
    }

    #[test]
    fn rate_of_one_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros([2]));
        assert!(matches!(dropout(&mut tape, x, 1.0, Mode::Train, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn training_dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([100_000], 2.5));
        let y = dropout(&mut tape, x, 0.2, Mode::Train, &mut rng).unwrap();
        let mean = tape.data(y).iter().sum::<f64>() / 100_000.0;
        assert!((mean / 2.5 - 1.0).abs() < 0.02, "mean {mean}");
        assert!(tape.data(y).contains(&0.0));
    }

    #[test]
    fn dense_parameter_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([2, 3], 1.0));
        let w = tape.leaf(Tensor::full([3, 4], 0.5));
        let b = tape.leaf(Tensor::new([4], vec![0., 1., 2., 3.]).unwrap());
        let y = dense(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.shape(y), &[2, 4]);
        assert_eq!(&tape.data(y)[..4], &[1.5, 2.5, 3.5, 4.5]);
    }
}
