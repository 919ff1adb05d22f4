use ndarray::{Array, Dimension};
use rand::Rng;

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dropout output and its mask.
pub type Masked<D> = (Array<f64, D>, Array<f64, D>);

/// Inverted dropout. Returns the output and the multiplier mask (`0` or
/// `1/(1-p)` per entry in train mode, all ones in eval mode) for the backward
/// pass. Eval mode returns an exact copy of `x`.
pub fn dropout<D: Dimension>(
    x: &Array<f64, D>,
    p: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Masked<D>, NeuralError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NeuralError::InvalidArgument(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), Array::ones(x.raw_dim())));
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Array::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
    Ok((x * &mask, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::seeded_rng;
    use ndarray::Array1;

    #[test]
    fn eval_mode_is_bitwise_identity() {
        let x = Array1::from(vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0e300]);
        let (y, _) = dropout(&x, 0.5, Mode::Eval, &mut seeded_rng(0)).unwrap();
        let bits = |a: &Array1<f64>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&y), bits(&x));
    }

    #[test]
    fn zero_probability_is_identity_in_both_modes() {
        let x = Array1::linspace(-1.0, 1.0, 11);
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(dropout(&x, 0.0, mode, &mut seeded_rng(0)).unwrap().0, x);
        }
    }

    #[test]
    fn inverted_scaling_preserves_the_mean() {
        let x = Array1::<f64>::ones(100_000);
        let (y, _) = dropout(&x, 0.25, Mode::Train, &mut seeded_rng(42)).unwrap();
        let mean = y.mean().unwrap();
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
        assert!(y.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn masks_are_reproducible_with_a_seed() {
        let x = Array1::<f64>::ones(64);
        let (a, _) = dropout(&x, 0.3, Mode::Train, &mut seeded_rng(5)).unwrap();
        let (b, _) = dropout(&x, 0.3, Mode::Train, &mut seeded_rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probability_out_of_range_is_rejected() {
        let x = Array1::<f64>::ones(2);
        assert!(dropout(&x, 1.0, Mode::Train, &mut seeded_rng(0)).is_err());
        assert!(dropout(&x, -0.1, Mode::Eval, &mut seeded_rng(0)).is_err());
    }
}
