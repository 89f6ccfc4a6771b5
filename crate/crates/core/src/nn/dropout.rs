use ndarray::{Array, Dimension};
use rand::Rng;

use crate::error::{Error, Result};

/// Per-entry multipliers drawn by [`dropout`]: `0` or `1/(1−rate)`.
pub type Mask<D> = Array<f64, D>;

/// Inverted dropout. In training mode (`rng` given) each entry is zeroed
/// with probability `rate` and survivors are scaled by `1/(1−rate)`;
/// without an rng the input passes through unchanged.
pub fn dropout<D: Dimension, R: Rng + ?Sized>(
    x: &Array<f64, D>,
    rate: f64,
    rng: Option<&mut R>,
) -> Result<(Array<f64, D>, Option<Mask<D>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask = x.map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep });
            Ok((x * &mask, Some(mask)))
        }
        _ => Ok((x.clone(), None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_zero_and_eval_are_identity() {
        let x = Array1::from(vec![1.0, -2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout(&x, 0.0, Some(&mut rng)).unwrap().0, x);
        assert_eq!(dropout::<_, ChaCha8Rng>(&x, 0.5, None).unwrap().0, x);
    }

    #[test]
    fn invalid_rate() {
        let x = Array1::<f64>::zeros(2);
        assert!(dropout::<_, ChaCha8Rng>(&x, 1.0, None).is_err());
        assert!(dropout::<_, ChaCha8Rng>(&x, -0.1, None).is_err());
    }

    #[test]
    fn survivor_fraction_concentrates() {
        // binomial sd at n = 1e6, p = 0.7 is ~4.6e-4, so ±0.003 is > 6 sd
        let x = Array1::<f64>::ones(1_000_000);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (y, mask) = dropout(&x, 0.3, Some(&mut rng)).unwrap();
        let kept = mask.unwrap().iter().filter(|&&m| m > 0.0).count() as f64 / 1e6;
        assert!((kept - 0.7).abs() < 0.003, "{kept}");
        let scale = 1.0 / 0.7;
        assert!(y.iter().all(|&v| v == 0.0 || (v - scale).abs() < 1e-12));
    }
}
