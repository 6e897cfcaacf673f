use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// He-uniform samples: i.i.d. on `[-sqrt(6/fan_in), +sqrt(6/fan_in)]`.
pub fn he_uniform_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Vec<T>> {
    if fan_in == 0 {
        return Err(Error::Param("fan_in must be at least 1".into()));
    }
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    Ok((0..len)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound)))
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn fan_in_six_has_unit_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = he_uniform_init(&[10, 10], 6, &mut rng).unwrap();
        assert_eq!(w.len(), 100);
        assert!(w.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn sample_statistics_for_fan_in_54() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w: Vec<f64> = he_uniform_init(&[100_000], 54, &mut rng).unwrap();
        let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(max <= 1.0 / 3.0 + 1e-12);
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn same_seed_same_values() {
        let a: Vec<f32> = he_uniform_init(&[4, 3, 3, 3], 27, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b: Vec<f32> = he_uniform_init(&[4, 3, 3, 3], 27, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_in_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(he_uniform_init::<f32, _>(&[2], 0, &mut rng), Err(Error::Param(_))));
    }
}
