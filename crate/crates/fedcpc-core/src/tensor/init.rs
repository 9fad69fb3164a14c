//! Weight initialization.
//!
//! Uniform fan-in scaling: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`. Biases are
//! initialized to zero.

use super::{Scalar, Tensor};
use rand::Rng;

/// Kaiming-style uniform init over the given shape.
pub fn kaiming_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::from_f64(rng.gen_range(-bound..bound));
    }
    t
}

/// Zero tensor; used for biases and recurrent initial states.
pub fn zeros_init<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    Tensor::zeros(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn values_within_fan_in_bound() {
        let mut rng = derive_rng(9, "init");
        let t: Tensor<f32> = kaiming_uniform(&[64, 64], 64, &mut rng);
        let bound = 1.0 / 8.0 + 1e-6;
        assert!(t.data().iter().all(|v| v.abs() < bound));
        // not degenerate
        assert!(t.data().iter().any(|v| v.abs() > 1e-4));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a: Tensor<f64> = kaiming_uniform(&[8], 8, &mut derive_rng(3, "w"));
        let b: Tensor<f64> = kaiming_uniform(&[8], 8, &mut derive_rng(3, "w"));
        assert_eq!(a.data(), b.data());
    }
}
