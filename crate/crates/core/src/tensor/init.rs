//! Seeded parameter initializers.

use rand::Rng;

use super::Tensor;

/// Uniform on `[-limit, limit]` with `limit = gain * sqrt(3 / fan_in)`.
pub fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
    let limit = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Gain suited to layers followed by ReLU.
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
