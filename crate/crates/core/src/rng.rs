//! Seeded, caller-owned random number generation.
//!
//! Backed by ChaCha8, a counter-based stream cipher generator whose output is
//! identical on every platform for a given seed.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }

    /// I.i.d. uniform samples in `[-bound, bound]`. `bound` must be positive.
    pub fn uniform(&mut self, shape: &[usize], bound: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.range_f64(-bound, bound)).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }
}

/// Glorot bound `sqrt(6 / (fan_in + fan_out))` for a 2-D weight.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [r, c] => (*r, *c),
        [n] => (*n, *n),
        _ => (shape.iter().product(), shape.iter().product()),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn init_uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Result<Tensor> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!(
            "init bound must be positive, got {bound}"
        )));
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "cannot initialize an empty tensor".into(),
        });
    }
    Ok(rng.uniform(shape, bound))
}

/// Glorot-uniform weights.
pub fn init_weight(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    init_uniform(rng, shape, glorot_bound(shape))
}

/// Biases start at zero.
pub fn init_bias(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape)
}
