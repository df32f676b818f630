//! Seeded weight initialization. Convolution kernels draw from a Kaiming
//! normal distribution (fan-in, ReLU gain); biases start at zero.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::optim::Parameter;
use crate::tensor::{Shape, Tensor};

pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Initializer {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self, shape: Shape, std: f64) -> Tensor {
        Tensor::from_fn(shape, |_| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            z * std
        })
    }

    pub fn uniform(&mut self, shape: Shape, lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(shape, |_| self.rng.gen_range(lo..hi))
    }

    /// Kaiming-normal conv kernel (c_out, c_in, kh, kw). `fan_in_taps`
    /// overrides the tap count for line-masked kernels.
    pub fn conv_weight(
        &mut self,
        name: &str,
        c_out: usize,
        c_in: usize,
        kh: usize,
        kw: usize,
        fan_in_taps: Option<usize>,
    ) -> Parameter {
        let taps = fan_in_taps.unwrap_or(kh * kw);
        let fan_in = (c_in * taps) as f64;
        let std = (2.0 / fan_in).sqrt();
        Parameter::new(name, self.normal(Shape::new(c_out, c_in, kh, kw), std))
    }

    pub fn conv_bias(&mut self, name: &str, c_out: usize) -> Parameter {
        Parameter::new(name, Tensor::zeros(Shape::new(1, c_out, 1, 1)))
    }

    pub fn constant(&mut self, name: &str, shape: Shape, value: f64) -> Parameter {
        Parameter::new(name, Tensor::full(shape, value))
    }
}
