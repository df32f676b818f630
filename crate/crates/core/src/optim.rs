//! Trainable parameters and the Adam optimizer.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// A named trainable tensor with per-parameter Adam state. Parameters with a
/// structural mask (directional kernels) have the mask re-imposed after every
/// optimizer step so off-support entries stay exactly zero.
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub mask: Option<Vec<f64>>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Parameter {
        let n = value.numel();
        value.set_requires_grad(true);
        Parameter {
            name: name.into(),
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step_count: 0,
            mask: None,
        }
    }

    /// Attach a 0/1 structural mask and apply it to the current value.
    pub fn with_mask(mut self, mask: Vec<f64>) -> Parameter {
        assert_eq!(mask.len(), self.value.numel());
        self.mask = Some(mask);
        self.apply_mask();
        self
    }

    pub fn apply_mask(&mut self) {
        if let Some(mask) = &self.mask {
            let mut data = self.value.data_mut();
            for (d, m) in data.iter_mut().zip(mask) {
                *d *= m;
            }
        }
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }
}

/// Adam with bias correction. Gradients are zeroed after each step.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn step<'a>(
        &self,
        lr: f64,
        params: impl IntoIterator<Item = &'a mut Parameter>,
    ) -> Result<()> {
        for p in params {
            self.update(lr, p)?;
        }
        Ok(())
    }

    pub fn update(&self, lr: f64, p: &mut Parameter) -> Result<()> {
        let grad = p.value.grad_vec().ok_or_else(|| {
            Error::Autodiff(format!("parameter '{}' has no gradient", p.name))
        })?;
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        {
            let mut data = p.value.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        p.apply_mask();
        p.value.zero_grad();
        Ok(())
    }
}
