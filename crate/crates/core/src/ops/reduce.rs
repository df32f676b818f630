//! Reductions: full, per-image, spatial, and channel-wise.

use crate::error::Result;
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

impl Tape {
    /// Sum of all elements -> scalar (1,1,1,1).
    pub fn sum_all(&self, x: &Tensor) -> Result<Tensor> {
        let total: f64 = x.data().iter().sum();
        let needs = x.needs_grad();
        let out = Tensor::scalar(total).requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let g = o2.grad_vec().expect("output grad present")[0];
                x2.accumulate_grad(&vec![g; x2.numel()]);
            });
        }
        Ok(out)
    }

    /// Mean of all elements -> scalar.
    pub fn mean_all(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.numel() as f64;
        let s = self.sum_all(x)?;
        self.affine(&s, 1.0 / n, 0.0)
    }

    /// Per-image sum over (c,h,w): (n,c,h,w) -> (n,1,1,1).
    pub fn sum_per_image(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let per = shape.c * shape.h * shape.w;
        let mut out = vec![0.0; shape.n];
        {
            let xd = x.data();
            for (o, chunk) in out.iter_mut().zip(xd.chunks_exact(per)) {
                *o = chunk.iter().sum();
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(Shape::new(shape.n, 1, 1, 1), out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                for (chunk, &g) in contrib.chunks_exact_mut(per).zip(go.iter()) {
                    chunk.fill(g);
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Mean over the spatial extent: (n,c,h,w) -> (n,c,1,1).
    pub fn spatial_mean(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let per = shape.hw();
        let inv = 1.0 / per as f64;
        let mut out = vec![0.0; shape.n * shape.c];
        {
            let xd = x.data();
            for (o, chunk) in out.iter_mut().zip(xd.chunks_exact(per)) {
                *o = chunk.iter().sum::<f64>() * inv;
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(Shape::new(shape.n, shape.c, 1, 1), out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                for (chunk, &g) in contrib.chunks_exact_mut(per).zip(go.iter()) {
                    chunk.fill(g * inv);
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Channel-wise max: (n,c,h,w) -> (n,1,h,w). Ties route the gradient to
    /// the lowest channel index, deterministically.
    pub fn channel_max(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let os = Shape::new(shape.n, 1, shape.h, shape.w);
        let hw = shape.hw();
        let mut out = vec![f64::NEG_INFINITY; os.numel()];
        let mut argmax = vec![0usize; os.numel()];
        {
            let xd = x.data();
            for n in 0..shape.n {
                for c in 0..shape.c {
                    let base = shape.index(n, c, 0, 0);
                    let obase = n * hw;
                    for p in 0..hw {
                        let v = xd[base + p];
                        if v > out[obase + p] {
                            out[obase + p] = v;
                            argmax[obase + p] = c;
                        }
                    }
                }
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                for n in 0..shape.n {
                    let obase = n * hw;
                    for p in 0..hw {
                        let c = argmax[obase + p];
                        contrib[shape.index(n, c, 0, 0) + p] += go[obase + p];
                    }
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Channel-wise mean: (n,c,h,w) -> (n,1,h,w).
    pub fn channel_mean(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let os = Shape::new(shape.n, 1, shape.h, shape.w);
        let hw = shape.hw();
        let inv = 1.0 / shape.c as f64;
        let mut out = vec![0.0; os.numel()];
        {
            let xd = x.data();
            for n in 0..shape.n {
                for c in 0..shape.c {
                    let base = shape.index(n, c, 0, 0);
                    let obase = n * hw;
                    for p in 0..hw {
                        out[obase + p] += xd[base + p];
                    }
                }
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                for n in 0..shape.n {
                    let obase = n * hw;
                    for c in 0..shape.c {
                        let base = shape.index(n, c, 0, 0);
                        for p in 0..hw {
                            contrib[base + p] = go[obase + p] * inv;
                        }
                    }
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_stats_reduce_to_single_channel() {
        let tape = Tape::inference();
        let x = Tensor::from_vec(
            Shape::new(1, 3, 1, 2),
            vec![1.0, -2.0, 5.0, 0.0, 3.0, 4.0],
        )
        .unwrap();
        let mx = tape.channel_max(&x).unwrap();
        let mn = tape.channel_mean(&x).unwrap();
        assert_eq!(mx.to_vec(), vec![5.0, 4.0]);
        assert_eq!(mn.to_vec(), vec![3.0, 2.0 / 3.0]);
    }

    #[test]
    fn per_image_sum_separates_batch_items() {
        let tape = Tape::inference();
        let x = Tensor::from_vec(Shape::new(2, 1, 1, 2), vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let s = tape.sum_per_image(&x).unwrap();
        assert_eq!(s.to_vec(), vec![3.0, 30.0]);
    }

    #[test]
    fn channel_max_routes_gradient_to_argmax() {
        let tape = Tape::new();
        let x = Tensor::from_vec(Shape::new(1, 2, 1, 2), vec![1.0, 9.0, 7.0, 2.0])
            .unwrap()
            .requires_grad(true);
        let m = tape.channel_max(&x).unwrap();
        let loss = tape.sum_all(&m).unwrap();
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
    }
}
