//! Unary maps and broadcasting binary arithmetic.

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

/// Per-dimension element strides, zeroed where the operand broadcasts.
#[derive(Clone, Copy)]
struct BcStrides {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
}

fn bc_strides(s: Shape, out: Shape) -> BcStrides {
    BcStrides {
        n: if s.n == out.n { s.c * s.h * s.w } else { 0 },
        c: if s.c == out.c { s.h * s.w } else { 0 },
        h: if s.h == out.h { s.w } else { 0 },
        w: if s.w == out.w { 1 } else { 0 },
    }
}

fn broadcast_shape(a: Shape, b: Shape, op: &'static str) -> Result<Shape> {
    let dim = |x: usize, y: usize| -> Result<usize> {
        if x == y || x == 1 || y == 1 {
            Ok(x.max(y))
        } else {
            Err(Error::shape(
                op,
                format!("incompatible shapes {a} and {b}"),
            ))
        }
    };
    Ok(Shape::new(
        dim(a.n, b.n)?,
        dim(a.c, b.c)?,
        dim(a.h, b.h)?,
        dim(a.w, b.w)?,
    ))
}

/// Sum `grad` (laid out as `out`) down to `target`, reversing broadcast.
pub(crate) fn reduce_to_shape(grad: &[f64], out: Shape, target: Shape) -> Vec<f64> {
    if out == target {
        return grad.to_vec();
    }
    let mut reduced = vec![0.0; target.numel()];
    let st = bc_strides(target, out);
    let mut idx = 0;
    for n in 0..out.n {
        for c in 0..out.c {
            for h in 0..out.h {
                let base = n * st.n + c * st.c + h * st.h;
                for w in 0..out.w {
                    reduced[base + w * st.w] += grad[idx];
                    idx += 1;
                }
            }
        }
    }
    reduced
}

fn binary_forward(
    a: &[f64],
    sa: BcStrides,
    b: &[f64],
    sb: BcStrides,
    out: Shape,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut data = Vec::with_capacity(out.numel());
    for n in 0..out.n {
        for c in 0..out.c {
            for h in 0..out.h {
                let ba = n * sa.n + c * sa.c + h * sa.h;
                let bb = n * sb.n + c * sb.c + h * sb.h;
                for w in 0..out.w {
                    data.push(f(a[ba + w * sa.w], b[bb + w * sb.w]));
                }
            }
        }
    }
    data
}

impl Tape {
    fn binary_op(
        &self,
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64 + Copy + 'static,
        dfa: impl Fn(f64, f64) -> f64 + Copy + 'static,
        dfb: impl Fn(f64, f64) -> f64 + Copy + 'static,
    ) -> Result<Tensor> {
        let (asz, bsz) = (a.shape(), b.shape());
        let os = broadcast_shape(asz, bsz, op)?;
        let data = binary_forward(&a.data(), bc_strides(asz, os), &b.data(), bc_strides(bsz, os), os, f);
        let needs = a.needs_grad() || b.needs_grad();
        let out = Tensor::from_vec(os, data)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (a2, b2, o2) = (a.clone(), b.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let (ga, gb) = {
                    let ad = a2.data();
                    let bd = b2.data();
                    let sa = bc_strides(asz, os);
                    let sb = bc_strides(bsz, os);
                    let ga = if a2.needs_grad() {
                        let full = binary_map_grad(&ad, sa, &bd, sb, os, &go, dfa);
                        Some(reduce_to_shape(&full, os, asz))
                    } else {
                        None
                    };
                    let gb = if b2.needs_grad() {
                        let full = binary_map_grad(&ad, sa, &bd, sb, os, &go, dfb);
                        Some(reduce_to_shape(&full, os, bsz))
                    } else {
                        None
                    };
                    (ga, gb)
                };
                if let Some(ga) = ga {
                    a2.accumulate_grad(&ga);
                }
                if let Some(gb) = gb {
                    b2.accumulate_grad(&gb);
                }
            });
        }
        Ok(out)
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_op("add", a, b, |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_op("sub", a, b, |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_op("mul", a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_op(
            "div",
            a,
            b,
            |x, y| x / y,
            |_, y| 1.0 / y,
            |x, y| -x / (y * y),
        )
    }

    /// df(x, y) is the local derivative expressed with input x and output y.
    fn unary_op(
        &self,
        x: &Tensor,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + Copy + 'static,
    ) -> Result<Tensor> {
        let shape = x.shape();
        let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
        let needs = x.needs_grad();
        let out = Tensor::from_vec(shape, data)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let contrib: Vec<f64> = {
                    let xd = x2.data();
                    let od = o2.data();
                    go.iter()
                        .zip(xd.iter().zip(od.iter()))
                        .map(|(&g, (&xv, &yv))| g * df(xv, yv))
                        .collect()
                };
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    pub fn relu(&self, x: &Tensor) -> Result<Tensor> {
        self.unary_op(x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        self.unary_op(x, |v| 1.0 / (1.0 + (-v).exp()), |_, y| y * (1.0 - y))
    }

    pub fn ln(&self, x: &Tensor) -> Result<Tensor> {
        self.unary_op(x, |v| v.ln(), |v, _| 1.0 / v)
    }

    pub fn sqrt(&self, x: &Tensor) -> Result<Tensor> {
        self.unary_op(x, |v| v.sqrt(), |_, y| 0.5 / y)
    }

    /// Clamp values to [lo, hi]; gradient passes only where unclamped.
    pub fn clamp(&self, x: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        self.unary_op(
            x,
            move |v| v.clamp(lo, hi),
            move |v, _| if v > lo && v < hi { 1.0 } else { 0.0 },
        )
    }

    /// scale * x + shift with constant coefficients.
    pub fn affine(&self, x: &Tensor, scale: f64, shift: f64) -> Result<Tensor> {
        self.unary_op(x, move |v| scale * v + shift, move |_, _| scale)
    }
}

fn binary_map_grad(
    a: &[f64],
    sa: BcStrides,
    b: &[f64],
    sb: BcStrides,
    out: Shape,
    go: &[f64],
    df: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut data = Vec::with_capacity(out.numel());
    let mut idx = 0;
    for n in 0..out.n {
        for c in 0..out.c {
            for h in 0..out.h {
                let ba = n * sa.n + c * sa.c + h * sa.h;
                let bb = n * sb.n + c * sb.c + h * sb.h;
                for w in 0..out.w {
                    data.push(go[idx] * df(a[ba + w * sa.w], b[bb + w * sb.w]));
                    idx += 1;
                }
            }
        }
    }
    data
}
