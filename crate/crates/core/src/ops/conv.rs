//! Direct 2D convolution with stride and zero padding.

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

/// Output extent for one spatial axis.
fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Range of output coordinates whose input coordinate i = o*stride + k - pad
/// falls inside [0, input).
#[inline]
fn valid_out_range(
    input: usize,
    k: usize,
    stride: usize,
    padding: usize,
    out: usize,
) -> (usize, usize) {
    let k = k as isize;
    let pad = padding as isize;
    let s = stride as isize;
    let lo = if pad > k { (pad - k + s - 1) / s } else { 0 };
    let max_i = input as isize - 1 + pad - k;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = (max_i / s + 1).min(out as isize);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

impl Tape {
    /// 2D convolution: x is (n, c_in, h, w), weight is (c_out, c_in, k_h, k_w)
    /// stored in the same rank-4 layout, bias is (1, c_out, 1, 1).
    pub fn conv2d(
        &self,
        x: &Tensor,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor> {
        let xs = x.shape();
        let ws = weight.shape();
        let bs = bias.shape();
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be at least 1"));
        }
        if xs.c != ws.c {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input has {} channels but kernel expects {} (kernel {}, input {})",
                    xs.c, ws.c, ws, xs
                ),
            ));
        }
        if bs != Shape::new(1, ws.n, 1, 1) {
            return Err(Error::shape(
                "conv2d",
                format!("bias must be 1x{}x1x1, got {}", ws.n, bs),
            ));
        }
        let oh = out_extent(xs.h, ws.h, stride, padding).ok_or_else(|| {
            Error::shape("conv2d", format!("kernel {} too large for input {}", ws, xs))
        })?;
        let ow = out_extent(xs.w, ws.w, stride, padding).ok_or_else(|| {
            Error::shape("conv2d", format!("kernel {} too large for input {}", ws, xs))
        })?;
        let os = Shape::new(xs.n, ws.n, oh, ow);

        let mut out = vec![0.0; os.numel()];
        {
            let xd = x.data();
            let wd = weight.data();
            let bd = bias.data();
            forward_kernel(&xd, xs, &wd, ws, &bd, &mut out, os, stride, padding);
        }
        let needs = x.needs_grad() || weight.needs_grad() || bias.needs_grad();
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, w2, b2, o2) = (x.clone(), weight.clone(), bias.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let (dx, dw, db) = {
                    let xd = x2.data();
                    let wd = w2.data();
                    backward_kernel(
                        &xd,
                        xs,
                        &wd,
                        ws,
                        &go,
                        os,
                        stride,
                        padding,
                        x2.needs_grad(),
                        w2.needs_grad(),
                        b2.needs_grad(),
                    )
                };
                if let Some(dx) = dx {
                    x2.accumulate_grad(&dx);
                }
                if let Some(dw) = dw {
                    w2.accumulate_grad(&dw);
                }
                if let Some(db) = db {
                    b2.accumulate_grad(&db);
                }
            });
        }
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_kernel(
    xd: &[f64],
    xs: Shape,
    wd: &[f64],
    ws: Shape,
    bd: &[f64],
    out: &mut [f64],
    os: Shape,
    stride: usize,
    padding: usize,
) {
    let (oh, ow) = (os.h, os.w);
    for n in 0..xs.n {
        for co in 0..ws.n {
            let out_base = os.index(n, co, 0, 0);
            let plane = &mut out[out_base..out_base + oh * ow];
            plane.fill(bd[co]);
            for ci in 0..xs.c {
                let x_base = xs.index(n, ci, 0, 0);
                for kh in 0..ws.h {
                    let (ylo, yhi) = valid_out_range(xs.h, kh, stride, padding, oh);
                    for kw in 0..ws.w {
                        let wv = wd[ws.index(co, ci, kh, kw)];
                        if wv == 0.0 {
                            continue;
                        }
                        let (xlo, xhi) = valid_out_range(xs.w, kw, stride, padding, ow);
                        for oy in ylo..yhi {
                            let iy = oy * stride + kh - padding;
                            let x_row = &xd[x_base + iy * xs.w..x_base + (iy + 1) * xs.w];
                            let o_row = &mut plane[oy * ow..(oy + 1) * ow];
                            for ox in xlo..xhi {
                                let ix = ox * stride + kw - padding;
                                o_row[ox] += wv * x_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn backward_kernel(
    xd: &[f64],
    xs: Shape,
    wd: &[f64],
    ws: Shape,
    go: &[f64],
    os: Shape,
    stride: usize,
    padding: usize,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let mut dx = if need_dx { Some(vec![0.0; xs.numel()]) } else { None };
    let mut dw = if need_dw { Some(vec![0.0; ws.numel()]) } else { None };
    let mut db = if need_db { Some(vec![0.0; ws.n]) } else { None };
    let (oh, ow) = (os.h, os.w);

    if let Some(db) = db.as_mut() {
        for n in 0..os.n {
            for co in 0..os.c {
                let base = os.index(n, co, 0, 0);
                db[co] += go[base..base + oh * ow].iter().sum::<f64>();
            }
        }
    }

    for n in 0..xs.n {
        for co in 0..ws.n {
            let go_base = os.index(n, co, 0, 0);
            for ci in 0..xs.c {
                let x_base = xs.index(n, ci, 0, 0);
                for kh in 0..ws.h {
                    let (ylo, yhi) = valid_out_range(xs.h, kh, stride, padding, oh);
                    for kw in 0..ws.w {
                        let (xlo, xhi) = valid_out_range(xs.w, kw, stride, padding, ow);
                        if xhi <= xlo || yhi <= ylo {
                            continue;
                        }
                        let widx = ws.index(co, ci, kh, kw);
                        let wv = wd[widx];
                        let mut wacc = 0.0;
                        for oy in ylo..yhi {
                            let iy = oy * stride + kh - padding;
                            let g_row = &go[go_base + oy * ow..go_base + (oy + 1) * ow];
                            if need_dw {
                                let x_row = &xd[x_base + iy * xs.w..x_base + (iy + 1) * xs.w];
                                let mut acc = 0.0;
                                for ox in xlo..xhi {
                                    acc += g_row[ox] * x_row[ox * stride + kw - padding];
                                }
                                wacc += acc;
                            }
                            if let Some(dx) = dx.as_mut() {
                                if wv != 0.0 {
                                    let dx_row =
                                        &mut dx[x_base + iy * xs.w..x_base + (iy + 1) * xs.w];
                                    for ox in xlo..xhi {
                                        dx_row[ox * stride + kw - padding] += wv * g_row[ox];
                                    }
                                }
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            dw[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_sum_counts_on_all_ones() {
        // 3x3 all-ones kernel on a 3x3 all-ones map with padding 1: the center
        // sees the full window (9), corners see a 2x2 window (4).
        let tape = Tape::new();
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let y = tape.conv2d(&x, &w, &b, 1, 1).unwrap();
        let d = y.to_vec();
        assert_eq!(d[y.shape().index(0, 0, 1, 1)], 9.0);
        assert_eq!(d[y.shape().index(0, 0, 0, 0)], 4.0);
        assert_eq!(d[y.shape().index(0, 0, 2, 2)], 4.0);
        assert_eq!(d[y.shape().index(0, 0, 0, 1)], 6.0);
    }

    #[test]
    fn one_by_one_kernel_selects_a_channel() {
        let tape = Tape::new();
        let xs = Shape::new(1, 3, 2, 2);
        let x = Tensor::from_fn(xs, |i| i as f64);
        // Single-output 1x1 kernel with a 1 at channel 1.
        let w = Tensor::from_vec(Shape::new(1, 3, 1, 1), vec![0.0, 1.0, 0.0]).unwrap();
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let y = tape.conv2d(&x, &w, &b, 1, 0).unwrap();
        let want: Vec<f64> = (4..8).map(|i| i as f64).collect();
        assert_eq!(y.to_vec(), want);
    }

    #[test]
    fn channel_mismatch_is_a_descriptive_error() {
        let tape = Tape::new();
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(Shape::new(2, 4, 3, 3));
        let b = Tensor::zeros(Shape::new(1, 2, 1, 1));
        let err = tape.conv2d(&x, &w, &b, 1, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "message was: {msg}");
    }

    #[test]
    fn strided_output_extent() {
        let tape = Tape::new();
        let x = Tensor::zeros(Shape::new(1, 1, 7, 7));
        let w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let y = tape.conv2d(&x, &w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 4, 4));
    }
}
