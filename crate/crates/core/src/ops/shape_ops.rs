//! Layout operations: reshape, transpose, channel concat/split/permute, and
//! bilinear upsampling (align-corners-false).

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

impl Tape {
    /// Row-major relayout into any rank-4 shape with the same element count.
    pub fn reshape(&self, x: &Tensor, new_shape: Shape) -> Result<Tensor> {
        let shape = x.shape();
        if new_shape.numel() != shape.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot reshape {shape} into {new_shape}"),
            ));
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(new_shape, x.to_vec())?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                x2.accumulate_grad(&go);
            });
        }
        Ok(out)
    }

    /// Swap the last two dimensions: (n,c,h,w) -> (n,c,w,h).
    pub fn transpose2d(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let os = Shape::new(shape.n, shape.c, shape.w, shape.h);
        let mut out = vec![0.0; os.numel()];
        {
            let xd = x.data();
            transpose_last2(&xd, shape, &mut out);
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                transpose_last2(&go, os, &mut contrib);
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Concatenate along the channel dimension.
    pub fn concat_channels(&self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::shape("concat_channels", "no operands"));
        }
        let first = parts[0].shape();
        let mut total_c = 0;
        for p in parts {
            let s = p.shape();
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("operand {s} does not match {first} outside channels"),
                ));
            }
            total_c += s.c;
        }
        let os = Shape::new(first.n, total_c, first.h, first.w);
        let hw = first.hw();
        let mut out = vec![0.0; os.numel()];
        for n in 0..os.n {
            let mut c_off = 0;
            for p in parts {
                let s = p.shape();
                let pd = p.data();
                let src = &pd[s.index(n, 0, 0, 0)..s.index(n, 0, 0, 0) + s.c * hw];
                let dst_base = os.index(n, c_off, 0, 0);
                out[dst_base..dst_base + s.c * hw].copy_from_slice(src);
                c_off += s.c;
            }
        }
        let needs = parts.iter().any(|p| p.needs_grad());
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let parts2: Vec<Tensor> = parts.to_vec();
            let o2 = out.clone();
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut c_off = 0;
                for p in &parts2 {
                    let s = p.shape();
                    if p.needs_grad() {
                        let mut contrib = vec![0.0; s.numel()];
                        for n in 0..os.n {
                            let src_base = os.index(n, c_off, 0, 0);
                            let dst_base = s.index(n, 0, 0, 0);
                            contrib[dst_base..dst_base + s.c * hw]
                                .copy_from_slice(&go[src_base..src_base + s.c * hw]);
                        }
                        p.accumulate_grad(&contrib);
                    }
                    c_off += s.c;
                }
            });
        }
        Ok(out)
    }

    /// Select channels [start, start+len).
    pub fn slice_channels(&self, x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
        let shape = x.shape();
        if start + len > shape.c || len == 0 {
            return Err(Error::shape(
                "slice_channels",
                format!("range {start}..{} out of {} channels", start + len, shape.c),
            ));
        }
        let os = Shape::new(shape.n, len, shape.h, shape.w);
        let hw = shape.hw();
        let mut out = vec![0.0; os.numel()];
        {
            let xd = x.data();
            for n in 0..shape.n {
                let src = shape.index(n, start, 0, 0);
                let dst = os.index(n, 0, 0, 0);
                out[dst..dst + len * hw].copy_from_slice(&xd[src..src + len * hw]);
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
                    let dst = shape.index(n, start, 0, 0);
                    let src = os.index(n, 0, 0, 0);
                    contrib[dst..dst + len * hw].copy_from_slice(&go[src..src + len * hw]);
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Split into consecutive channel groups; exact inverse of concat_channels.
    pub fn split_channels(&self, x: &Tensor, group_sizes: &[usize]) -> Result<Vec<Tensor>> {
        let total: usize = group_sizes.iter().sum();
        if total != x.shape().c {
            return Err(Error::shape(
                "split_channels",
                format!("groups sum to {total} but input has {} channels", x.shape().c),
            ));
        }
        let mut start = 0;
        let mut parts = Vec::with_capacity(group_sizes.len());
        for &g in group_sizes {
            parts.push(self.slice_channels(x, start, g)?);
            start += g;
        }
        Ok(parts)
    }

    /// Reorder channels: out channel i = in channel perm[i].
    pub fn permute_channels(&self, x: &Tensor, perm: &[usize]) -> Result<Tensor> {
        let shape = x.shape();
        if perm.len() != shape.c {
            return Err(Error::shape(
                "permute_channels",
                format!("permutation length {} != {} channels", perm.len(), shape.c),
            ));
        }
        let mut seen = vec![false; shape.c];
        for &p in perm {
            if p >= shape.c || seen[p] {
                return Err(Error::shape("permute_channels", "not a permutation"));
            }
            seen[p] = true;
        }
        let hw = shape.hw();
        let mut out = vec![0.0; shape.numel()];
        {
            let xd = x.data();
            for n in 0..shape.n {
                for (dst_c, &src_c) in perm.iter().enumerate() {
                    let src = shape.index(n, src_c, 0, 0);
                    let dst = shape.index(n, dst_c, 0, 0);
                    out[dst..dst + hw].copy_from_slice(&xd[src..src + hw]);
                }
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(shape, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let perm2 = perm.to_vec();
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let mut contrib = vec![0.0; shape.numel()];
                for n in 0..shape.n {
                    for (dst_c, &src_c) in perm2.iter().enumerate() {
                        let src = shape.index(n, dst_c, 0, 0);
                        let dst = shape.index(n, src_c, 0, 0);
                        contrib[dst..dst + hw].copy_from_slice(&go[src..src + hw]);
                    }
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }

    /// Bilinear upsampling by an integer factor in {2, 4, 8}, using the
    /// align-corners-false convention with edge clamping.
    pub fn bilinear_upsample(&self, x: &Tensor, factor: usize) -> Result<Tensor> {
        if !matches!(factor, 2 | 4 | 8) {
            return Err(Error::shape(
                "bilinear_upsample",
                format!("unsupported factor {factor}, expected 2, 4, or 8"),
            ));
        }
        let shape = x.shape();
        let os = Shape::new(shape.n, shape.c, shape.h * factor, shape.w * factor);
        let ytab = axis_table(shape.h, factor);
        let xtab = axis_table(shape.w, factor);
        let mut out = vec![0.0; os.numel()];
        {
            let xd = x.data();
            for n in 0..shape.n {
                for c in 0..shape.c {
                    let ibase = shape.index(n, c, 0, 0);
                    let obase = os.index(n, c, 0, 0);
                    for (oy, &(y0, y1, fy)) in ytab.iter().enumerate() {
                        let r0 = &xd[ibase + y0 * shape.w..ibase + y0 * shape.w + shape.w];
                        let r1 = &xd[ibase + y1 * shape.w..ibase + y1 * shape.w + shape.w];
                        let orow = &mut out[obase + oy * os.w..obase + (oy + 1) * os.w];
                        for (ox, &(x0, x1, fx)) in xtab.iter().enumerate() {
                            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                            let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                            orow[ox] = top * (1.0 - fy) + bot * fy;
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
                let ytab = axis_table(shape.h, factor);
                let xtab = axis_table(shape.w, factor);
                let mut contrib = vec![0.0; shape.numel()];
                for n in 0..shape.n {
                    for c in 0..shape.c {
                        let ibase = shape.index(n, c, 0, 0);
                        let obase = os.index(n, c, 0, 0);
                        for (oy, &(y0, y1, fy)) in ytab.iter().enumerate() {
                            let grow = &go[obase + oy * os.w..obase + (oy + 1) * os.w];
                            for (ox, &(x0, x1, fx)) in xtab.iter().enumerate() {
                                let g = grow[ox];
                                contrib[ibase + y0 * shape.w + x0] += g * (1.0 - fy) * (1.0 - fx);
                                contrib[ibase + y0 * shape.w + x1] += g * (1.0 - fy) * fx;
                                contrib[ibase + y1 * shape.w + x0] += g * fy * (1.0 - fx);
                                contrib[ibase + y1 * shape.w + x1] += g * fy * fx;
                            }
                        }
                    }
                }
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }
}

fn transpose_last2(src: &[f64], s: Shape, dst: &mut [f64]) {
    for nc in 0..s.n * s.c {
        let base = nc * s.h * s.w;
        for i in 0..s.h {
            for j in 0..s.w {
                dst[base + j * s.h + i] = src[base + i * s.w + j];
            }
        }
    }
}

/// Per output index: (low source, high source, fractional weight of high).
fn axis_table(in_size: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let mut table = Vec::with_capacity(in_size * factor);
    for o in 0..in_size * factor {
        let src = (o as f64 + 0.5) / factor as f64 - 0.5;
        let floor = src.floor();
        let frac = src - floor;
        let i0 = floor.max(0.0) as usize;
        let i0 = i0.min(in_size - 1);
        let i1 = (floor + 1.0).max(0.0) as usize;
        let i1 = i1.min(in_size - 1);
        table.push((i0, i1, frac));
    }
    table
}
