//! Batched matrix multiplication and row softmax over 2D views.
//!
//! A 2D view is a rank-4 tensor with c = 1: (n, 1, p, q) holds one p-by-q
//! matrix per batch item.

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

impl Tape {
    /// (n,1,p,q) x (n,1,q,r) -> (n,1,p,r).
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.c != 1 || sb.c != 1 {
            return Err(Error::shape(
                "matmul",
                format!("expects 2D views (c = 1), got {sa} and {sb}"),
            ));
        }
        if sa.n != sb.n {
            return Err(Error::shape(
                "matmul",
                format!("batch sizes differ: {} vs {}", sa.n, sb.n),
            ));
        }
        if sa.w != sb.h {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions differ: {sa} vs {sb}"),
            ));
        }
        let (p, q, r) = (sa.h, sa.w, sb.w);
        let os = Shape::new(sa.n, 1, p, r);
        let mut out = vec![0.0; os.numel()];
        {
            let ad = a.data();
            let bd = b.data();
            for n in 0..sa.n {
                let abase = n * p * q;
                let bbase = n * q * r;
                let obase = n * p * r;
                for i in 0..p {
                    let a_row = &ad[abase + i * q..abase + (i + 1) * q];
                    let o_row = &mut out[obase + i * r..obase + (i + 1) * r];
                    for (k, &av) in a_row.iter().enumerate() {
                        if av == 0.0 {
                            continue;
                        }
                        let b_row = &bd[bbase + k * r..bbase + (k + 1) * r];
                        for (ov, &bv) in o_row.iter_mut().zip(b_row) {
                            *ov += av * bv;
                        }
                    }
                }
            }
        }
        let needs = a.needs_grad() || b.needs_grad();
        let out = Tensor::from_vec(os, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (a2, b2, o2) = (a.clone(), b.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let (ga, gb) = {
                    let ad = a2.data();
                    let bd = b2.data();
                    let mut ga = if a2.needs_grad() { Some(vec![0.0; sa.numel()]) } else { None };
                    let mut gb = if b2.needs_grad() { Some(vec![0.0; sb.numel()]) } else { None };
                    for n in 0..sa.n {
                        let abase = n * p * q;
                        let bbase = n * q * r;
                        let obase = n * p * r;
                        if let Some(ga) = ga.as_mut() {
                            // dA[i][k] = dot(dC row i, B row k)
                            for i in 0..p {
                                let g_row = &go[obase + i * r..obase + (i + 1) * r];
                                let ga_row = &mut ga[abase + i * q..abase + (i + 1) * q];
                                for (k, gav) in ga_row.iter_mut().enumerate() {
                                    let b_row = &bd[bbase + k * r..bbase + (k + 1) * r];
                                    *gav += g_row
                                        .iter()
                                        .zip(b_row)
                                        .map(|(&g, &bv)| g * bv)
                                        .sum::<f64>();
                                }
                            }
                        }
                        if let Some(gb) = gb.as_mut() {
                            // dB row k += A[i][k] * dC row i
                            for i in 0..p {
                                let g_row = &go[obase + i * r..obase + (i + 1) * r];
                                let a_row = &ad[abase + i * q..abase + (i + 1) * q];
                                for (k, &av) in a_row.iter().enumerate() {
                                    if av == 0.0 {
                                        continue;
                                    }
                                    let gb_row = &mut gb[bbase + k * r..bbase + (k + 1) * r];
                                    for (gbv, &g) in gb_row.iter_mut().zip(g_row) {
                                        *gbv += av * g;
                                    }
                                }
                            }
                        }
                    }
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

    /// Numerically stable softmax along the last dimension: every run of w
    /// contiguous values is one row.
    pub fn softmax_rows(&self, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        let w = shape.w;
        if w == 0 {
            return Err(Error::shape("softmax_rows", "empty rows"));
        }
        let mut out = vec![0.0; shape.numel()];
        {
            let xd = x.data();
            if xd.iter().any(|v| v.is_nan()) {
                return Err(Error::Numerical("softmax_rows received NaN input".into()));
            }
            for (row_in, row_out) in xd.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
                let m = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (o, &v) in row_out.iter_mut().zip(row_in) {
                    let e = (v - m).exp();
                    *o = e;
                    sum += e;
                }
                for o in row_out.iter_mut() {
                    *o /= sum;
                }
            }
        }
        let needs = x.needs_grad();
        let out = Tensor::from_vec(shape, out)?.requires_grad(needs);
        if self.is_recording() && needs {
            let (x2, o2) = (x.clone(), out.clone());
            self.record(&out, move || {
                let go = o2.grad_vec().expect("output grad present");
                let contrib: Vec<f64> = {
                    let od = o2.data();
                    let mut contrib = vec![0.0; od.len()];
                    for ((y_row, g_row), c_row) in od
                        .chunks_exact(w)
                        .zip(go.chunks_exact(w))
                        .zip(contrib.chunks_exact_mut(w))
                    {
                        let dot: f64 = y_row.iter().zip(g_row).map(|(&y, &g)| y * g).sum();
                        for ((c, &y), &g) in c_row.iter_mut().zip(y_row).zip(g_row) {
                            *c = y * (g - dot);
                        }
                    }
                    contrib
                };
                x2.accumulate_grad(&contrib);
            });
        }
        Ok(out)
    }
}
