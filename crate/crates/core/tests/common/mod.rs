//! Shared test-only oracles: independent reimplementations of the metric
//! formulas with flat loops, used by both the metric oracle tests and the
//! acceptance suite. Nothing here calls into the library's metric code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-8;
pub const BETA2: f64 = 0.3;

pub struct Fixture {
    pub name: &'static str,
    pub h: usize,
    pub w: usize,
    pub pred: Vec<f64>,
    pub gt: Vec<f64>,
}

pub fn fixtures() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let rand_pred: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut rng41 = ChaCha8Rng::seed_from_u64(41);
    let rand8: Vec<f64> = (0..64).map(|_| rng41.gen_range(0.0..1.0)).collect();
    let mut square_gt = vec![0.0; 64];
    for r in 2..5 {
        for c in 3..6 {
            square_gt[r * 8 + c] = 1.0;
        }
    }
    let mut rng43 = ChaCha8Rng::seed_from_u64(43);
    let square_pred: Vec<f64> = square_gt
        .iter()
        .map(|&g| (g * 0.8 + rng43.gen_range(0.0f64..0.3)).clamp(0.0, 1.0))
        .collect();
    vec![
        Fixture {
            name: "checker4",
            h: 4,
            w: 4,
            pred: (0..16).map(|i| ((i * 37) % 100) as f64 / 99.0).collect(),
            gt: (0..16).map(|i| (i % 2) as f64).collect(),
        },
        Fixture {
            name: "quantized_levels",
            h: 4,
            w: 4,
            pred: (0..16).map(|i| [0.2, 0.4, 0.6, 0.8][i % 4]).collect(),
            gt: (0..16).map(|i| ((i / 4) % 2) as f64).collect(),
        },
        Fixture {
            name: "random_seed37",
            h: 4,
            w: 4,
            pred: rand_pred,
            gt: (0..16).map(|i| ((i * 7) % 5 < 2) as u8 as f64).collect(),
        },
        Fixture {
            name: "all_zero_gt",
            h: 4,
            w: 4,
            pred: (0..16).map(|i| i as f64 / 20.0).collect(),
            gt: vec![0.0; 16],
        },
        Fixture {
            name: "all_one_gt",
            h: 4,
            w: 4,
            pred: (0..16).map(|i| 0.5 + i as f64 / 40.0).collect(),
            gt: vec![1.0; 16],
        },
        Fixture {
            name: "square8_seed43",
            h: 8,
            w: 8,
            pred: square_pred,
            gt: square_gt,
        },
        Fixture {
            name: "random8_seed41",
            h: 8,
            w: 8,
            pred: rand8,
            gt: (0..64).map(|i| ((i * 13) % 7 < 3) as u8 as f64).collect(),
        },
    ]
}

pub fn oracle_mae(pred: &[f64], gt: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..pred.len() {
        acc += (pred[i] - gt[i]).abs();
    }
    acc / pred.len() as f64
}

pub fn oracle_prf(pred: &[f64], gt: &[f64], thr: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fng) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        let b = pred[i] >= thr;
        let g = gt[i] > 0.5;
        if b && g {
            tp += 1.0;
        }
        if b && !g {
            fp += 1.0;
        }
        if !b && g {
            fng += 1.0;
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fng > 0.0 { tp / (tp + fng) } else { 0.0 };
    let f = if BETA2 * p + r > 0.0 {
        (1.0 + BETA2) * p * r / (BETA2 * p + r)
    } else {
        0.0
    };
    (p, r, f)
}

pub fn oracle_adaptive(pred: &[f64]) -> f64 {
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    (2.0 * mean).min(1.0)
}

pub fn oracle_e(pred: &[f64], gt: &[f64], thr: f64) -> f64 {
    let n = pred.len() as f64;
    let mut g_mean = 0.0;
    let mut b_mean = 0.0;
    for i in 0..pred.len() {
        g_mean += gt[i];
        b_mean += if pred[i] >= thr { 1.0 } else { 0.0 };
    }
    g_mean /= n;
    b_mean /= n;
    if g_mean == 0.0 {
        return 1.0 - b_mean;
    }
    if g_mean == 1.0 {
        return b_mean;
    }
    let mut total = 0.0;
    for i in 0..pred.len() {
        let b = if pred[i] >= thr { 1.0 } else { 0.0 };
        let pg = gt[i] - g_mean;
        let pb = b - b_mean;
        let mut den = pg * pg + pb * pb;
        if den == 0.0 {
            den = EPS;
        }
        let xi = 2.0 * pg * pb / den;
        total += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    total / n
}

pub fn oracle_s(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let n = (h * w) as f64;
    let mu = gt.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return 1.0 - pred.iter().sum::<f64>() / n;
    }
    if mu == 1.0 {
        return pred.iter().sum::<f64>() / n;
    }
    let stats = |vals: &[f64]| -> (f64, f64) {
        let k = vals.len();
        if k == 0 {
            return (0.0, 0.0);
        }
        let mean = vals.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return (mean, 0.0);
        }
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
        (mean, var.sqrt())
    };
    let fg: Vec<f64> = (0..h * w).filter(|&i| gt[i] > 0.5).map(|i| pred[i]).collect();
    let bg: Vec<f64> = (0..h * w)
        .filter(|&i| gt[i] <= 0.5)
        .map(|i| 1.0 - pred[i])
        .collect();
    let (fx, fs) = stats(&fg);
    let (bx, bs) = stats(&bg);
    let o_fg = 2.0 * fx / (fx * fx + 1.0 + 2.0 * fs + EPS);
    let o_bg = 2.0 * bx / (bx * bx + 1.0 + 2.0 * bs + EPS);
    let s_object = mu * o_fg + (1.0 - mu) * o_bg;

    let mut rs = 0.0;
    let mut cs = 0.0;
    let mut cnt = 0.0;
    for r in 0..h {
        for c in 0..w {
            if gt[r * w + c] > 0.5 {
                rs += r as f64;
                cs += c as f64;
                cnt += 1.0;
            }
        }
    }
    let cy = (rs / cnt).round() as usize + 1;
    let cx = (cs / cnt).round() as usize + 1;
    let ssim = |pb: &[f64], gb: &[f64]| -> f64 {
        let k = pb.len();
        let x: f64 = pb.iter().sum::<f64>() / k as f64;
        let y: f64 = gb.iter().sum::<f64>() / k as f64;
        let den = if k > 1 { (k - 1) as f64 } else { 1.0 };
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxy = 0.0;
        for i in 0..k {
            sx += (pb[i] - x) * (pb[i] - x);
            sy += (gb[i] - y) * (gb[i] - y);
            sxy += (pb[i] - x) * (gb[i] - y);
        }
        sx /= den;
        sy /= den;
        sxy /= den;
        let alpha = 4.0 * x * y * sxy;
        let beta = (x * x + y * y) * (sx + sy);
        if alpha != 0.0 {
            (2.0 * x * y) * (2.0 * sxy + EPS) / (beta + EPS)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let mut s_region = 0.0;
    for (r0, r1, c0, c1) in [
        (0, cy.min(h), 0, cx.min(w)),
        (0, cy.min(h), cx.min(w), w),
        (cy.min(h), h, 0, cx.min(w)),
        (cy.min(h), h, cx.min(w), w),
    ] {
        if r1 <= r0 || c1 <= c0 {
            continue;
        }
        let mut pb = Vec::new();
        let mut gb = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                pb.push(pred[r * w + c]);
                gb.push(gt[r * w + c]);
            }
        }
        s_region += (pb.len() as f64 / n) * ssim(&pb, &gb);
    }
    (0.5 * s_object + 0.5 * s_region).clamp(0.0, 1.0)
}
