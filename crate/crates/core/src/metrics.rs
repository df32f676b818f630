//! Saliency evaluation: MAE, the F-measure family (max/mean/adaptive plus
//! PR and F curves over 256 thresholds), the E-measure family, and the
//! S-measure.
//!
//! Curves binarize the prediction as S >= t/255 for t = 0..255. The adaptive
//! threshold is min(2 * mean(S), 1). All scores land in [0, 1]; predictions
//! identical to the ground truth score 1 (0 for MAE).

use serde::Serialize;

use crate::error::{Error, Result};

pub const NUM_THRESHOLDS: usize = 256;
pub const BETA2: f64 = 0.3;
const EPS: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub s_measure: f64,
    pub f_max: f64,
    pub f_mean: f64,
    pub f_adp: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub e_adp: f64,
    pub mae: f64,
    pub pr_curve: Vec<(f64, f64)>,
    pub f_curve: Vec<f64>,
}

fn check_pair(op: &'static str, pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::shape(
            op,
            format!("prediction has {} values, ground truth {}", pred.len(), gt.len()),
        ));
    }
    Ok(())
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair("mae", pred, gt)?;
    let total: f64 = pred.iter().zip(gt).map(|(&p, &g)| (p - g).abs()).sum();
    Ok(total / pred.len() as f64)
}

/// Adaptive binarization threshold.
pub fn adaptive_threshold(pred: &[f64]) -> f64 {
    let mean = pred.iter().sum::<f64>() / pred.len() as f64;
    (2.0 * mean).min(1.0)
}

fn precision_recall_f(pred: &[f64], gt: &[f64], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &g) in pred.iter().zip(gt) {
        let b = p >= threshold;
        if b && g > 0.5 {
            tp += 1.0;
        } else if b {
            fp += 1.0;
        } else if g > 0.5 {
            fn_ += 1.0;
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let denom = BETA2 * precision + recall;
    let f = if denom > 0.0 {
        (1.0 + BETA2) * precision * recall / denom
    } else {
        0.0
    };
    (precision, recall, f)
}

pub struct FMeasureFamily {
    pub f_max: f64,
    pub f_mean: f64,
    pub f_adp: f64,
    pub pr_curve: Vec<(f64, f64)>,
    pub f_curve: Vec<f64>,
}

pub fn f_measure_family(pred: &[f64], gt: &[f64]) -> Result<FMeasureFamily> {
    check_pair("f_measure", pred, gt)?;
    let mut pr_curve = Vec::with_capacity(NUM_THRESHOLDS);
    let mut f_curve = Vec::with_capacity(NUM_THRESHOLDS);
    let mut f_max = 0.0f64;
    let mut f_sum = 0.0f64;
    for t in 0..NUM_THRESHOLDS {
        let threshold = t as f64 / 255.0;
        let (p, r, f) = precision_recall_f(pred, gt, threshold);
        pr_curve.push((p, r));
        f_curve.push(f);
        f_max = f_max.max(f);
        f_sum += f;
    }
    let (_, _, f_adp) = precision_recall_f(pred, gt, adaptive_threshold(pred));
    Ok(FMeasureFamily {
        f_max,
        f_mean: f_sum / NUM_THRESHOLDS as f64,
        f_adp,
        pr_curve,
        f_curve,
    })
}

/// Enhanced-alignment score of one binarized prediction against the mask.
fn alignment_score(binary: impl Fn(usize) -> f64, gt: &[f64]) -> f64 {
    let n = gt.len() as f64;
    let gt_mean = gt.iter().sum::<f64>() / n;
    let b_mean = (0..gt.len()).map(&binary).sum::<f64>() / n;
    if gt_mean == 0.0 {
        return 1.0 - b_mean;
    }
    if gt_mean == 1.0 {
        return b_mean;
    }
    let mut total = 0.0;
    for (i, &g) in gt.iter().enumerate() {
        let phi_g = g - gt_mean;
        let phi_b = binary(i) - b_mean;
        let mut denom = phi_g * phi_g + phi_b * phi_b;
        if denom == 0.0 {
            denom = EPS;
        }
        let xi = 2.0 * phi_g * phi_b / denom;
        let enhanced = (xi + 1.0) * (xi + 1.0) / 4.0;
        total += enhanced;
    }
    total / n
}

pub struct EMeasureFamily {
    pub e_max: f64,
    pub e_mean: f64,
    pub e_adp: f64,
}

pub fn e_measure_family(pred: &[f64], gt: &[f64]) -> Result<EMeasureFamily> {
    check_pair("e_measure", pred, gt)?;
    let mut e_max = 0.0f64;
    let mut e_sum = 0.0f64;
    for t in 0..NUM_THRESHOLDS {
        let threshold = t as f64 / 255.0;
        let e = alignment_score(|i| if pred[i] >= threshold { 1.0 } else { 0.0 }, gt);
        e_max = e_max.max(e);
        e_sum += e;
    }
    let adp = adaptive_threshold(pred);
    let e_adp = alignment_score(|i| if pred[i] >= adp { 1.0 } else { 0.0 }, gt);
    Ok(EMeasureFamily {
        e_max,
        e_mean: e_sum / NUM_THRESHOLDS as f64,
        e_adp,
    })
}

fn mean_and_sample_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    if n <= 1 {
        return (mean, 0.0, n);
    }
    let var: f64 = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt(), n)
}

fn object_score(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mean, std, n) = mean_and_sample_std(values);
    if n == 0 {
        return 0.0;
    }
    2.0 * mean / (mean * mean + 1.0 + 2.0 * std + EPS)
}

/// SSIM-style similarity of one region pair with the reference branch rules:
/// both sides flat and equal scores 1, zero covariance with structure scores 0.
fn region_similarity(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let x_mean = pred.iter().sum::<f64>() / n as f64;
    let y_mean = gt.iter().sum::<f64>() / n as f64;
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut sig_x = 0.0;
    let mut sig_y = 0.0;
    let mut sig_xy = 0.0;
    for (&x, &y) in pred.iter().zip(gt) {
        sig_x += (x - x_mean) * (x - x_mean);
        sig_y += (y - y_mean) * (y - y_mean);
        sig_xy += (x - x_mean) * (y - y_mean);
    }
    sig_x /= denom;
    sig_y /= denom;
    sig_xy /= denom;
    let alpha = 4.0 * x_mean * y_mean * sig_xy;
    let beta = (x_mean * x_mean + y_mean * y_mean) * (sig_x + sig_y);
    if alpha != 0.0 {
        (2.0 * x_mean * y_mean) * (2.0 * sig_xy + EPS) / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn gather_block(map: &[f64], w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for r in rows {
        for c in cols.clone() {
            out.push(map[r * w + c]);
        }
    }
    out
}

pub fn s_measure(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<f64> {
    check_pair("s_measure", pred, gt)?;
    if pred.len() != h * w {
        return Err(Error::shape(
            "s_measure",
            format!("{} values for {h}x{w}", pred.len()),
        ));
    }
    let alpha = 0.5;
    let mu = gt.iter().sum::<f64>() / gt.len() as f64;
    if mu == 0.0 {
        return Ok(1.0 - pred.iter().sum::<f64>() / pred.len() as f64);
    }
    if mu == 1.0 {
        return Ok(pred.iter().sum::<f64>() / pred.len() as f64);
    }

    // Object-aware term: foreground statistics of S on G = 1, background
    // statistics of 1 - S on G = 0.
    let fg = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g > 0.5)
        .map(|(&p, _)| p);
    let bg = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g <= 0.5)
        .map(|(&p, _)| 1.0 - p);
    let s_object = mu * object_score(fg) + (1.0 - mu) * object_score(bg);

    // Region-aware term: split both maps into four blocks at the foreground
    // centroid and combine SSIM-style block scores by pixel fraction.
    let mut row_sum = 0.0;
    let mut col_sum = 0.0;
    let mut count = 0.0;
    for r in 0..h {
        for c in 0..w {
            if gt[r * w + c] > 0.5 {
                row_sum += r as f64;
                col_sum += c as f64;
                count += 1.0;
            }
        }
    }
    let cy = (row_sum / count).round() as usize;
    let cx = (col_sum / count).round() as usize;
    let row_split = (cy + 1).min(h);
    let col_split = (cx + 1).min(w);
    let total = (h * w) as f64;
    let mut s_region = 0.0;
    for (rows, cols) in [
        (0..row_split, 0..col_split),
        (0..row_split, col_split..w),
        (row_split..h, 0..col_split),
        (row_split..h, col_split..w),
    ] {
        let area = rows.len() * cols.len();
        if area == 0 {
            continue;
        }
        let pb = gather_block(pred, w, rows.clone(), cols.clone());
        let gb = gather_block(gt, w, rows, cols);
        s_region += (area as f64 / total) * region_similarity(&pb, &gb);
    }

    Ok((alpha * s_object + (1.0 - alpha) * s_region).clamp(0.0, 1.0))
}

/// Full per-image evaluation.
pub fn evaluate(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Result<MetricReport> {
    let f = f_measure_family(pred, gt)?;
    let e = e_measure_family(pred, gt)?;
    Ok(MetricReport {
        s_measure: s_measure(pred, gt, h, w)?,
        f_max: f.f_max,
        f_mean: f.f_mean,
        f_adp: f.f_adp,
        e_max: e.e_max,
        e_mean: e.e_mean,
        e_adp: e.e_adp,
        mae: mae(pred, gt)?,
        pr_curve: f.pr_curve,
        f_curve: f.f_curve,
    })
}

/// Arithmetic mean of per-image reports; curves averaged pointwise.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Data("cannot aggregate an empty report set".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut pr_curve = vec![(0.0, 0.0); NUM_THRESHOLDS];
    let mut f_curve = vec![0.0; NUM_THRESHOLDS];
    for r in reports {
        for (acc, &(p, rr)) in pr_curve.iter_mut().zip(&r.pr_curve) {
            acc.0 += p / n;
            acc.1 += rr / n;
        }
        for (acc, &f) in f_curve.iter_mut().zip(&r.f_curve) {
            *acc += f / n;
        }
    }
    Ok(MetricReport {
        s_measure: mean(|r| r.s_measure),
        f_max: mean(|r| r.f_max),
        f_mean: mean(|r| r.f_mean),
        f_adp: mean(|r| r.f_adp),
        e_max: mean(|r| r.e_max),
        e_mean: mean(|r| r.e_mean),
        e_adp: mean(|r| r.e_adp),
        mae: mean(|r| r.mae),
        pr_curve,
        f_curve,
    })
}

impl MetricReport {
    /// Human-readable "key: value" lines.
    pub fn to_text(&self) -> String {
        format!(
            "s_measure: {:.6}\nf_max: {:.6}\nf_mean: {:.6}\nf_adp: {:.6}\ne_max: {:.6}\ne_mean: {:.6}\ne_adp: {:.6}\nmae: {:.6}\n",
            self.s_measure,
            self.f_max,
            self.f_mean,
            self.f_adp,
            self.e_max,
            self.e_mean,
            self.e_adp,
            self.mae
        )
    }

    pub fn pr_curve_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for (t, (p, r)) in self.pr_curve.iter().enumerate() {
            out.push_str(&format!("{t},{p},{r}\n"));
        }
        out
    }

    pub fn f_curve_csv(&self) -> String {
        let mut out = String::from("threshold,f_measure\n");
        for (t, f) in self.f_curve.iter().enumerate() {
            out.push_str(&format!("{t},{f}\n"));
        }
        out
    }
}
