//! Partial-decoder saliency predictor and the hybrid IoU + BCE loss.
//!
//! The decoder aggregates the three enhanced levels through a multiplicative
//! cascade with progressive upsampling: the deepest branch gates the middle
//! one, both gate the shallow one, and a concatenation path re-joins the
//! refined branches before the 1x1 prediction head. The initial map comes out
//! at 1/4 of the input resolution and is restored by a 4x bilinear upsample.

use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::optim::Parameter;
use crate::tape::Tape;
use crate::tensor::Tensor;

struct Conv {
    weight: Parameter,
    bias: Parameter,
    padding: usize,
}

impl Conv {
    fn new(init: &mut Initializer, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        Conv {
            weight: init.conv_weight(&format!("{name}/weight"), c_out, c_in, k, k, None),
            bias: init.conv_bias(&format!("{name}/bias"), c_out),
            padding: k / 2,
        }
    }

    fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        tape.conv2d(x, &self.weight.value, &self.bias.value, 1, self.padding)
    }
}

pub struct SaliencyPredictor {
    deep: Conv,
    deep_to_mid: Conv,
    mid: Conv,
    deep_to_shallow: Conv,
    mid_to_shallow: Conv,
    shallow: Conv,
    join_mid: Conv,
    join_all: Conv,
    head: Conv,
}

impl SaliencyPredictor {
    pub fn new(init: &mut Initializer, prefix: &str, channels: usize) -> Self {
        let c = channels;
        SaliencyPredictor {
            deep: Conv::new(init, &format!("{prefix}/deep"), c, c, 3),
            deep_to_mid: Conv::new(init, &format!("{prefix}/deep_to_mid"), c, c, 3),
            mid: Conv::new(init, &format!("{prefix}/mid"), c, c, 3),
            deep_to_shallow: Conv::new(init, &format!("{prefix}/deep_to_shallow"), c, c, 3),
            mid_to_shallow: Conv::new(init, &format!("{prefix}/mid_to_shallow"), c, c, 3),
            shallow: Conv::new(init, &format!("{prefix}/shallow"), c, c, 3),
            join_mid: Conv::new(init, &format!("{prefix}/join_mid"), 2 * c, c, 3),
            join_all: Conv::new(init, &format!("{prefix}/join_all"), 2 * c, c, 3),
            head: Conv::new(init, &format!("{prefix}/head"), c, 1, 1),
        }
    }

    /// f_low at H/4, f_mid at H/16, f_high at H/32 -> initial map at H/4.
    pub fn decode(
        &self,
        tape: &Tape,
        f_low: &Tensor,
        f_mid: &Tensor,
        f_high: &Tensor,
    ) -> Result<Tensor> {
        let (sl, sm, sh) = (f_low.shape(), f_mid.shape(), f_high.shape());
        if sm.h != 2 * sh.h || sm.w != 2 * sh.w || sl.h != 4 * sm.h || sl.w != 4 * sm.w {
            return Err(Error::shape(
                "decode",
                format!("inconsistent pyramid resolutions: {sl}, {sm}, {sh}"),
            ));
        }
        let b4 = self.deep.forward(tape, f_high)?;
        let gate_mid = tape.bilinear_upsample(&self.deep_to_mid.forward(tape, &b4)?, 2)?;
        let b3 = self.mid.forward(tape, &tape.mul(f_mid, &gate_mid)?)?;
        let gate_a = tape.bilinear_upsample(&self.deep_to_shallow.forward(tape, &b4)?, 8)?;
        let gate_b = tape.bilinear_upsample(&self.mid_to_shallow.forward(tape, &b3)?, 4)?;
        let gated = tape.mul(&tape.mul(f_low, &gate_a)?, &gate_b)?;
        let b2 = self.shallow.forward(tape, &gated)?;
        let merged_mid = tape.concat_channels(&[b3.clone(), tape.bilinear_upsample(&b4, 2)?])?;
        let up_mid = tape.bilinear_upsample(&self.join_mid.forward(tape, &merged_mid)?, 4)?;
        let merged = tape.concat_channels(&[b2, up_mid])?;
        let d = self.join_all.forward(tape, &merged)?;
        let logits = self.head.forward(tape, &d)?;
        tape.sigmoid(&logits)
    }

    /// Restore the initial map to input resolution.
    pub fn finalize(&self, tape: &Tape, s: &Tensor) -> Result<Tensor> {
        tape.bilinear_upsample(s, 4)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for conv in [
            &mut self.deep,
            &mut self.deep_to_mid,
            &mut self.mid,
            &mut self.deep_to_shallow,
            &mut self.mid_to_shallow,
            &mut self.shallow,
            &mut self.join_mid,
            &mut self.join_all,
            &mut self.head,
        ] {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
        }
        out
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for conv in [
            &self.deep,
            &self.deep_to_mid,
            &self.mid,
            &self.deep_to_shallow,
            &self.mid_to_shallow,
            &self.shallow,
            &self.join_mid,
            &self.join_all,
            &self.head,
        ] {
            out.push(&conv.weight);
            out.push(&conv.bias);
        }
        out
    }
}

/// Clamp bound applied to predictions before the BCE log terms.
pub const LOG_CLAMP: f64 = 1e-7;

/// Binary cross-entropy, averaged over every pixel of the batch.
pub fn bce_loss(tape: &Tape, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_pair("bce_loss", pred, target)?;
    let s = tape.clamp(pred, LOG_CLAMP, 1.0 - LOG_CLAMP)?;
    let pos = tape.mul(target, &tape.ln(&s)?)?;
    let neg_target = tape.affine(target, -1.0, 1.0)?;
    let neg = tape.mul(&neg_target, &tape.ln(&tape.affine(&s, -1.0, 1.0)?)?)?;
    let mean = tape.mean_all(&tape.add(&pos, &neg)?)?;
    tape.affine(&mean, -1.0, 0.0)
}

/// Soft IoU loss with +1 smoothing, averaged per image over the batch.
pub fn iou_loss(tape: &Tape, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_pair("iou_loss", pred, target)?;
    let inter = tape.sum_per_image(&tape.mul(pred, target)?)?;
    let p_sum = tape.sum_per_image(pred)?;
    let t_sum = tape.sum_per_image(target)?;
    let union = tape.sub(&tape.add(&p_sum, &t_sum)?, &inter)?;
    let ratio = tape.div(&tape.affine(&inter, 1.0, 1.0)?, &tape.affine(&union, 1.0, 1.0)?)?;
    tape.affine(&tape.mean_all(&ratio)?, -1.0, 1.0)
}

/// Total training loss: IoU + BCE.
pub fn hybrid_loss(tape: &Tape, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let iou = iou_loss(tape, pred, target)?;
    let bce = bce_loss(tape, pred, target)?;
    tape.add(&iou, &bce)
}

fn check_pair(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            op,
            format!("prediction {} vs ground truth {}", pred.shape(), target.shape()),
        ));
    }
    if !pred.iter_finite() || !target.iter_finite() {
        return Err(Error::Numerical(format!("{op} received non-finite values")));
    }
    Ok(())
}
