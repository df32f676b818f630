//! Dihedral augmentation: the eight symmetries of the square, applied
//! identically to image and mask so ground truth stays exact.

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentOp {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    HFlip,
    HFlipRot90,
    HFlipRot180,
    HFlipRot270,
}

pub const ALL_OPS: [AugmentOp; 8] = [
    AugmentOp::Identity,
    AugmentOp::Rot90,
    AugmentOp::Rot180,
    AugmentOp::Rot270,
    AugmentOp::HFlip,
    AugmentOp::HFlipRot90,
    AugmentOp::HFlipRot180,
    AugmentOp::HFlipRot270,
];

impl AugmentOp {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::Identity => "identity",
            AugmentOp::Rot90 => "rot90",
            AugmentOp::Rot180 => "rot180",
            AugmentOp::Rot270 => "rot270",
            AugmentOp::HFlip => "hflip",
            AugmentOp::HFlipRot90 => "hflip_rot90",
            AugmentOp::HFlipRot180 => "hflip_rot180",
            AugmentOp::HFlipRot270 => "hflip_rot270",
        }
    }

    fn rotations(&self) -> usize {
        match self {
            AugmentOp::Identity | AugmentOp::HFlip => 0,
            AugmentOp::Rot90 | AugmentOp::HFlipRot90 => 1,
            AugmentOp::Rot180 | AugmentOp::HFlipRot180 => 2,
            AugmentOp::Rot270 | AugmentOp::HFlipRot270 => 3,
        }
    }

    fn flips(&self) -> bool {
        matches!(
            self,
            AugmentOp::HFlip
                | AugmentOp::HFlipRot90
                | AugmentOp::HFlipRot180
                | AugmentOp::HFlipRot270
        )
    }
}

/// Source coordinates feeding destination (r, c). Rotation is
/// counterclockwise and applied before the horizontal flip; rotations only
/// run on square planes, so the side length is h.
fn source_of(op: AugmentOp, h: usize, w: usize, mut r: usize, mut c: usize) -> (usize, usize) {
    // Invert the flip first (it is applied last in the forward direction).
    if op.flips() {
        c = w - 1 - c;
    }
    // Invert the rotation: forward rot90 (CCW) reads out[r][c] = in[c][s-1-r],
    // so repeated application of that map inverts k CCW turns one at a time.
    for _ in 0..op.rotations() {
        let (nr, nc) = (c, h - 1 - r);
        r = nr;
        c = nc;
    }
    (r, c)
}

/// Transform one plane. Rotating ops require a square plane.
pub fn apply_plane(op: AugmentOp, data: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
    if op.rotations() > 0 && h != w {
        return Err(Error::Data(format!(
            "{} requires a square image, got {h}x{w}",
            op.name()
        )));
    }
    if data.len() != h * w {
        return Err(Error::Data("augment plane size mismatch".into()));
    }
    let mut out = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = source_of(op, h, w, r, c);
            out[r * w + c] = data[sr * w + sc];
        }
    }
    Ok(out)
}

/// Transform image and mask identically.
pub fn apply(op: AugmentOp, sample: &Sample) -> Result<Sample> {
    let hw = sample.size * sample.size;
    let mut image = Vec::with_capacity(3 * hw);
    for ch in 0..3 {
        image.extend(apply_plane(
            op,
            &sample.image[ch * hw..(ch + 1) * hw],
            sample.size,
            sample.size,
        )?);
    }
    let mask = apply_plane(op, &sample.mask, sample.size, sample.size)?;
    Ok(Sample {
        id: sample.id.clone(),
        size: sample.size,
        image,
        mask,
    })
}
