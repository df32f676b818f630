//! Dataset handling: seeded synthetic ORSI-style scenes, dihedral
//! augmentation, manifest loading, and PNG import/export.

pub mod augment;
pub mod imageio;
pub mod manifest;
pub mod synth;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// One training pair. The image is 3 x size x size in [0,1] row-major, the
/// mask is size x size and strictly binary.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub size: usize,
    pub image: Vec<f64>,
    pub mask: Vec<f64>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        let hw = self.size * self.size;
        if self.image.len() != 3 * hw || self.mask.len() != hw {
            return Err(Error::Data(format!(
                "sample '{}' has inconsistent buffer sizes",
                self.id
            )));
        }
        if self.mask.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("sample '{}' mask is not binary", self.id)));
        }
        Ok(())
    }
}

/// Stack samples into batch tensors: images (b,3,s,s) and masks (b,1,s,s).
pub fn batch_tensors(samples: &[&Sample]) -> Result<(Tensor, Tensor)> {
    if samples.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let size = samples[0].size;
    let hw = size * size;
    let mut images = Vec::with_capacity(samples.len() * 3 * hw);
    let mut masks = Vec::with_capacity(samples.len() * hw);
    for s in samples {
        if s.size != size {
            return Err(Error::Data("mixed sample sizes in one batch".into()));
        }
        images.extend_from_slice(&s.image);
        masks.extend_from_slice(&s.mask);
    }
    Ok((
        Tensor::from_vec(Shape::new(samples.len(), 3, size, size), images)?,
        Tensor::from_vec(Shape::new(samples.len(), 1, size, size), masks)?,
    ))
}
