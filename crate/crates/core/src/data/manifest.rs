//! Manifest-driven dataset loading and saving.
//!
//! A manifest is a text file with one record per line: image path, a tab,
//! mask path. Relative paths resolve against the manifest's directory.
//! Images are bilinearly resized to the configured size; masks are resized
//! nearest-neighbor and binarized at 0.5 so they stay exactly {0, 1}.

use std::path::{Path, PathBuf};

use super::imageio;
use super::synth::SampleMeta;
use super::Sample;
use crate::error::{Error, Result};

pub fn load_manifest(path: &Path, target_size: usize) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (img_rel, mask_rel) = line.split_once('\t').ok_or_else(|| {
            Error::Data(format!(
                "{} line {}: expected 'image<TAB>mask'",
                path.display(),
                lineno + 1
            ))
        })?;
        let img_path = dir.join(img_rel.trim());
        let mask_path = dir.join(mask_rel.trim());
        samples.push(load_pair(&img_path, &mask_path, target_size)?);
    }
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "manifest {} contains no records",
            path.display()
        )));
    }
    Ok(samples)
}

pub fn load_pair(img_path: &Path, mask_path: &Path, target_size: usize) -> Result<Sample> {
    let (img, ih, iw) = imageio::load_rgb(img_path)?;
    let (mask, mh, mw) = imageio::load_gray(mask_path)?;
    let hw_in = ih * iw;
    let mut image = Vec::with_capacity(3 * target_size * target_size);
    for ch in 0..3 {
        image.extend(imageio::resize_bilinear(
            &img[ch * hw_in..(ch + 1) * hw_in],
            ih,
            iw,
            target_size,
            target_size,
        ));
    }
    let mask = imageio::resize_nearest(&mask, mh, mw, target_size, target_size)
        .into_iter()
        .map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    let id = img_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sample")
        .to_string();
    let sample = Sample {
        id,
        size: target_size,
        image,
        mask,
    };
    sample.validate()?;
    Ok(sample)
}

/// Write samples as PNG pairs plus a manifest (and optional metadata sidecar);
/// returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    samples: &[Sample],
    metas: Option<&[SampleMeta]>,
) -> Result<PathBuf> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&masks)?;
    let mut manifest = String::new();
    for s in samples {
        let img_rel = format!("images/{}.png", s.id);
        let mask_rel = format!("masks/{}.png", s.id);
        imageio::save_rgb(&dir.join(&img_rel), &s.image, s.size, s.size)?;
        imageio::save_gray(&dir.join(&mask_rel), &s.mask, s.size, s.size)?;
        manifest.push_str(&format!("{img_rel}\t{mask_rel}\n"));
    }
    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest)?;
    if let Some(metas) = metas {
        std::fs::write(dir.join("metadata.tsv"), super::synth::metadata_text(metas))?;
    }
    Ok(manifest_path)
}
