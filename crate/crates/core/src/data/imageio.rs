//! PNG import/export and plain resampling helpers (not differentiable).

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Save a single-channel map in [0,1] as 8-bit grayscale: value = round(255 v).
pub fn save_gray(path: &Path, data: &[f64], h: usize, w: usize) -> Result<()> {
    if data.len() != h * w {
        return Err(Error::Data(format!(
            "gray buffer has {} values for {h}x{w}",
            data.len()
        )));
    }
    let mut img = GrayImage::new(w as u32, h as u32);
    for (i, p) in img.pixels_mut().enumerate() {
        p.0[0] = (data[i].clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    img.save(path)?;
    Ok(())
}

pub fn save_rgb(path: &Path, data: &[f64], h: usize, w: usize) -> Result<()> {
    if data.len() != 3 * h * w {
        return Err(Error::Data(format!(
            "rgb buffer has {} values for {h}x{w}",
            data.len()
        )));
    }
    let hw = h * w;
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, p) in img.pixels_mut().enumerate() {
        for ch in 0..3 {
            p.0[ch] = (data[ch * hw + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    img.save(path)?;
    Ok(())
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::Data(format!("missing file: {}", path.display())));
    }
    image::open(path)
        .map_err(|e| Error::Data(format!("unreadable image {}: {e}", path.display())))
}

/// Load any image as grayscale in [0,1], returning (data, h, w).
pub fn load_gray(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    Ok((data, h, w))
}

/// Load any image as RGB planes in [0,1], returning (data 3*h*w, h, w).
pub fn load_rgb(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = h * w;
    let mut data = vec![0.0; 3 * hw];
    for (i, p) in img.pixels().enumerate() {
        for ch in 0..3 {
            data[ch * hw + i] = p.0[ch] as f64 / 255.0;
        }
    }
    Ok((data, h, w))
}

/// Bilinear resize of one plane (align-corners-false, edges clamped).
pub fn resize_bilinear(data: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    for oy in 0..oh {
        let src_y = (oy as f64 + 0.5) * sy - 0.5;
        let y0f = src_y.floor();
        let fy = src_y - y0f;
        let y0 = (y0f.max(0.0) as usize).min(h - 1);
        let y1 = ((y0f + 1.0).max(0.0) as usize).min(h - 1);
        for ox in 0..ow {
            let src_x = (ox as f64 + 0.5) * sx - 0.5;
            let x0f = src_x.floor();
            let fx = src_x - x0f;
            let x0 = (x0f.max(0.0) as usize).min(w - 1);
            let x1 = ((x0f + 1.0).max(0.0) as usize).min(w - 1);
            let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
            let bot = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
            out[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Nearest-neighbor resize, used for masks so values stay binary.
pub fn resize_nearest(data: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        let sy = (oy * h / oh).min(h - 1);
        for ox in 0..ow {
            let sx = (ox * w / ow).min(w - 1);
            out[oy * ow + ox] = data[sy * w + sx];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_roundtrip_stays_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.png");
        let data: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        save_gray(&path, &data, 8, 8).unwrap();
        let (loaded, h, w) = load_gray(&path).unwrap();
        assert_eq!((h, w), (8, 8));
        for (a, b) in data.iter().zip(&loaded) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let err = load_gray(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("missing file"));
    }

    #[test]
    fn nearest_resize_preserves_binarity() {
        let mask = vec![0.0, 1.0, 1.0, 0.0];
        let up = resize_nearest(&mask, 2, 2, 5, 5);
        assert!(up.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn bilinear_resize_of_constant_is_constant() {
        let data = vec![0.42; 36];
        let out = resize_bilinear(&data, 6, 6, 10, 10);
        for v in out {
            assert!((v - 0.42).abs() < 1e-15);
        }
    }
}
