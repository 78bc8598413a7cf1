//! PNG import and export with the fixed `u / 255` mapping.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{GrayImage, RgbImage};

use cellmix_core::ImageBatch;

use crate::errors::FormatError;

pub fn import(paths: &[PathBuf], grayscale: bool) -> Result<ImageBatch> {
    let channels = if grayscale { 1 } else { 3 };
    let mut dims = None;
    let mut planar = Vec::new();
    for path in paths {
        let img = image::open(path)
            .map_err(|e| FormatError(format!("cannot decode {}: {e}", path.display())))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(FormatError(format!(
                    "{} is {w}x{h}, earlier images are {}x{}",
                    path.display(),
                    d.1,
                    d.0
                ))
                .into())
            }
            Some(_) => {}
        }
        let interleaved = if grayscale {
            img.to_luma8().into_raw()
        } else {
            img.to_rgb8().into_raw()
        };
        // HWC -> CHW
        for c in 0..channels {
            planar.extend(interleaved.iter().skip(c).step_by(channels));
        }
    }
    let (h, w) = dims.context("no input images")?;
    Ok(ImageBatch::from_u8(&planar, paths.len(), channels, h, w)?)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `sample_<s>.png` for every image; returns the written paths.
pub fn export(batch: &ImageBatch, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let [b, c, h, w] = batch.dims();
    if c != 1 && c != 3 {
        return Err(FormatError(format!("PNG export needs 1 or 3 channels, batch has {c}")).into());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut written = Vec::with_capacity(b);
    for s in 0..b {
        let img = batch.sample(s);
        let mut interleaved = Vec::with_capacity(c * h * w);
        for px in 0..h * w {
            for ch in 0..c {
                interleaved.push(to_u8(img[ch * h * w + px]));
            }
        }
        let path = out_dir.join(format!("sample_{s}.png"));
        let result = if c == 1 {
            GrayImage::from_raw(w as u32, h as u32, interleaved)
                .expect("buffer sized from dims")
                .save(&path)
        } else {
            RgbImage::from_raw(w as u32, h as u32, interleaved)
                .expect("buffer sized from dims")
                .save(&path)
        };
        result.with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
