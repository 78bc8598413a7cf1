//! Reference mixing augmentations: Mixup, Cutout and CutMix.
//!
//! Mixing weights and regions are inputs; [`apply_to_batch`] draws them
//! uniformly for whole-batch runs.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_unit, Error, Result};
use crate::rng::Xoshiro256StarStar;
use crate::tensor::{Image, ImageBatch, LabelBatch, SoftLabelBatch};

/// An axis-aligned pixel rectangle, non-empty and inside its image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl RectRegion {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self {
            top,
            left,
            height,
            width,
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::new(0, 0, height, width)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.height).contains(&y)
            && (self.left..self.left + self.width).contains(&x)
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Invalid(format!("region {self} is empty")));
        }
        if self.top + self.height > height || self.left + self.width > width {
            return Err(Error::Structural(format!(
                "region {self} does not fit a {height}x{width} image"
            )));
        }
        Ok(())
    }

    /// Uniform size in `1..=H x 1..=W`, then a uniform placement.
    pub fn random(height: usize, width: usize, rng: &mut Xoshiro256StarStar) -> Self {
        let h = 1 + rng.below(height);
        let w = 1 + rng.below(width);
        let top = rng.below(height - h + 1);
        let left = rng.below(width - w + 1);
        Self::new(top, left, h, w)
    }
}

impl fmt::Display for RectRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}@({},{})",
            self.height, self.width, self.top, self.left
        )
    }
}

fn check_pair(x1: &Image, x2: &Image, y1: &[f32], y2: &[f32]) -> Result<()> {
    if x1.dims() != x2.dims() {
        return Err(Error::Shape(format!(
            "images differ in shape: {:?} vs {:?}",
            x1.dims(),
            x2.dims()
        )));
    }
    if y1.len() != y2.len() {
        return Err(Error::Shape(format!(
            "label vectors differ in length: {} vs {}",
            y1.len(),
            y2.len()
        )));
    }
    Ok(())
}

fn blend_labels(y1: &[f32], y2: &[f32], lambda: f64) -> Vec<f32> {
    y1.iter()
        .zip(y2)
        .map(|(&a, &b)| (lambda * f64::from(a) + (1.0 - lambda) * f64::from(b)) as f32)
        .collect()
}

/// `lambda * x1 + (1 - lambda) * x2`, pixelwise and on the labels.
pub fn mixup(
    x1: &Image,
    x2: &Image,
    y1: &[f32],
    y2: &[f32],
    lambda: f64,
) -> Result<(Image, Vec<f32>)> {
    check_unit("lambda", lambda)?;
    check_pair(x1, x2, y1, y2)?;
    let mut out = x1.clone();
    for (o, &b) in out.as_mut_slice().iter_mut().zip(x2.as_slice()) {
        let a = f64::from(*o);
        *o = (lambda * a + (1.0 - lambda) * f64::from(b)) as f32;
    }
    Ok((out, blend_labels(y1, y2, lambda)))
}

/// Overwrites `region` with `fill` in every channel.
pub fn cutout(x: &Image, region: &RectRegion, fill: f32) -> Result<Image> {
    region.validate(x.height(), x.width())?;
    if !fill.is_finite() {
        return Err(Error::Invalid(format!("cutout fill {fill} is not finite")));
    }
    let mut out = x.clone();
    paste(&mut out, region, |_, _| fill);
    Ok(out)
}

/// Pastes `region` of `x2` into `x1`; the label weight of `y1` is the share
/// of pixels still coming from `x1`.
pub fn cutmix(
    x1: &Image,
    x2: &Image,
    y1: &[f32],
    y2: &[f32],
    region: &RectRegion,
) -> Result<(Image, Vec<f32>)> {
    check_pair(x1, x2, y1, y2)?;
    region.validate(x1.height(), x1.width())?;
    let mut out = x1.clone();
    let (h, w) = (x2.height(), x2.width());
    let donor = x2.as_slice();
    paste(&mut out, region, |c, row| donor[c * h * w + row]);
    let lambda = 1.0 - region.area() as f64 / (x1.height() * x1.width()) as f64;
    Ok((out, blend_labels(y1, y2, lambda)))
}

// `value(channel, y * W + x)` supplies each overwritten pixel.
fn paste(img: &mut Image, region: &RectRegion, value: impl Fn(usize, usize) -> f32) {
    let (c, h, w) = img.dims();
    let data = img.as_mut_slice();
    for ch in 0..c {
        for y in region.top..region.top + region.height {
            for x in region.left..region.left + region.width {
                data[(ch * h + y) * w + x] = value(ch, y * w + x);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Mixup,
    Cutout,
    CutMix,
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::Mixup => "mixup",
            BaselineMethod::Cutout => "cutout",
            BaselineMethod::CutMix => "cutmix",
        })
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixup" => Ok(BaselineMethod::Mixup),
            "cutout" => Ok(BaselineMethod::Cutout),
            "cutmix" => Ok(BaselineMethod::CutMix),
            other => Err(Error::Invalid(format!(
                "unknown baseline {other:?} (expected mixup, cutout or cutmix)"
            ))),
        }
    }
}

/// Per-batch options; `None` means draw uniformly per sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaselineParams {
    pub lambda: Option<f64>,
    pub region: Option<RectRegion>,
    pub fill: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub images: ImageBatch,
    pub soft_labels: SoftLabelBatch,
    /// Partner sample mixed into each output (identity for Cutout).
    pub partners: Vec<usize>,
}

/// Applies `method` to every sample, pairing sample `s` with `perm[s]` of a
/// uniform batch permutation.
///
/// Draw order: the permutation (not for Cutout), then per sample its lambda
/// or region when not fixed by `params`.
pub fn apply_to_batch(
    method: BaselineMethod,
    batch: &ImageBatch,
    labels: &LabelBatch,
    params: &BaselineParams,
    rng: &mut Xoshiro256StarStar,
) -> Result<BaselineOutput> {
    if labels.len() != batch.batch() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.batch()
        )));
    }
    if let Some(l) = params.lambda {
        check_unit("lambda", l)?;
    }
    if let Some(r) = params.region {
        r.validate(batch.height(), batch.width())?;
    }
    let one_hot = labels.one_hot();
    let b = batch.batch();
    let partners = match method {
        BaselineMethod::Cutout => (0..b).collect(),
        _ => rng.permutation(b),
    };

    let mut images = Vec::with_capacity(b);
    let mut weights = Vec::with_capacity(b * labels.classes());
    for (s, &d) in partners.iter().enumerate() {
        let (x1, x2) = (batch.image(s), batch.image(d));
        let (y1, y2) = (one_hot.row(s), one_hot.row(d));
        let mut region = || {
            params
                .region
                .unwrap_or_else(|| RectRegion::random(batch.height(), batch.width(), rng))
        };
        let (img, y) = match method {
            BaselineMethod::Mixup => {
                let lambda = params.lambda.unwrap_or_else(|| rng.next_f64());
                mixup(&x1, &x2, y1, y2, lambda)?
            }
            BaselineMethod::Cutout => (cutout(&x1, &region(), params.fill)?, y1.to_vec()),
            BaselineMethod::CutMix => cutmix(&x1, &x2, y1, y2, &region())?,
        };
        images.push(img);
        weights.extend(y);
    }
    Ok(BaselineOutput {
        images: ImageBatch::from_images(&images)?,
        soft_labels: SoftLabelBatch::new(weights, b, labels.classes())?,
        partners,
    })
}
