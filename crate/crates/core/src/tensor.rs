//! Image batches, patch grids and label containers.
//!
//! Pixel buffers are `f32`, row-major over `(B, C, H, W)`. Patch indices run
//! row-major over the grid: left to right, then top to bottom.

use crate::error::{Error, Result};

/// Tolerance on soft-label row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// A dense `(B, C, H, W)` batch of finite `f32` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    data: Vec<f32>,
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
}

impl ImageBatch {
    pub fn new(
        data: Vec<f32>,
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if batch == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image batch dims must be >= 1, got ({batch}, {channels}, {height}, {width})"
            )));
        }
        let expected = batch * channels * height * width;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "buffer holds {} values but ({batch}, {channels}, {height}, {width}) needs {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite pixel {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            data,
            batch,
            channels,
            height,
            width,
        })
    }

    /// Builds a batch from 8-bit pixels using the exact mapping `u / 255`.
    pub fn from_u8(
        pixels: &[u8],
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let data = pixels.iter().map(|&u| f32::from(u) / 255.0).collect();
        Self::new(data, batch, channels, height, width)
    }

    pub fn from_images(images: &[Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("cannot build a batch from zero images".into()))?;
        let (c, h, w) = first.dims();
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for (s, img) in images.iter().enumerate() {
            if img.dims() != (c, h, w) {
                return Err(Error::Shape(format!(
                    "image {s} has dims {:?}, expected {:?}",
                    img.dims(),
                    (c, h, w)
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Self::new(data, images.len(), c, h, w)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// The `(C, H, W)` pixels of sample `s`.
    pub fn sample(&self, s: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[s * len..(s + 1) * len]
    }

    pub fn image(&self, s: usize) -> Image {
        Image {
            data: self.sample(s).to_vec(),
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { data, ..*self }
    }
}

/// A single `(C, H, W)` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Vec<f32>,
    channels: usize,
    height: usize,
    width: usize,
}

impl Image {
    pub fn new(data: Vec<f32>, channels: usize, height: usize, width: usize) -> Result<Self> {
        let b = ImageBatch::new(data, 1, channels, height, width)?;
        Ok(Self {
            data: b.data,
            channels,
            height,
            width,
        })
    }

    pub fn filled(value: f32, channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            vec![value; channels * height * width],
            channels,
            height,
            width,
        )
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// A regular grid of `p x p` patches over an `H x W` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0
            || !height.is_multiple_of(patch_size)
            || !width.is_multiple_of(patch_size)
        {
            return Err(Error::Divisibility {
                patch: patch_size,
                height,
                width,
            });
        }
        Ok(Self {
            patch_size,
            rows: height / patch_size,
            cols: width / patch_size,
        })
    }

    pub fn for_batch(batch: &ImageBatch, patch_size: usize) -> Result<Self> {
        Self::new(batch.height(), batch.width(), patch_size)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of patches per image.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }

    /// Top-left pixel `(y, x)` of patch `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        (
            (i / self.cols) * self.patch_size,
            (i % self.cols) * self.patch_size,
        )
    }

    /// Patch index covering pixel `(y, x)`.
    pub fn index_of(&self, y: usize, x: usize) -> usize {
        (y / self.patch_size) * self.cols + x / self.patch_size
    }
}

/// Extracted patches of a batch, addressable by `(sample, patch index)`.
///
/// Each patch is stored as a contiguous `(C, p, p)` block. A slot may be
/// emptied with [`Patches::take`]; [`reassemble`] then refuses the set.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    grid: PatchGrid,
    batch: usize,
    channels: usize,
    slots: Vec<Option<Vec<f32>>>,
}

impl Patches {
    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, s: usize, i: usize) -> Option<&[f32]> {
        self.slots.get(self.slot(s, i)?)?.as_deref()
    }

    pub fn take(&mut self, s: usize, i: usize) -> Option<Vec<f32>> {
        let slot = self.slot(s, i)?;
        self.slots[slot].take()
    }

    pub fn put(&mut self, s: usize, i: usize, patch: Vec<f32>) -> Result<()> {
        let expected = self.channels * self.grid.patch_size * self.grid.patch_size;
        if patch.len() != expected {
            return Err(Error::Shape(format!(
                "patch holds {} values, expected {expected}",
                patch.len()
            )));
        }
        let slot = self
            .slot(s, i)
            .ok_or_else(|| Error::Structural(format!("patch ({s}, {i}) is outside the grid")))?;
        self.slots[slot] = Some(patch);
        Ok(())
    }

    fn slot(&self, s: usize, i: usize) -> Option<usize> {
        (s < self.batch && i < self.grid.len()).then(|| s * self.grid.len() + i)
    }
}

/// Cuts every image of `batch` into `p x p` patches.
pub fn split_into_patches(batch: &ImageBatch, patch_size: usize) -> Result<Patches> {
    let grid = PatchGrid::for_batch(batch, patch_size)?;
    let (c, h, w) = (batch.channels(), batch.height(), batch.width());
    let p = patch_size;
    let mut slots = Vec::with_capacity(batch.batch() * grid.len());
    for s in 0..batch.batch() {
        let img = batch.sample(s);
        for i in 0..grid.len() {
            let (y0, x0) = grid.origin(i);
            let mut patch = Vec::with_capacity(c * p * p);
            for ch in 0..c {
                for y in y0..y0 + p {
                    let row = (ch * h + y) * w;
                    patch.extend_from_slice(&img[row + x0..row + x0 + p]);
                }
            }
            slots.push(Some(patch));
        }
    }
    Ok(Patches {
        grid,
        batch: batch.batch(),
        channels: c,
        slots,
    })
}

/// Inverse of [`split_into_patches`].
pub fn reassemble(patches: &Patches) -> Result<ImageBatch> {
    let grid = patches.grid;
    let (c, h, w, p) = (
        patches.channels,
        grid.height(),
        grid.width(),
        grid.patch_size,
    );
    let mut data = vec![0.0f32; patches.batch * c * h * w];
    for s in 0..patches.batch {
        let img = &mut data[s * c * h * w..(s + 1) * c * h * w];
        for i in 0..grid.len() {
            let patch = patches.get(s, i).ok_or_else(|| {
                Error::Structural(format!("patch index {i} of sample {s} is missing"))
            })?;
            let (y0, x0) = grid.origin(i);
            for ch in 0..c {
                for dy in 0..p {
                    let row = (ch * h + y0 + dy) * w + x0;
                    let src = (ch * p + dy) * p;
                    img[row..row + p].copy_from_slice(&patch[src..src + p]);
                }
            }
        }
    }
    ImageBatch::new(data, patches.batch, c, h, w)
}

/// Hard class labels, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelBatch {
    labels: Vec<u32>,
    classes: usize,
}

impl LabelBatch {
    pub fn new(labels: Vec<u32>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some((s, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= classes)
        {
            return Err(Error::Invalid(format!(
                "label {l} of sample {s} is outside [0, {classes})"
            )));
        }
        Ok(Self { labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, s: usize) -> u32 {
        self.labels[s]
    }

    pub fn one_hot(&self) -> SoftLabelBatch {
        let mut weights = vec![0.0f32; self.labels.len() * self.classes];
        for (s, &l) in self.labels.iter().enumerate() {
            weights[s * self.classes + l as usize] = 1.0;
        }
        SoftLabelBatch {
            weights,
            batch: self.labels.len(),
            classes: self.classes,
        }
    }
}

/// Per-sample class distributions, row-major `(B, cls)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelBatch {
    weights: Vec<f32>,
    batch: usize,
    classes: usize,
}

impl SoftLabelBatch {
    pub fn new(weights: Vec<f32>, batch: usize, classes: usize) -> Result<Self> {
        if classes == 0 || weights.len() != batch * classes {
            return Err(Error::Shape(format!(
                "{} weights cannot form a ({batch}, {classes}) soft-label matrix",
                weights.len()
            )));
        }
        for (s, row) in weights.chunks_exact(classes).enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Invalid(format!(
                    "soft label row {s} has entry {v} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Invalid(format!("soft label row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            weights,
            batch,
            classes,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, s: usize) -> &[f32] {
        &self.weights[s * self.classes..(s + 1) * self.classes]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.weights
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.weights.chunks_exact(self.classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(b: usize, c: usize, h: usize, w: usize) -> ImageBatch {
        let data = (0..b * c * h * w).map(|v| v as f32).collect();
        ImageBatch::new(data, b, c, h, w).unwrap()
    }

    #[test]
    fn patch_counts() {
        assert_eq!(PatchGrid::new(384, 384, 16).unwrap().len(), 576);
        assert_eq!(PatchGrid::new(384, 384, 192).unwrap().len(), 4);
        assert_eq!(
            PatchGrid::new(384, 384, 100).unwrap_err(),
            Error::Divisibility {
                patch: 100,
                height: 384,
                width: 384
            }
        );
    }

    #[test]
    fn divisibility_error_names_all_sizes() {
        let msg = PatchGrid::new(384, 200, 48).unwrap_err().to_string();
        assert!(msg.contains("48") && msg.contains("384") && msg.contains("200"));
    }

    #[test]
    fn non_square_grid() {
        let g = PatchGrid::new(32, 48, 16).unwrap();
        assert_eq!((g.rows(), g.cols(), g.len()), (2, 3, 6));
        assert_eq!(g.origin(4), (16, 16));
        assert_eq!(g.index_of(17, 40), 5);
    }

    #[test]
    fn patch_accessor_is_row_major() {
        let batch = ramp(1, 1, 4, 4);
        let patches = split_into_patches(&batch, 2).unwrap();
        assert_eq!(patches.get(0, 0).unwrap(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(patches.get(0, 1).unwrap(), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(patches.get(0, 2).unwrap(), &[8.0, 9.0, 12.0, 13.0]);
        assert_eq!(patches.get(0, 3).unwrap(), &[10.0, 11.0, 14.0, 15.0]);
        assert!(patches.get(0, 4).is_none());
        assert!(patches.get(1, 0).is_none());
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        let batch = ramp(2, 3, 96, 96);
        for p in [16, 48, 96, 1] {
            let back = reassemble(&split_into_patches(&batch, p).unwrap()).unwrap();
            assert_eq!(back, batch, "p = {p}");
        }
        let single = ImageBatch::new(vec![0.25], 1, 1, 1, 1).unwrap();
        assert_eq!(
            reassemble(&split_into_patches(&single, 1).unwrap()).unwrap(),
            single
        );
    }

    #[test]
    fn missing_patch_is_structural_error() {
        let batch = ramp(2, 1, 4, 4);
        let mut patches = split_into_patches(&batch, 2).unwrap();
        let taken = patches.take(1, 3).unwrap();
        assert!(matches!(
            reassemble(&patches),
            Err(Error::Structural(msg)) if msg.contains("index 3") && msg.contains("sample 1")
        ));
        patches.put(1, 3, taken).unwrap();
        assert_eq!(reassemble(&patches).unwrap(), batch);
        assert!(patches.put(0, 0, vec![1.0]).is_err());
    }

    #[test]
    fn patches_partition_the_image() {
        let batch = ramp(1, 2, 12, 18);
        let patches = split_into_patches(&batch, 6).unwrap();
        let mut seen: Vec<f32> = (0..patches.grid().len())
            .flat_map(|i| patches.get(0, i).unwrap().to_vec())
            .collect();
        seen.sort_by(f32::total_cmp);
        let mut all = batch.as_slice().to_vec();
        all.sort_by(f32::total_cmp);
        assert_eq!(seen, all);
    }

    #[test]
    fn batch_validation() {
        assert!(ImageBatch::new(vec![0.0; 11], 1, 1, 3, 4).is_err());
        assert!(ImageBatch::new(vec![], 0, 1, 1, 1).is_err());
        assert!(ImageBatch::new(vec![f32::NAN, 0.0], 1, 1, 1, 2).is_err());
        assert!(ImageBatch::new(vec![f32::INFINITY], 1, 1, 1, 1).is_err());
    }

    #[test]
    fn u8_import_divides_by_255() {
        let b = ImageBatch::from_u8(&[0, 51, 255], 1, 1, 1, 3).unwrap();
        assert_eq!(b.as_slice(), &[0.0, 51.0 / 255.0, 1.0]);
    }

    #[test]
    fn labels_and_soft_labels() {
        assert!(LabelBatch::new(vec![0, 2], 2).is_err());
        assert!(LabelBatch::new(vec![0], 1).is_err());
        let labels = LabelBatch::new(vec![1, 0, 2], 3).unwrap();
        let oh = labels.one_hot();
        assert_eq!(oh.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(oh.row(2), &[0.0, 0.0, 1.0]);
        assert!(SoftLabelBatch::new(vec![0.5, 0.4], 1, 2).is_err());
        assert!(SoftLabelBatch::new(vec![1.5, -0.5], 1, 2).is_err());
        assert!(SoftLabelBatch::new(vec![0.75, 0.25], 1, 2).is_ok());
    }
}
