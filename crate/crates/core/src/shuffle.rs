//! In-place patch shuffle across a batch.
//!
//! A fix-position mask splits the patch indices of the grid into a fixed set
//! `F` and a relation set `R`. Fixed patches stay where they are; at every
//! relation position the patches of the batch are permuted among the samples,
//! so each patch keeps its spatial location but may land in another image.
//! The [`Provenance`] matrix records the donor of every output patch and is
//! the single source from which soft labels are derived.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::rng::Xoshiro256StarStar;
use crate::tensor::{ImageBatch, LabelBatch, PatchGrid, SoftLabelBatch};

/// `floor(n * beta + 0.5)`: the number of fixed patches for ratio `beta`.
pub fn fixed_count(n: usize, beta: f64) -> usize {
    (n as f64 * beta + 0.5).floor() as usize
}

/// Partition of the `n` patch indices into fixed and relation positions.
///
/// One mask is shared by every sample of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FixPositionMask {
    beta: f64,
    fixed: Vec<usize>,
    is_fixed: Vec<bool>,
}

impl FixPositionMask {
    /// Builds a mask from an explicit fixed set.
    pub fn from_fixed(n: usize, beta: f64, fixed: &[usize]) -> Result<Self> {
        check_unit("beta", beta)?;
        let mut is_fixed = vec![false; n];
        for &i in fixed {
            if i >= n {
                return Err(Error::Structural(format!("fixed index {i} outside 0..{n}")));
            }
            if std::mem::replace(&mut is_fixed[i], true) {
                return Err(Error::Structural(format!("fixed index {i} repeated")));
            }
        }
        let fixed = (0..n).filter(|&i| is_fixed[i]).collect();
        Ok(Self {
            beta,
            fixed,
            is_fixed,
        })
    }

    /// Every position fixed; the mask of an untouched batch.
    pub fn all_fixed(n: usize) -> Self {
        Self {
            beta: 1.0,
            fixed: (0..n).collect(),
            is_fixed: vec![true; n],
        }
    }

    pub fn n(&self) -> usize {
        self.is_fixed.len()
    }

    /// The requested ratio.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `|F|`.
    pub fn m(&self) -> usize {
        self.fixed.len()
    }

    /// Sorted fixed indices.
    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    /// Sorted relation indices.
    pub fn relation(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_fixed[i]).collect()
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.is_fixed[i]
    }

    /// `m / n`, the proportion actually held fixed.
    pub fn realized_ratio(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }
}

/// Draws `floor(n * beta + 0.5)` fixed positions uniformly without replacement.
pub fn draw_fix_mask(n: usize, beta: f64, rng: &mut Xoshiro256StarStar) -> Result<FixPositionMask> {
    check_unit("beta", beta)?;
    if n == 0 {
        return Err(Error::Invalid("a mask needs at least one patch".into()));
    }
    let fixed = rng.sample_indices(n, fixed_count(n, beta));
    FixPositionMask::from_fixed(n, beta, &fixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    /// One batch permutation for all relation positions: each output image
    /// takes all of its relation patches from a single donor.
    #[default]
    Group,
    /// An independent permutation per relation position.
    Split,
}

impl fmt::Display for ShuffleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShuffleMode::Group => "group",
            ShuffleMode::Split => "split",
        })
    }
}

impl FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(ShuffleMode::Group),
            "split" => Ok(ShuffleMode::Split),
            other => Err(Error::Invalid(format!(
                "unknown shuffle mode {other:?} (expected group or split)"
            ))),
        }
    }
}

/// `source[s][i]`: batch index of the sample that supplied patch `i` of
/// output sample `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    batch: usize,
    n: usize,
    source: Vec<u32>,
}

impl Provenance {
    pub fn new(batch: usize, n: usize, source: Vec<u32>) -> Result<Self> {
        if batch == 0 || n == 0 || source.len() != batch * n {
            return Err(Error::Shape(format!(
                "{} entries cannot form a ({batch}, {n}) provenance matrix",
                source.len()
            )));
        }
        if let Some(pos) = source.iter().position(|&d| d as usize >= batch) {
            return Err(Error::Structural(format!(
                "provenance entry ({}, {}) = {} is not a batch index below {batch}",
                pos / n,
                pos % n,
                source[pos]
            )));
        }
        Ok(Self { batch, n, source })
    }

    pub fn identity(batch: usize, n: usize) -> Self {
        let source = (0..batch as u32)
            .flat_map(|s| std::iter::repeat_n(s, n))
            .collect();
        Self { batch, n, source }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: usize, i: usize) -> usize {
        self.source[s * self.n + i] as usize
    }

    pub fn row(&self, s: usize) -> &[u32] {
        &self.source[s * self.n..(s + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.source
    }

    pub fn is_identity(&self) -> bool {
        (0..self.batch).all(|s| self.row(s).iter().all(|&d| d as usize == s))
    }

    /// Checks the structural guarantees of a shuffle under `mask`: fixed
    /// positions are self-sourced and each relation column is a permutation.
    pub fn check_against(&self, mask: &FixPositionMask) -> Result<()> {
        if mask.n() != self.n {
            return Err(Error::Structural(format!(
                "mask covers {} patches, provenance {}",
                mask.n(),
                self.n
            )));
        }
        let mut seen = vec![false; self.batch];
        for i in 0..self.n {
            if mask.is_fixed(i) {
                if let Some(s) = (0..self.batch).find(|&s| self.get(s, i) != s) {
                    return Err(Error::Structural(format!(
                        "fixed patch {i} of sample {s} came from sample {}",
                        self.get(s, i)
                    )));
                }
            } else {
                seen.iter_mut().for_each(|v| *v = false);
                for s in 0..self.batch {
                    if std::mem::replace(&mut seen[self.get(s, i)], true) {
                        return Err(Error::Structural(format!(
                            "relation column {i} uses donor {} twice",
                            self.get(s, i)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Permutes the relation patches of `batch` across samples.
///
/// Random draws: Group takes one permutation of `0..B`; Split takes one per
/// relation index in ascending index order. `perm[s]` is the donor of
/// output sample `s`.
pub fn in_place_shuffle(
    batch: &ImageBatch,
    grid: &PatchGrid,
    mask: &FixPositionMask,
    mode: ShuffleMode,
    rng: &mut Xoshiro256StarStar,
) -> Result<(ImageBatch, Provenance)> {
    if mask.n() != grid.len() {
        return Err(Error::Structural(format!(
            "mask covers {} patches but the grid has {}",
            mask.n(),
            grid.len()
        )));
    }
    if grid.height() != batch.height() || grid.width() != batch.width() {
        return Err(Error::Structural(format!(
            "grid spans {}x{} but images are {}x{}",
            grid.height(),
            grid.width(),
            batch.height(),
            batch.width()
        )));
    }

    let b = batch.batch();
    let n = grid.len();
    let mut provenance = Provenance::identity(b, n);
    let relation = mask.relation();
    match mode {
        ShuffleMode::Group => {
            let perm = rng.permutation(b);
            for &i in &relation {
                for (s, &d) in perm.iter().enumerate() {
                    provenance.source[s * n + i] = d as u32;
                }
            }
        }
        ShuffleMode::Split => {
            for &i in &relation {
                let perm = rng.permutation(b);
                for (s, &d) in perm.iter().enumerate() {
                    provenance.source[s * n + i] = d as u32;
                }
            }
        }
    }

    let images = apply_provenance(batch, grid, &provenance)?;
    Ok((images, provenance))
}

/// Builds the output batch in which patch `(s, i)` is input patch
/// `(source[s][i], i)`.
pub fn apply_provenance(
    batch: &ImageBatch,
    grid: &PatchGrid,
    provenance: &Provenance,
) -> Result<ImageBatch> {
    if provenance.batch() != batch.batch() || provenance.n() != grid.len() {
        return Err(Error::Structural(format!(
            "provenance is ({}, {}) but the batch is {} images of {} patches",
            provenance.batch(),
            provenance.n(),
            batch.batch(),
            grid.len()
        )));
    }
    let (c, h, w) = (batch.channels(), batch.height(), batch.width());
    let p = grid.patch_size();
    let sample_len = batch.sample_len();
    let input = batch.as_slice();
    let mut out = input.to_vec();
    for (s, dst) in out.chunks_exact_mut(sample_len).enumerate() {
        for i in 0..grid.len() {
            let d = provenance.get(s, i);
            if d == s {
                continue;
            }
            let src = &input[d * sample_len..(d + 1) * sample_len];
            let (y0, x0) = grid.origin(i);
            for ch in 0..c {
                for y in y0..y0 + p {
                    let row = (ch * h + y) * w + x0;
                    dst[row..row + p].copy_from_slice(&src[row..row + p]);
                }
            }
        }
    }
    Ok(batch.with_data(out))
}

/// Row `s` is the mean of the one-hot labels of the donors of its patches.
///
/// With a Group shuffle this is `f * y_fixed + (1 - f) * y_donor` where `f`
/// is the realized ratio `m / n`.
pub fn soft_labels(provenance: &Provenance, labels: &LabelBatch) -> Result<SoftLabelBatch> {
    if provenance.batch() != labels.len() {
        return Err(Error::Shape(format!(
            "provenance covers {} samples, labels {}",
            provenance.batch(),
            labels.len()
        )));
    }
    let cls = labels.classes();
    let n = provenance.n();
    let mut weights = Vec::with_capacity(provenance.batch() * cls);
    let mut counts = vec![0usize; cls];
    for s in 0..provenance.batch() {
        counts.iter_mut().for_each(|c| *c = 0);
        for &d in provenance.row(s) {
            counts[labels.get(d as usize) as usize] += 1;
        }
        weights.extend(counts.iter().map(|&c| (c as f64 / n as f64) as f32));
    }
    SoftLabelBatch::new(weights, provenance.batch(), cls)
}

/// Parameters of one augmentation call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub beta: f64,
    pub patch_size: usize,
    pub mode: ShuffleMode,
    pub trigger_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    pub images: ImageBatch,
    pub soft_labels: SoftLabelBatch,
    pub provenance: Provenance,
    /// `None` when the augmentation was not triggered.
    pub mask: Option<FixPositionMask>,
    pub triggered: bool,
}

/// Split, mask, shuffle and relabel with probability `trigger_prob`.
///
/// Random draws, in order: the trigger coin (`next_f64() < trigger_prob`),
/// then the mask, then the permutations. Validation happens before the coin
/// so an invalid configuration fails on every call.
pub fn augment_batch(
    batch: &ImageBatch,
    labels: &LabelBatch,
    params: &AugmentParams,
    rng: &mut Xoshiro256StarStar,
) -> Result<AugmentedBatch> {
    check_unit("trigger_prob", params.trigger_prob)?;
    check_unit("beta", params.beta)?;
    let grid = PatchGrid::for_batch(batch, params.patch_size)?;
    if labels.len() != batch.batch() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.batch()
        )));
    }

    let triggered = rng.next_f64() < params.trigger_prob;
    if !triggered {
        return Ok(AugmentedBatch {
            images: batch.clone(),
            soft_labels: labels.one_hot(),
            provenance: Provenance::identity(batch.batch(), grid.len()),
            mask: None,
            triggered,
        });
    }

    let mask = draw_fix_mask(grid.len(), params.beta, rng)?;
    let (images, provenance) = in_place_shuffle(batch, &grid, &mask, params.mode, rng)?;
    let soft_labels = soft_labels(&provenance, labels)?;
    Ok(AugmentedBatch {
        images,
        soft_labels,
        provenance,
        mask: Some(mask),
        triggered,
    })
}
