//! Batch image augmentation by in-place patch shuffling, with a loss-driven
//! curriculum over patch size and fix-position ratio.
//!
//! The pipeline for one batch is: cut every image into a `p x p` grid
//! ([`tensor`]), draw a fix-position mask shared by the batch, permute the
//! remaining patches across samples at their original positions, and derive
//! soft labels from the recorded provenance ([`shuffle`]). The [`curriculum`]
//! controller chooses `p` and the fix ratio from the training loss; [`sim`]
//! drives it without a network. [`tbf`] is the binary interchange format.

pub mod baselines;
pub mod config;
pub mod curriculum;
pub mod error;
pub mod rng;
pub mod shuffle;
pub mod sim;
pub mod synth;
pub mod tbf;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Xoshiro256StarStar;
pub use shuffle::{
    augment_batch, draw_fix_mask, in_place_shuffle, soft_labels, AugmentParams, AugmentedBatch,
    FixPositionMask, Provenance, ShuffleMode,
};
pub use tensor::{
    reassemble, split_into_patches, Image, ImageBatch, LabelBatch, PatchGrid, SoftLabelBatch,
};
