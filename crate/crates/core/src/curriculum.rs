//! Patch-size and fix-ratio schedules driven by a shared difficulty index.
//!
//! Index `k = 0` is the easiest level: the largest patch and the highest
//! fix ratio. Both schedules are read at `min(k, len - 1)`, so lists of
//! unequal length saturate independently.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Xoshiro256StarStar;

pub const DEFAULT_PATCH_SIZES: [usize; 7] = [192, 128, 96, 64, 48, 32, 16];
pub const DEFAULT_FIX_RATIOS: [f64; 5] = [0.9, 0.8, 0.7, 0.6, 0.5];
pub const DEFAULT_THRESHOLD: f64 = 4.0;
pub const MIN_PATCH_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSizeSchedule(Vec<usize>);

impl PatchSizeSchedule {
    /// Validates ordering and the 16 px floor, and that every size tiles an
    /// image of side `image_side`.
    pub fn new(sizes: Vec<usize>, image_side: usize) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Invalid("patch-size schedule is empty".into()));
        }
        if !sizes.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Invalid(format!(
                "patch sizes {sizes:?} are not strictly descending"
            )));
        }
        let last = *sizes.last().unwrap();
        if last < MIN_PATCH_SIZE {
            return Err(Error::Invalid(format!(
                "smallest patch size {last} is below {MIN_PATCH_SIZE}"
            )));
        }
        if let Some(&p) = sizes.iter().find(|&&p| !image_side.is_multiple_of(p)) {
            return Err(Error::Divisibility {
                patch: p,
                height: image_side,
                width: image_side,
            });
        }
        Ok(Self(sizes))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, k: usize) -> usize {
        self.0[k.min(self.0.len() - 1)]
    }
}

impl Default for PatchSizeSchedule {
    fn default() -> Self {
        Self(DEFAULT_PATCH_SIZES.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixRatioSchedule(Vec<f64>);

impl FixRatioSchedule {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Invalid("fix-ratio schedule is empty".into()));
        }
        if let Some(&r) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Domain {
                name: "fix ratio",
                value: r,
                domain: "(0, 1]",
            });
        }
        if !ratios.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Invalid(format!(
                "fix ratios {ratios:?} are not strictly descending"
            )));
        }
        Ok(Self(ratios))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, k: usize) -> f64 {
        self.0[k.min(self.0.len() - 1)]
    }
}

impl Default for FixRatioSchedule {
    fn default() -> Self {
        Self(DEFAULT_FIX_RATIOS.to_vec())
    }
}

/// How the difficulty index moves.
///
/// Textual form (CLI and config): `hold`, `back`, `linear`, `reverse`,
/// `random`, `loop`, `linear-decay-ratio`, `fixed-patch=<px>`,
/// `fixed-ratio=<f>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchedulerPolicy {
    /// Advance on low loss, otherwise stay.
    LossDriveHold,
    /// Advance on low loss, otherwise step back one level.
    LossDriveBack,
    /// Small patches to big ones across the run.
    Linear,
    /// Big patches to small ones across the run.
    Reverse,
    /// A uniformly drawn level every step.
    Random,
    /// `k = t mod levels`.
    Loop,
    /// Pin the patch size; the ratio axis follows loss-hold.
    FixedPatch(usize),
    /// One level harder every step regardless of loss.
    LinearDecayRatio,
    /// Pin the fix ratio; the patch axis follows loss-hold.
    FixedRatio(f64),
}

impl SchedulerPolicy {
    pub fn is_loss_driven(&self) -> bool {
        matches!(
            self,
            SchedulerPolicy::LossDriveHold
                | SchedulerPolicy::LossDriveBack
                | SchedulerPolicy::FixedPatch(_)
                | SchedulerPolicy::FixedRatio(_)
        )
    }

    pub fn all_defaults() -> [SchedulerPolicy; 9] {
        [
            SchedulerPolicy::LossDriveHold,
            SchedulerPolicy::LossDriveBack,
            SchedulerPolicy::Linear,
            SchedulerPolicy::Reverse,
            SchedulerPolicy::Random,
            SchedulerPolicy::Loop,
            SchedulerPolicy::FixedPatch(48),
            SchedulerPolicy::LinearDecayRatio,
            SchedulerPolicy::FixedRatio(0.7),
        ]
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerPolicy::LossDriveHold => f.write_str("hold"),
            SchedulerPolicy::LossDriveBack => f.write_str("back"),
            SchedulerPolicy::Linear => f.write_str("linear"),
            SchedulerPolicy::Reverse => f.write_str("reverse"),
            SchedulerPolicy::Random => f.write_str("random"),
            SchedulerPolicy::Loop => f.write_str("loop"),
            SchedulerPolicy::FixedPatch(p) => write!(f, "fixed-patch={p}"),
            SchedulerPolicy::LinearDecayRatio => f.write_str("linear-decay-ratio"),
            SchedulerPolicy::FixedRatio(r) => write!(f, "fixed-ratio={r}"),
        }
    }
}

impl FromStr for SchedulerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unknown scheduler policy {s:?}"));
        Ok(match s {
            "hold" => SchedulerPolicy::LossDriveHold,
            "back" => SchedulerPolicy::LossDriveBack,
            "linear" => SchedulerPolicy::Linear,
            "reverse" => SchedulerPolicy::Reverse,
            "random" => SchedulerPolicy::Random,
            "loop" => SchedulerPolicy::Loop,
            "linear-decay-ratio" => SchedulerPolicy::LinearDecayRatio,
            other => {
                let (name, value) = other.split_once('=').ok_or_else(bad)?;
                match name {
                    "fixed-patch" => {
                        let p: usize = value.parse().map_err(|_| bad())?;
                        if p < MIN_PATCH_SIZE {
                            return Err(Error::Invalid(format!(
                                "pinned patch size {p} is below {MIN_PATCH_SIZE}"
                            )));
                        }
                        SchedulerPolicy::FixedPatch(p)
                    }
                    "fixed-ratio" => {
                        let r: f64 = value.parse().map_err(|_| bad())?;
                        if !(r > 0.0 && r <= 1.0) {
                            return Err(Error::Domain {
                                name: "pinned fix ratio",
                                value: r,
                                domain: "(0, 1]",
                            });
                        }
                        SchedulerPolicy::FixedRatio(r)
                    }
                    _ => return Err(bad()),
                }
            }
        })
    }
}

impl TryFrom<String> for SchedulerPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchedulerPolicy> for String {
    fn from(p: SchedulerPolicy) -> Self {
        p.to_string()
    }
}

/// Difficulty controller.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    sizes: PatchSizeSchedule,
    ratios: FixRatioSchedule,
    policy: SchedulerPolicy,
    threshold: f64,
    k: usize,
    ema: Option<f64>,
    smoothed: Option<f64>,
    horizon: Option<usize>,
    rng: Xoshiro256StarStar,
}

impl CurriculumState {
    pub fn new(
        sizes: PatchSizeSchedule,
        ratios: FixRatioSchedule,
        policy: SchedulerPolicy,
        threshold: f64,
    ) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::Domain {
                name: "threshold",
                value: threshold,
                domain: "finite reals",
            });
        }
        Ok(Self {
            sizes,
            ratios,
            policy,
            threshold,
            k: 0,
            ema: None,
            smoothed: None,
            horizon: None,
            rng: Xoshiro256StarStar::seed_from_u64(0),
        })
    }

    /// Defaults: full patch list, ratios 0.9 down to 0.5, threshold 4.0.
    pub fn with_defaults(policy: SchedulerPolicy) -> Self {
        Self::new(
            PatchSizeSchedule::default(),
            FixRatioSchedule::default(),
            policy,
            DEFAULT_THRESHOLD,
        )
        .expect("default threshold is finite")
    }

    /// Smooths the loss as `a * prev + (1 - a) * loss` before comparing it
    /// with the threshold.
    pub fn with_ema(mut self, coefficient: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&coefficient) {
            return Err(Error::Domain {
                name: "ema coefficient",
                value: coefficient,
                domain: "[0, 1)",
            });
        }
        self.ema = Some(coefficient);
        Ok(self)
    }

    /// Run length over which Linear and Reverse sweep the levels. Without a
    /// horizon they move one level per step.
    pub fn with_horizon(mut self, steps: usize) -> Self {
        self.horizon = (steps > 0).then_some(steps);
        self
    }

    /// Seeds the generator used by the Random policy.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = Xoshiro256StarStar::seed_from_u64(seed);
        self
    }

    pub fn with_level(mut self, k: usize) -> Self {
        self.k = k.min(self.k_max());
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_max(&self) -> usize {
        self.sizes.len().max(self.ratios.len()) - 1
    }

    pub fn levels(&self) -> usize {
        self.k_max() + 1
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn policy(&self) -> SchedulerPolicy {
        self.policy
    }

    pub fn sizes(&self) -> &PatchSizeSchedule {
        &self.sizes
    }

    pub fn ratios(&self) -> &FixRatioSchedule {
        &self.ratios
    }

    /// `(patch size, fix ratio)` at the current level.
    pub fn current(&self) -> (usize, f64) {
        let p = match self.policy {
            SchedulerPolicy::FixedPatch(p) => p,
            _ => self.sizes.at(self.k),
        };
        let f = match self.policy {
            SchedulerPolicy::FixedRatio(f) => f,
            _ => self.ratios.at(self.k),
        };
        (p, f)
    }

    /// Loss-driven update: harder when `loss < T`, otherwise hold or back.
    pub fn loss_drive_step(&mut self, loss: f64) -> Result<()> {
        if !self.policy.is_loss_driven() {
            return Err(Error::Invalid(format!(
                "policy {} is not loss driven",
                self.policy
            )));
        }
        if !loss.is_finite() {
            return Err(Error::Domain {
                name: "loss",
                value: loss,
                domain: "finite reals",
            });
        }
        let l = match (self.ema, self.smoothed) {
            (Some(a), Some(prev)) => a * prev + (1.0 - a) * loss,
            _ => loss,
        };
        self.smoothed = Some(l);

        if l < self.threshold {
            self.k = (self.k + 1).min(self.k_max());
        } else if self.policy == SchedulerPolicy::LossDriveBack {
            self.k = self.k.saturating_sub(1);
        }
        Ok(())
    }

    /// Loss-independent update for iteration `t` (0-based).
    pub fn variant_step(&mut self, t: usize) -> Result<()> {
        let levels = self.levels();
        let sweep = |t: usize| match self.horizon {
            Some(h) => ((t.min(h - 1) * levels) / h).min(levels - 1),
            None => t.min(levels - 1),
        };
        self.k = match self.policy {
            SchedulerPolicy::Reverse => sweep(t),
            SchedulerPolicy::Linear => levels - 1 - sweep(t),
            SchedulerPolicy::Random => self.rng.below(levels),
            SchedulerPolicy::Loop => t % levels,
            SchedulerPolicy::LinearDecayRatio => t.min(levels - 1),
            other => {
                return Err(Error::Invalid(format!(
                    "policy {other} is loss driven; use loss_drive_step"
                )))
            }
        };
        Ok(())
    }

    /// Dispatches to whichever update the policy uses.
    pub fn step(&mut self, t: usize, loss: f64) -> Result<()> {
        if self.policy.is_loss_driven() {
            self.loss_drive_step(loss)
        } else {
            self.variant_step(t)
        }
    }
}
