//! Flat JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::{
    CurriculumState, FixRatioSchedule, PatchSizeSchedule, SchedulerPolicy, DEFAULT_FIX_RATIOS,
    DEFAULT_PATCH_SIZES, DEFAULT_THRESHOLD,
};
use crate::error::{check_unit, Error, Result};
use crate::shuffle::{AugmentParams, ShuffleMode};
use crate::sim::ControllerConfig;
use crate::tensor::PatchGrid;

pub const DEFAULT_TRIGGER_PROB: f64 = 0.5;
pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_IMAGE_SIDE: usize = 384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub beta_schedule: Vec<f64>,
    pub patch_sizes: Vec<usize>,
    pub policy: SchedulerPolicy,
    pub threshold: f64,
    /// Loss smoothing coefficient; off when absent.
    pub ema: Option<f64>,
    pub trigger_prob: f64,
    pub mode: ShuffleMode,
    pub seed: Option<u64>,
    pub batch_size: usize,
    pub image_side: usize,
    pub channels: usize,
    pub classes: usize,
    /// Fix ratio for a single `augment` call; defaults to the easiest level.
    pub beta: Option<f64>,
    /// Patch size for a single `augment` call; defaults to the easiest level.
    pub patch_size: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            beta_schedule: DEFAULT_FIX_RATIOS.to_vec(),
            patch_sizes: DEFAULT_PATCH_SIZES.to_vec(),
            policy: SchedulerPolicy::LossDriveHold,
            threshold: DEFAULT_THRESHOLD,
            ema: None,
            trigger_prob: DEFAULT_TRIGGER_PROB,
            mode: ShuffleMode::Group,
            seed: None,
            batch_size: DEFAULT_BATCH_SIZE,
            image_side: DEFAULT_IMAGE_SIDE,
            channels: 3,
            classes: 2,
            beta: None,
            patch_size: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedules()?;
        if !self.threshold.is_finite() {
            return Err(Error::Domain {
                name: "threshold",
                value: self.threshold,
                domain: "finite reals",
            });
        }
        if let Some(a) = self.ema {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::Domain {
                    name: "ema",
                    value: a,
                    domain: "[0, 1)",
                });
            }
        }
        check_unit("trigger_prob", self.trigger_prob)?;
        if let Some(beta) = self.beta {
            check_unit("beta", beta)?;
        }
        if let Some(p) = self.patch_size {
            PatchGrid::new(self.image_side, self.image_side, p)?;
        }
        if let SchedulerPolicy::FixedPatch(p) = self.policy {
            PatchGrid::new(self.image_side, self.image_side, p)?;
        }
        if self.batch_size == 0 || self.channels == 0 {
            return Err(Error::Invalid(
                "batch_size and channels must be at least 1".into(),
            ));
        }
        if self.classes < 2 {
            return Err(Error::Invalid(format!(
                "classes must be at least 2, got {}",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn schedules(&self) -> Result<(PatchSizeSchedule, FixRatioSchedule)> {
        Ok((
            PatchSizeSchedule::new(self.patch_sizes.clone(), self.image_side)?,
            FixRatioSchedule::new(self.beta_schedule.clone())?,
        ))
    }

    pub fn controller(&self) -> Result<ControllerConfig> {
        let (sizes, ratios) = self.schedules()?;
        Ok(ControllerConfig {
            sizes,
            ratios,
            policy: self.policy,
            threshold: self.threshold,
            ema: self.ema,
            seed: self.seed.unwrap_or(0),
        })
    }

    pub fn curriculum(&self) -> Result<CurriculumState> {
        let (sizes, ratios) = self.schedules()?;
        let state = CurriculumState::new(sizes, ratios, self.policy, self.threshold)?
            .with_seed(self.seed.unwrap_or(0));
        match self.ema {
            Some(a) => state.with_ema(a),
            None => Ok(state),
        }
    }

    /// Parameters for one augmentation call; unset `beta` / `patch_size`
    /// fall back to the easiest curriculum level.
    pub fn augment_params(&self) -> Result<AugmentParams> {
        let (p0, f0) = self.curriculum()?.current();
        Ok(AugmentParams {
            beta: self.beta.unwrap_or(f0),
            patch_size: self.patch_size.unwrap_or(p0),
            mode: self.mode,
            trigger_prob: self.trigger_prob,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.trigger_prob, 0.5);
        assert_eq!(c.batch_size, 8);
        assert_eq!(c.image_side, 384);
        assert_eq!(c.threshold, 4.0);
        let p = c.augment_params().unwrap();
        assert_eq!((p.patch_size, p.beta), (192, 0.9));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c =
            RunConfig::from_json(r#"{"mode": "split", "seed": 7, "policy": "back", "beta": 0.25}"#)
                .unwrap();
        assert_eq!(c.mode, ShuffleMode::Split);
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.policy, SchedulerPolicy::LossDriveBack);
        assert_eq!(c.augment_params().unwrap().beta, 0.25);
        assert_eq!(c.patch_sizes, DEFAULT_PATCH_SIZES);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"seed": 1, "learning_rate": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            r#"{"trigger_prob": 1.5}"#,
            r#"{"patch_sizes": [192, 100]}"#,
            r#"{"beta_schedule": [0.5, 0.9]}"#,
            r#"{"patch_size": 50}"#,
            r#"{"classes": 1}"#,
            r#"{"policy": "fixed-patch=80"}"#,
            r#"{"image_side": 200}"#,
            r#"{"ema": 1.0}"#,
            r#"{"mode": "both"}"#,
        ] {
            assert!(RunConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_roundtrip() {
        let c = RunConfig {
            policy: SchedulerPolicy::FixedRatio(0.6),
            seed: Some(3),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
