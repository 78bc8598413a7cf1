use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use cellmix_core::baselines::{BaselineMethod, RectRegion};
use cellmix_core::config::RunConfig;
use cellmix_core::curriculum::SchedulerPolicy;
use cellmix_core::ShuffleMode;

use crate::errors::{FormatError, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "cellmix",
    version,
    about = "In-place patch shuffle augmentation toolkit"
)]
pub struct Cli {
    /// Flat JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a reproducible synthetic image batch and its labels.
    Gen {
        /// Output prefix; writes <out>.images.tbf and <out>.labels.tbf.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Shuffle relation patches across a batch and emit soft labels.
    Augment {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Output prefix; writes <out>.images.tbf, <out>.soft.tbf and
        /// <out>.provenance.tbf.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Apply Mixup, Cutout or CutMix to a batch.
    Baseline {
        #[arg(long)]
        method: BaselineMethod,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Output prefix; writes <out>.images.tbf and <out>.soft.tbf.
        #[arg(long)]
        out: PathBuf,
        /// Fixed mixing weight (Mixup); drawn uniformly per sample if absent.
        #[arg(long)]
        lambda: Option<f64>,
        /// Fixed region as top,left,height,width (Cutout, CutMix).
        #[arg(long, value_parser = parse_region)]
        region: Option<RectRegion>,
        /// Cutout fill value.
        #[arg(long, default_value_t = 0.0)]
        fill: f32,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Replay a loss trace (or a synthetic learner) through the controller.
    Trace {
        /// One loss per line; an optional `loss` header and `#` comments
        /// are allowed.
        #[arg(long, conflicts_with = "synthetic")]
        losses: Option<PathBuf>,
        #[command(flatten)]
        synthetic: SyntheticArgs,
        /// Trace CSV destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Run the synthetic training loop with augmentation at every step.
    Simulate {
        #[command(flatten)]
        synthetic: SyntheticArgs,
        /// Skip the per-step batch augmentation.
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Print the header and summary statistics of a TBF file.
    Inspect { file: PathBuf },
    /// Redraw the labels of a random subset of samples.
    Corrupt {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: ConfigArgs,
    },
    /// Pack 8-bit PNG files into an image TBF (pixel u maps to u / 255).
    ImportPng {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Import as one luma channel instead of RGB.
        #[arg(long)]
        grayscale: bool,
    },
    /// Write each image of a TBF batch as an 8-bit PNG.
    ExportPng {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
#[group(id = "synthetic")]
pub struct SyntheticArgs {
    /// Initial loss of the synthetic learner.
    #[arg(long, default_value_t = 8.0)]
    pub a: f64,
    /// Decay constant in steps; `inf` for a constant loss.
    #[arg(long, default_value_t = 50.0)]
    pub tau: f64,
    /// Gaussian noise scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    pub steps: Option<usize>,
}

/// Overrides for [`RunConfig`] fields.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    #[arg(long, value_delimiter = ',')]
    pub beta_schedule: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub patch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub policy: Option<SchedulerPolicy>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub ema: Option<f64>,
    #[arg(long)]
    pub trigger_prob: Option<f64>,
    #[arg(long)]
    pub mode: Option<ShuffleMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub image_side: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub patch_size: Option<usize>,
}

impl ConfigArgs {
    /// Loads `file` (or the defaults), applies the flags, validates.
    pub fn resolve(&self, file: Option<&Path>) -> Result<RunConfig> {
        let mut c = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    FormatError(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| FormatError(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        apply!(
            beta_schedule,
            patch_sizes,
            policy,
            threshold,
            trigger_prob,
            mode,
            batch_size,
            image_side,
            channels,
            classes
        );
        if self.ema.is_some() {
            c.ema = self.ema;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.beta.is_some() {
            c.beta = self.beta;
        }
        if self.patch_size.is_some() {
            c.patch_size = self.patch_size;
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn require_seed(config: &RunConfig, command: &str) -> Result<u64> {
    config.seed.ok_or_else(|| {
        UsageError(format!(
            "`{command}` needs --seed (or \"seed\" in --config)"
        ))
        .into()
    })
}

fn parse_region(s: &str) -> std::result::Result<RectRegion, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("region must be top,left,height,width: {e}"))?;
    match parts[..] {
        [top, left, height, width] => Ok(RectRegion::new(top, left, height, width)),
        _ => Err("region must have exactly four fields: top,left,height,width".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "mode": "split", "threshold": 2.5}"#).unwrap();
        let args = ConfigArgs {
            seed: Some(9),
            beta: Some(0.4),
            ..ConfigArgs::default()
        };
        let c = args.resolve(Some(&path)).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.mode, ShuffleMode::Split);
        assert_eq!(c.threshold, 2.5);
        assert_eq!(c.beta, Some(0.4));
    }

    #[test]
    fn unknown_config_key_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seeed": 3}"#).unwrap();
        let err = ConfigArgs::default().resolve(Some(&path)).unwrap_err();
        assert!(err.downcast_ref::<FormatError>().is_some());
    }

    #[test]
    fn overrides_are_validated() {
        let args = ConfigArgs {
            trigger_prob: Some(2.0),
            ..ConfigArgs::default()
        };
        assert!(args.resolve(None).is_err());
    }

    #[test]
    fn region_parsing() {
        assert_eq!(
            parse_region("1,2,3,4").unwrap(),
            RectRegion::new(1, 2, 3, 4)
        );
        assert!(parse_region("1,2,3").is_err());
        assert!(parse_region("a,2,3,4").is_err());
    }

    #[test]
    fn missing_seed_is_usage() {
        let err = require_seed(&RunConfig::default(), "gen").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
