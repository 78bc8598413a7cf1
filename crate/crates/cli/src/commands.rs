use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use cellmix_core::baselines::{apply_to_batch, BaselineMethod, BaselineParams, RectRegion};
use cellmix_core::config::RunConfig;
use cellmix_core::sim::{
    corrupt_labels, run_controller, simulate_training, LossTrace, SimAugConfig, SyntheticLearner,
};
use cellmix_core::synth::{generate, SynthSpec};
use cellmix_core::tbf::{read_tbf, read_tbf_header, write_tbf, TbfData, TbfHeader, VERSION};
use cellmix_core::{augment_batch, ImageBatch, LabelBatch, Xoshiro256StarStar};

use crate::args::{require_seed, SyntheticArgs};
use crate::errors::{FormatError, UsageError};
use crate::losses::parse_losses;

/// `<prefix><suffix>`, e.g. `out/run1` + `.images.tbf`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let result = (|| -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

fn read_images(path: &Path) -> Result<ImageBatch> {
    read_tbf(path)
        .and_then(TbfData::into_images)
        .with_context(|| format!("reading images from {}", path.display()))
}

fn read_raw_labels(path: &Path) -> Result<Vec<u32>> {
    read_tbf(path)
        .and_then(TbfData::into_labels)
        .with_context(|| format!("reading labels from {}", path.display()))
}

/// Class count: the explicit flag if given, else large enough for both the
/// configured count and the labels present.
fn label_batch(raw: Vec<u32>, flag: Option<usize>, config: &RunConfig) -> Result<LabelBatch> {
    let classes = flag.unwrap_or_else(|| {
        let seen = raw.iter().max().map_or(0, |&m| m as usize + 1);
        config.classes.max(seen)
    });
    Ok(LabelBatch::new(raw, classes)?)
}

fn write(path: &Path, data: TbfData) -> Result<()> {
    write_tbf(path, &data).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(out: &Path, config: &RunConfig) -> Result<()> {
    let seed = require_seed(config, "gen")?;
    let spec = SynthSpec {
        batch: config.batch_size,
        channels: config.channels,
        side: config.image_side,
        classes: config.classes,
    };
    let (images, labels) = generate(&spec, &mut Xoshiro256StarStar::seed_from_u64(seed))?;
    let (img_path, lbl_path) = (
        with_suffix(out, ".images.tbf"),
        with_suffix(out, ".labels.tbf"),
    );
    write(&img_path, images.into())?;
    write(&lbl_path, TbfData::Labels(labels.as_slice().to_vec()))?;
    println!("{}\n{}", img_path.display(), lbl_path.display());
    Ok(())
}

pub fn augment(
    images: &Path,
    labels: &Path,
    out: &Path,
    classes_flag: Option<usize>,
    config: &RunConfig,
) -> Result<()> {
    let seed = require_seed(config, "augment")?;
    let batch = read_images(images)?;
    let labels = label_batch(read_raw_labels(labels)?, classes_flag, config)?;
    let params = config.augment_params()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let aug = augment_batch(&batch, &labels, &params, &mut rng)?;

    write(&with_suffix(out, ".images.tbf"), aug.images.into())?;
    write(&with_suffix(out, ".soft.tbf"), aug.soft_labels.into())?;
    write(&with_suffix(out, ".provenance.tbf"), aug.provenance.into())?;
    let summary = json!({
        "triggered": aug.triggered,
        "mode": params.mode.to_string(),
        "patch_size": params.patch_size,
        "beta": params.beta,
        "patches": aug.mask.as_ref().map(|m| m.n()),
        "fixed": aug.mask.as_ref().map(|m| m.m()),
        "realized_ratio": aug.mask.as_ref().map(|m| m.realized_ratio()),
    });
    println!("{summary}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn baseline(
    method: BaselineMethod,
    images: &Path,
    labels: &Path,
    out: &Path,
    lambda: Option<f64>,
    region: Option<RectRegion>,
    fill: f32,
    classes_flag: Option<usize>,
    config: &RunConfig,
) -> Result<()> {
    let seed = require_seed(config, "baseline")?;
    let batch = read_images(images)?;
    let labels = label_batch(read_raw_labels(labels)?, classes_flag, config)?;
    let params = BaselineParams {
        lambda,
        region,
        fill,
    };
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let result = apply_to_batch(method, &batch, &labels, &params, &mut rng)?;
    write(&with_suffix(out, ".images.tbf"), result.images.into())?;
    write(&with_suffix(out, ".soft.tbf"), result.soft_labels.into())?;
    println!(
        "{}",
        json!({ "method": method.to_string(), "partners": result.partners })
    );
    Ok(())
}

fn learner(args: &SyntheticArgs, seed: u64) -> Result<SyntheticLearner> {
    Ok(SyntheticLearner::new(args.a, args.tau, args.sigma, seed)?)
}

pub fn trace(
    losses: Option<&Path>,
    synthetic: &SyntheticArgs,
    out: Option<&Path>,
    config: &RunConfig,
) -> Result<()> {
    let values = match (losses, synthetic.steps) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_losses(&text).map_err(|e| FormatError(format!("{}: {}", path.display(), e.0)))?
        }
        (None, Some(steps)) => {
            let mut l = learner(synthetic, config.seed.unwrap_or(0))?;
            (0..steps).map(|t| l.loss_at(t)).collect()
        }
        (None, None) => {
            return Err(UsageError("`trace` needs --losses FILE or --steps N".into()).into())
        }
    };
    let report = run_controller(&LossTrace::new(values)?, &config.controller()?)?;
    let csv = report.to_csv();
    match out {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn simulate(
    synthetic: &SyntheticArgs,
    no_augment: bool,
    out_csv: &Path,
    out_json: &Path,
    config: &RunConfig,
) -> Result<()> {
    let seed = require_seed(config, "simulate")?;
    let steps = synthetic.steps.unwrap_or(100);
    let mut learner = learner(synthetic, seed)?;
    let aug = SimAugConfig {
        data: SynthSpec {
            batch: config.batch_size,
            channels: config.channels,
            side: config.image_side,
            classes: config.classes,
        },
        trigger_prob: config.trigger_prob,
        mode: config.mode,
    };
    let report = simulate_training(
        &mut learner,
        &config.controller()?,
        steps,
        (!no_augment).then_some(&aug),
    )?;
    write_atomic(out_csv, report.to_csv().as_bytes())?;
    let mut summary = report.summary_json();
    summary.push('\n');
    write_atomic(out_json, summary.as_bytes())?;
    Ok(())
}

pub fn corrupt(
    labels: &Path,
    ratio: f64,
    out: &Path,
    classes_flag: Option<usize>,
    config: &RunConfig,
) -> Result<()> {
    let seed = require_seed(config, "corrupt")?;
    let labels = label_batch(read_raw_labels(labels)?, classes_flag, config)?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let result = corrupt_labels(&labels, ratio, &mut rng)?;
    write(out, TbfData::Labels(result.labels.as_slice().to_vec()))?;
    println!("{}", json!({ "selected": result.selected }));
    Ok(())
}

pub fn inspect(path: &Path) -> Result<String> {
    let header: TbfHeader =
        read_tbf_header(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = format!(
        "file: {}\nversion: {VERSION}\nkind: {}\ndims: {:?}\n",
        path.display(),
        header.kind,
        header.dims
    );
    let data = read_tbf(path).with_context(|| format!("reading {}", path.display()))?;
    match &data {
        TbfData::Images(b) => {
            let v = b.as_slice();
            let min = v.iter().copied().fold(f32::INFINITY, f32::min);
            let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len() as f64;
            out += &format!("min: {min}\nmax: {max}\nmean: {mean}\n");
        }
        TbfData::Labels(l) => {
            let classes = l.iter().max().map_or(0, |&m| m as usize + 1);
            let mut hist = vec![0usize; classes];
            l.iter().for_each(|&c| hist[c as usize] += 1);
            out += &format!("class_counts: {hist:?}\n");
        }
        TbfData::SoftLabels(s) => {
            let worst = s
                .rows()
                .map(|r| (r.iter().map(|&v| f64::from(v)).sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max);
            out += &format!("max_row_sum_error: {worst:e}\n");
        }
        TbfData::Provenance(p) => {
            let own = (0..p.batch())
                .map(|s| p.row(s).iter().filter(|&&d| d as usize == s).count())
                .sum::<usize>();
            out += &format!(
                "self_sourced_fraction: {}\n",
                own as f64 / (p.batch() * p.n()) as f64
            );
        }
    }
    Ok(out)
}

pub fn import_png(inputs: &[PathBuf], out: &Path, grayscale: bool) -> Result<()> {
    let batch = crate::png::import(inputs, grayscale)?;
    write(out, batch.into())
}

pub fn export_png(images: &Path, out_dir: &Path) -> Result<()> {
    let batch = read_images(images)?;
    for p in crate::png::export(&batch, out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}
