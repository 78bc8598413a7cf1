//! Network-free training loop for exercising the curriculum controller.
//!
//! Losses come either from a recorded trace or from a [`SyntheticLearner`]
//! whose loss decays exponentially with optional Gaussian noise. Each step
//! updates the controller first and then (when an augmentation config is
//! given) augments a batch at the freshly emitted `(patch size, ratio)`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::curriculum::{CurriculumState, FixRatioSchedule, PatchSizeSchedule, SchedulerPolicy};
use crate::error::{check_unit, Error, Result};
use crate::rng::{SplitMix64, Xoshiro256StarStar};
use crate::shuffle::{augment_batch, AugmentParams, ShuffleMode};
use crate::synth::{generate, SynthSpec};
use crate::tensor::LabelBatch;

pub const TRACE_CSV_HEADER: &str = "step,loss,k,patch_size,fix_ratio,policy";

#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace(Vec<f64>);

impl LossTrace {
    pub fn new(losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::Invalid("loss trace is empty".into()));
        }
        if let Some((t, &l)) = losses
            .iter()
            .enumerate()
            .find(|(_, l)| !l.is_finite() || **l < 0.0)
        {
            return Err(Error::Invalid(format!(
                "loss {l} at step {t} is not a finite non-negative value"
            )));
        }
        Ok(Self(losses))
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
}

/// `loss(t) = max(0, a * exp(-t / tau) + sigma * N(0, 1))`.
#[derive(Debug, Clone)]
pub struct SyntheticLearner {
    a: f64,
    tau: f64,
    sigma: f64,
    rng: Xoshiro256StarStar,
}

impl SyntheticLearner {
    /// `tau` may be `f64::INFINITY` for a constant loss.
    pub fn new(a: f64, tau: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain {
                name: "a",
                value: a,
                domain: "(0, inf)",
            });
        }
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::Domain {
                name: "tau",
                value: tau,
                domain: "(0, inf]",
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain {
                name: "sigma",
                value: sigma,
                domain: "[0, inf)",
            });
        }
        Ok(Self {
            a,
            tau,
            sigma,
            rng: Xoshiro256StarStar::seed_from_u64(seed),
        })
    }

    /// Noise-free loss at step `t`.
    pub fn expected_loss(&self, t: usize) -> f64 {
        self.a * (-(t as f64) / self.tau).exp()
    }

    /// Draws no randomness when `sigma == 0`.
    pub fn loss_at(&mut self, t: usize) -> f64 {
        let mut l = self.expected_loss(t);
        if self.sigma > 0.0 {
            l += self.sigma * self.rng.next_gaussian();
        }
        l.max(0.0)
    }
}

/// Controller settings shared by trace replay and simulation.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub sizes: PatchSizeSchedule,
    pub ratios: FixRatioSchedule,
    pub policy: SchedulerPolicy,
    pub threshold: f64,
    pub ema: Option<f64>,
    pub seed: u64,
}

impl ControllerConfig {
    pub fn with_policy(policy: SchedulerPolicy) -> Self {
        Self {
            sizes: PatchSizeSchedule::default(),
            ratios: FixRatioSchedule::default(),
            policy,
            threshold: crate::curriculum::DEFAULT_THRESHOLD,
            ema: None,
            seed: 0,
        }
    }

    fn build(&self, horizon: usize) -> Result<CurriculumState> {
        let state = CurriculumState::new(
            self.sizes.clone(),
            self.ratios.clone(),
            self.policy,
            self.threshold,
        )?
        .with_horizon(horizon)
        .with_seed(self.seed);
        match self.ema {
            Some(a) => state.with_ema(a),
            None => Ok(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub k: usize,
    pub patch_size: usize,
    pub fix_ratio: f64,
    /// Whether the augmentation fired; `None` when no batch was augmented.
    pub triggered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub policy: SchedulerPolicy,
    pub threshold: f64,
    pub levels: usize,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: SchedulerPolicy,
    pub threshold: f64,
    pub steps: usize,
    pub steps_at_level: Vec<usize>,
    pub final_k: usize,
    pub final_patch_size: usize,
    pub final_fix_ratio: f64,
    pub triggered_steps: Option<usize>,
}

impl RunReport {
    pub fn k_sequence(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.k).collect()
    }

    /// One line per step under [`TRACE_CSV_HEADER`]; floats use the
    /// shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.loss, r.k, r.patch_size, r.fix_ratio, self.policy
            );
        }
        out
    }

    pub fn summary(&self) -> RunSummary {
        let mut steps_at_level = vec![0; self.levels];
        for r in &self.records {
            steps_at_level[r.k] += 1;
        }
        let last = self.records.last();
        let triggered_steps = self
            .records
            .iter()
            .map(|r| r.triggered)
            .try_fold(0usize, |n, t| t.map(|t| n + usize::from(t)));
        RunSummary {
            policy: self.policy,
            threshold: self.threshold,
            steps: self.records.len(),
            steps_at_level,
            final_k: last.map_or(0, |r| r.k),
            final_patch_size: last.map_or(0, |r| r.patch_size),
            final_fix_ratio: last.map_or(0.0, |r| r.fix_ratio),
            triggered_steps,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

fn record(step: usize, loss: f64, state: &CurriculumState, triggered: Option<bool>) -> StepRecord {
    let (patch_size, fix_ratio) = state.current();
    StepRecord {
        step,
        loss,
        k: state.k(),
        patch_size,
        fix_ratio,
        triggered,
    }
}

/// Replays `trace` through the controller, one step per loss.
pub fn run_controller(trace: &LossTrace, config: &ControllerConfig) -> Result<RunReport> {
    let mut state = config.build(trace.len())?;
    let mut records = Vec::with_capacity(trace.len());
    for (t, &loss) in trace.as_slice().iter().enumerate() {
        state.step(t, loss)?;
        records.push(record(t, loss, &state, None));
    }
    Ok(RunReport {
        policy: config.policy,
        threshold: config.threshold,
        levels: state.levels(),
        records,
    })
}

/// Batch settings for the augmentation half of a simulated step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimAugConfig {
    pub data: SynthSpec,
    pub trigger_prob: f64,
    pub mode: ShuffleMode,
}

/// Runs `steps` synthetic iterations. With `aug`, one generated batch is
/// augmented at every step using the controller's current `(p, f)`.
///
/// The controller's Random policy and the augmentation stream use seeds
/// derived from `config.seed`; the learner keeps its own generator.
pub fn simulate_training(
    learner: &mut SyntheticLearner,
    config: &ControllerConfig,
    steps: usize,
    aug: Option<&SimAugConfig>,
) -> Result<RunReport> {
    if steps == 0 {
        return Err(Error::Invalid("simulation needs at least one step".into()));
    }
    let mut seeds = SplitMix64::new(config.seed);
    let controller_seed = seeds.next_u64();
    let aug_seed = seeds.next_u64();

    let mut state = ControllerConfig {
        seed: controller_seed,
        ..config.clone()
    }
    .build(steps)?;

    let mut aug_rng = Xoshiro256StarStar::seed_from_u64(aug_seed);
    let data = match aug {
        Some(a) => {
            check_unit("trigger_prob", a.trigger_prob)?;
            Some(generate(&a.data, &mut aug_rng)?)
        }
        None => None,
    };

    let mut records = Vec::with_capacity(steps);
    for t in 0..steps {
        let loss = learner.loss_at(t);
        state.step(t, loss)?;
        let triggered = match (aug, &data) {
            (Some(a), Some((images, labels))) => {
                let (patch_size, beta) = state.current();
                let params = AugmentParams {
                    beta,
                    patch_size,
                    mode: a.mode,
                    trigger_prob: a.trigger_prob,
                };
                Some(augment_batch(images, labels, &params, &mut aug_rng)?.triggered)
            }
            _ => None,
        };
        records.push(record(t, loss, &state, triggered));
    }
    Ok(RunReport {
        policy: config.policy,
        threshold: config.threshold,
        levels: state.levels(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptedLabels {
    pub labels: LabelBatch,
    /// Sorted indices whose labels were redrawn.
    pub selected: Vec<usize>,
}

/// Picks `round(B * ratio)` samples without replacement and redraws their
/// labels uniformly over all classes (the old label may come back).
pub fn corrupt_labels(
    labels: &LabelBatch,
    ratio: f64,
    rng: &mut Xoshiro256StarStar,
) -> Result<CorruptedLabels> {
    check_unit("ratio", ratio)?;
    let b = labels.len();
    let count = (b as f64 * ratio).round() as usize;
    let selected = rng.sample_indices(b, count.min(b));
    let mut out = labels.as_slice().to_vec();
    for &s in &selected {
        out[s] = rng.below(labels.classes()) as u32;
    }
    Ok(CorruptedLabels {
        labels: LabelBatch::new(out, labels.classes())?,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(l: &[f64]) -> LossTrace {
        LossTrace::new(l.to_vec()).unwrap()
    }

    #[test]
    fn golden_replays() {
        let t = trace(&[3.0, 5.0, 3.0, 5.0, 3.0]);
        let hold = run_controller(
            &t,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveHold),
        )
        .unwrap();
        assert_eq!(hold.k_sequence(), [1, 1, 2, 2, 3]);
        let back = run_controller(
            &t,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveBack),
        )
        .unwrap();
        assert_eq!(back.k_sequence(), [1, 0, 1, 0, 1]);
    }

    #[test]
    fn golden_hold_csv() {
        let t = trace(&[3.0, 5.0, 3.0, 5.0, 3.0]);
        let csv = run_controller(
            &t,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveHold),
        )
        .unwrap()
        .to_csv();
        assert_eq!(
            csv,
            "step,loss,k,patch_size,fix_ratio,policy\n\
             0,3,1,128,0.8,hold\n\
             1,5,1,128,0.8,hold\n\
             2,3,2,96,0.7,hold\n\
             3,5,2,96,0.7,hold\n\
             4,3,3,64,0.6,hold\n"
        );
    }

    #[test]
    fn easy_trace_saturates() {
        let t = trace(&[1.0; 10]);
        let r = run_controller(
            &t,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveHold),
        )
        .unwrap();
        assert_eq!(r.k_sequence(), [1, 2, 3, 4, 5, 6, 6, 6, 6, 6]);
        let s = r.summary();
        assert_eq!(s.final_k, 6);
        assert_eq!(s.steps_at_level, [0, 1, 1, 1, 1, 1, 5]);
        assert_eq!(s.triggered_steps, None);
    }

    #[test]
    fn trace_validation() {
        assert!(LossTrace::new(vec![]).is_err());
        assert!(LossTrace::new(vec![1.0, -0.5]).is_err());
        assert!(LossTrace::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn constant_learner_holds_level_zero() {
        let mut learner = SyntheticLearner::new(8.0, f64::INFINITY, 0.0, 1).unwrap();
        let r = simulate_training(
            &mut learner,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveHold),
            20,
            None,
        )
        .unwrap();
        assert!(r.records.iter().all(|rec| rec.k == 0 && rec.loss == 8.0));
    }

    #[test]
    fn fast_learner_advances_from_step_one() {
        // 8 e^0 = 8 >= 4 at t = 0; 8 e^-1 ~ 2.94 < 4 at t = 1.
        let mut learner = SyntheticLearner::new(8.0, 1.0, 0.0, 1).unwrap();
        let r = simulate_training(
            &mut learner,
            &ControllerConfig::with_policy(SchedulerPolicy::LossDriveHold),
            4,
            None,
        )
        .unwrap();
        assert_eq!(r.k_sequence(), [0, 1, 2, 3]);
        for rec in &r.records {
            assert!((rec.loss - 8.0 * (-(rec.step as f64)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn learner_validation() {
        assert!(SyntheticLearner::new(0.0, 1.0, 0.0, 0).is_err());
        assert!(SyntheticLearner::new(1.0, 0.0, 0.0, 0).is_err());
        assert!(SyntheticLearner::new(1.0, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn noisy_losses_never_negative() {
        let mut learner = SyntheticLearner::new(0.5, 2.0, 3.0, 4).unwrap();
        assert!((0..500).all(|t| learner.loss_at(t) >= 0.0));
    }

    #[test]
    fn simulation_with_augmentation_is_deterministic() {
        let aug = SimAugConfig {
            data: SynthSpec {
                batch: 3,
                channels: 1,
                side: 384,
                classes: 2,
            },
            trigger_prob: 0.5,
            mode: ShuffleMode::Split,
        };
        let config = ControllerConfig {
            seed: 99,
            ..ControllerConfig::with_policy(SchedulerPolicy::LossDriveBack)
        };
        let run = || {
            let mut learner = SyntheticLearner::new(6.0, 5.0, 1.0, 3).unwrap();
            simulate_training(&mut learner, &config, 12, Some(&aug)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.summary_json(), b.summary_json());
        assert!(a.records.iter().all(|r| r.triggered.is_some()));
        assert!(a.summary().triggered_steps.is_some());
    }

    #[test]
    fn corruption_counts() {
        let labels = LabelBatch::new(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2).unwrap();
        let mut rng = Xoshiro256StarStar::seed_from_u64(12);

        let c = corrupt_labels(&labels, 0.0, &mut rng).unwrap();
        assert_eq!(c.labels, labels);
        assert!(c.selected.is_empty());

        let c = corrupt_labels(&labels, 0.2, &mut rng).unwrap();
        assert_eq!(c.selected.len(), 2);
        let changed = (0..10)
            .filter(|&s| c.labels.get(s) != labels.get(s))
            .count();
        assert!(changed <= 2);
        for s in (0..10).filter(|s| !c.selected.contains(s)) {
            assert_eq!(c.labels.get(s), labels.get(s));
        }

        let c = corrupt_labels(&labels, 1.0, &mut rng).unwrap();
        assert_eq!(c.selected, (0..10).collect::<Vec<_>>());
        assert!(corrupt_labels(&labels, 1.5, &mut rng).is_err());
    }
}
