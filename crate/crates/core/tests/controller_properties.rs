use cellmix_core::curriculum::{
    CurriculumState, SchedulerPolicy, DEFAULT_FIX_RATIOS, DEFAULT_PATCH_SIZES,
};
use cellmix_core::rng::Xoshiro256StarStar;
use cellmix_core::sim::{corrupt_labels, run_controller, ControllerConfig, LossTrace};
use cellmix_core::LabelBatch;
use proptest::prelude::*;

fn losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..8.0, 1..200)
}

proptest! {
    #[test]
    fn hold_never_decreases(trace in losses()) {
        let mut s = CurriculumState::with_defaults(SchedulerPolicy::LossDriveHold);
        let mut prev = s.k();
        for l in trace {
            s.loss_drive_step(l).unwrap();
            prop_assert!(s.k() >= prev && s.k() <= prev + 1);
            prop_assert!(s.k() <= s.k_max());
            prev = s.k();
        }
    }

    #[test]
    fn back_moves_at_most_one_level(trace in losses()) {
        let mut s = CurriculumState::with_defaults(SchedulerPolicy::LossDriveBack);
        let mut prev = s.k();
        for l in trace {
            s.loss_drive_step(l).unwrap();
            prop_assert!(s.k().abs_diff(prev) <= 1);
            if l >= 4.0 {
                prop_assert_eq!(s.k(), prev.saturating_sub(1));
            } else {
                prop_assert_eq!(s.k(), (prev + 1).min(6));
            }
            prev = s.k();
        }
    }

    #[test]
    fn all_easy_trace_reaches_the_top_in_k_max_steps(len in 1usize..30, below in 0.0f64..3.99) {
        for policy in [SchedulerPolicy::LossDriveHold, SchedulerPolicy::LossDriveBack] {
            let report = run_controller(
                &LossTrace::new(vec![below; len]).unwrap(),
                &ControllerConfig::with_policy(policy),
            ).unwrap();
            let expected: Vec<usize> = (1..=len).map(|t| t.min(6)).collect();
            prop_assert_eq!(report.k_sequence(), expected);
        }
    }

    #[test]
    fn emitted_pairs_come_from_the_schedules(trace in losses(), seed in any::<u64>(), which in 0usize..9) {
        let policy = SchedulerPolicy::all_defaults()[which];
        let config = ControllerConfig { seed, ..ControllerConfig::with_policy(policy) };
        let report = run_controller(&LossTrace::new(trace).unwrap(), &config).unwrap();
        for r in &report.records {
            prop_assert!(DEFAULT_PATCH_SIZES.contains(&r.patch_size));
            prop_assert!(DEFAULT_FIX_RATIOS.contains(&r.fix_ratio));
        }
    }

    #[test]
    fn corruption_touches_at_most_the_selected_count(
        labels in prop::collection::vec(0u32..4, 1..64),
        ratio in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let batch = LabelBatch::new(labels, 4).unwrap();
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        let out = corrupt_labels(&batch, ratio, &mut rng).unwrap();
        let budget = (batch.len() as f64 * ratio).round() as usize;
        prop_assert_eq!(out.selected.len(), budget);
        let changed = (0..batch.len()).filter(|&s| out.labels.get(s) != batch.get(s)).count();
        prop_assert!(changed <= budget);
        prop_assert!(out.labels.as_slice().iter().all(|&l| l < 4));
    }
}
