//! Report-level invariants of the experiment harness on small random inputs.

use proptest::prelude::*;

use harvest_rl::experiments::{
    cluster_by_means, day_by_day_report, dynamic_report, run_transfer, Arm, DynamicOptions,
    ExperimentReport, LearningSetup,
};
use harvest_rl::qlearn::{ConvergenceCriterion, QTable};
use harvest_rl::traces::{Calendar, LightTrace, SlotSeries, DEFAULT_START};

fn quick_setup() -> LearningSetup {
    LearningSetup {
        convergence: ConvergenceCriterion {
            episode_cap: 120,
            ..ConvergenceCriterion::default()
        },
        ..LearningSetup::default()
    }
}

/// Piecewise-constant days: each day has its own level, so runs see both
/// easy and starving days.
fn series(id: &str, levels: &[f64]) -> SlotSeries {
    let lux: Vec<f64> = levels.iter().flat_map(|&l| std::iter::repeat_n(l, 96)).collect();
    let t = LightTrace::new(id, DEFAULT_START, 900, lux).unwrap();
    SlotSeries::from_trace(&t, 900, Calendar::default()).unwrap()
}

fn check_report(r: &ExperimentReport) -> Result<(), TestCaseError> {
    for d in &r.per_day {
        prop_assert!((-300.0..=288.0).contains(&d.reward), "day reward {}", d.reward);
        prop_assert_eq!(d.reward < 0.0, d.depleted);
    }
    for n in &r.nodes {
        prop_assert_eq!(n.negative_reward_days, n.depletion_days);
        let days = r.per_day.iter().filter(|d| d.node_id == n.node_id && d.arm == n.arm).count();
        prop_assert_eq!(days, n.days);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, .. ProptestConfig::default() })]

    #[test]
    fn baseline_trains_once_per_night(levels in prop::collection::vec(prop_oneof![Just(0.0), 20.0..2500.0], 2..6), seed in 0u64..1000) {
        let s = series("n", &levels);
        let r = day_by_day_report(&[s], &quick_setup(), seed).unwrap().report;
        prop_assert_eq!(r.nodes[0].trainings_performed, levels.len() - 1);
        check_report(&r)?;
    }

    #[test]
    fn dynamic_trainings_stay_within_bounds(levels in prop::collection::vec(prop_oneof![Just(0.0), 20.0..2500.0], 2..4), seed in 0u64..1000) {
        let s = series("n", &levels);
        let r = dynamic_report(&[s], &quick_setup(), &DynamicOptions::default(), seed).unwrap().report;
        let hours = (levels.len() - 1) * 24;
        let t = r.nodes[0].trainings_performed;
        // One training per hour when every training fails; doubling gives at least a logarithmic count.
        prop_assert!(t <= hours, "{} trainings over {} hours", t, hours);
        prop_assert!(t as f64 >= ((hours + 1) as f64).log2().floor(), "{} trainings", t);
        check_report(&r)?;
    }

    #[test]
    fn clustering_is_a_partition(means in prop::collection::vec(0.0f64..2000.0, 1..60), k in 1usize..8) {
        let items: Vec<(String, f64)> = means.iter().enumerate().map(|(i, &m)| (format!("n{i:02}"), m)).collect();
        prop_assume!(k <= items.len());
        let a = cluster_by_means(&items, k).unwrap();
        prop_assert_eq!(a.assignment.len(), items.len());
        let sizes: Vec<usize> = (0..k).map(|c| a.members(c).len()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), items.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        // Clusters are ordered by brightness.
        for c in 1..k {
            let prev = a.members(c - 1).iter().map(|&i| means[i]).fold(f64::MIN, f64::max);
            let cur = a.members(c).iter().map(|&i| means[i]).fold(f64::MAX, f64::min);
            prop_assert!(prev <= cur);
        }
    }
}

#[test]
fn zero_prior_transfer_matches_cold_start() {
    let levels = [300.0, 0.0, 900.0, 40.0, 1500.0, 0.0, 0.0, 600.0, 200.0, 1000.0];
    let bases = vec![series("a", &levels), series("b", &levels.map(|l| l * 0.5))];
    let out = run_transfer(&bases, &quick_setup(), 17, Some(QTable::new())).unwrap();
    let r = &out.output.report;
    for b in ["a", "b"] {
        let pick = |arm| -> Vec<(f64, u64)> {
            r.per_day
                .iter()
                .filter(|d| d.node_id == b && d.arm == arm)
                .map(|d| (d.reward, d.samples_sent))
                .collect()
        };
        assert_eq!(pick(Arm::TransferWarm), pick(Arm::TransferCold));
    }
}
