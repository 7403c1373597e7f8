//! Pre-training a general table on pooled first-week data, then running
//! day-by-day learning from it.

use rayon::prelude::*;

use super::{
    run_day_by_day_from, Arm, ExperimentError, ExperimentOutput, ExperimentReport, LearningSetup,
    NamedTable,
};
use crate::qlearn::{interleave_day_episodes, train_on_episodes, QTable, QTableMetadata};
use crate::rng::derive_seed;
use crate::traces::SlotSeries;

pub const TRANSFER_PRETRAIN_DAYS: usize = 7;
const PRETRAIN_TAG: u64 = 0x7072_6574_7261_696e;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub output: ExperimentOutput,
    pub pretrained: QTable,
}

/// Trains a general table on the interleaved first week of every base, then
/// runs day-by-day learning on each base's remaining days twice: warm-started
/// from the general table and cold from an empty one. Both arms use the same
/// seeds. Passing `prior` skips pre-training and uses it instead.
pub fn run_transfer(
    bases: &[SlotSeries],
    setup: &LearningSetup,
    seed: u64,
    prior: Option<QTable>,
) -> Result<TransferOutcome, ExperimentError> {
    setup.validate()?;
    let needed = TRANSFER_PRETRAIN_DAYS + 2;
    if let Some(short) = bases.iter().find(|b| b.days() < needed) {
        return Err(ExperimentError::TooShort {
            what: "transfer learning",
            needed,
            got: short.days(),
        });
    }
    if bases.is_empty() {
        return Err(ExperimentError::EmptyFleet);
    }
    let (pretrained, episodes) = match prior {
        Some(t) => (t, 0),
        None => {
            let refs: Vec<&SlotSeries> = bases.iter().collect();
            let out = train_on_episodes(
                QTable::new(),
                &interleave_day_episodes(&refs, 0..TRANSFER_PRETRAIN_DAYS),
                &setup.hardware,
                &setup.hyperparameters,
                &setup.convergence,
                derive_seed(seed, PRETRAIN_TAG),
            )?;
            (out.table, out.episodes_run)
        }
    };

    let runs = bases
        .par_iter()
        .map(|s| {
            let days = TRANSFER_PRETRAIN_DAYS..s.days();
            let warm = run_day_by_day_from(s, pretrained.clone(), days.clone(), setup, seed, Arm::TransferWarm)?;
            let cold = run_day_by_day_from(s, QTable::new(), days, setup, seed, Arm::TransferCold)?;
            Ok((warm, cold))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let hp = &setup.hyperparameters;
    let mut report = ExperimentReport::new("transfer", seed);
    let mut tables = vec![NamedTable {
        name: "pretrained".into(),
        file: pretrained.to_file(QTableMetadata {
            hyperparameters: *hp,
            training_episodes: episodes as u64,
            source_traces: bases.iter().map(|b| b.node_id().to_string()).collect(),
        }),
    }];
    for (warm, cold) in runs {
        for run in [warm, cold] {
            tables.push(run.named_table(hp));
            report.push_run(run);
        }
    }
    Ok(TransferOutcome {
        output: ExperimentOutput { report, tables },
        pretrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlearn::ConvergenceCriterion;
    use crate::traces::{Calendar, LightTrace, DEFAULT_START};

    #[test]
    fn zero_prior_arm_equals_cold_arm() {
        let bases: Vec<SlotSeries> = [200.0, 900.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let t = LightTrace::constant(format!("b{i}"), DEFAULT_START, 10, l);
                SlotSeries::from_trace(&t, 900, Calendar::default()).unwrap()
            })
            .collect();
        let setup = LearningSetup {
            convergence: ConvergenceCriterion {
                episode_cap: 200,
                ..ConvergenceCriterion::default()
            },
            ..LearningSetup::default()
        };
        let out = run_transfer(&bases, &setup, 3, Some(QTable::new())).unwrap();
        let r = &out.output.report;
        for b in &bases {
            let warm: Vec<_> = r.per_day.iter().filter(|d| d.node_id == b.node_id() && d.arm == Arm::TransferWarm).collect();
            let cold: Vec<_> = r.per_day.iter().filter(|d| d.node_id == b.node_id() && d.arm == Arm::TransferCold).collect();
            assert_eq!(warm.len(), 3);
            for (w, c) in warm.iter().zip(&cold) {
                assert_eq!((w.reward, w.samples_sent, w.depleted), (c.reward, c.samples_sent, c.depleted));
            }
        }
    }

    #[test]
    fn needs_more_than_a_week() {
        let t = LightTrace::constant("b", DEFAULT_START, 8, 100.0);
        let s = SlotSeries::from_trace(&t, 900, Calendar::default()).unwrap();
        assert!(matches!(
            run_transfer(&[s], &LearningSetup::default(), 1, None),
            Err(ExperimentError::TooShort { .. })
        ));
    }
}
