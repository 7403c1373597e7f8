//! The four scaling methods: nightly day-by-day retraining, the dynamic
//! training interval, shared cluster policies and transfer learning.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{HardwareConfig, NodeEnergyState};
use crate::envsim::{run_day, run_slots, Action, FixedPolicy, Policy, SimError, SLOTS_PER_DAY};
use crate::qlearn::{
    train_on_episodes, ConvergenceCriterion, Episode, GreedyPolicy, Hyperparameters, LearnError,
    QTable, QTableFile, QTableMetadata,
};
use crate::rng::{derive_seed, hash_str};
use crate::traces::{SlotSeries, TraceError};

mod fleet;
mod output;
mod transfer;

pub use fleet::{
    build_fleet, cluster_by_means, cluster_fleet, run_shared_policy, ClusterAssignment, Fleet,
    FleetMember, FleetSpec, SharedPolicyOutcome,
};
pub use output::{read_report, write_day_csv, write_plot_csvs, write_report_json};
pub use transfer::{run_transfer, TransferOutcome, TRANSFER_PRETRAIN_DAYS};

/// The deployed policy before the first training.
pub const FIRST_DAY_ACTION: u8 = 1;
pub const SLOTS_PER_HOUR: usize = 4;
pub const DEFAULT_INTERVAL_CAP_HOURS: u32 = 168;
pub const DEFAULT_INTERVAL_MIN_HOURS: u32 = 1;

const TRAIN_TAG: u64 = 0x0074_7261_696e;
const EXEC_TAG: u64 = 0x6578_6563;
const EVAL_TAG: u64 = 0x6576_616c;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{what} needs at least {needed} days of data, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("invalid cluster assignment: {0}")]
    Assignment(String),
    #[error("empty fleet")]
    EmptyFleet,
    #[error("invalid options: {0}")]
    Options(String),
}

/// Hardware model and learner settings shared by every arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningSetup {
    pub hardware: HardwareConfig,
    pub hyperparameters: Hyperparameters,
    pub convergence: ConvergenceCriterion,
}

impl LearningSetup {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.hardware.validate().map_err(SimError::from)?;
        self.hyperparameters.validate()?;
        self.convergence.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    DayByDay,
    Dynamic,
    Cluster,
    Global,
    TransferWarm,
    TransferCold,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::DayByDay => "day_by_day",
            Arm::Dynamic => "dynamic",
            Arm::Cluster => "cluster",
            Arm::Global => "global",
            Arm::TransferWarm => "transfer_warm",
            Arm::TransferCold => "transfer_cold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: usize,
    pub node_id: String,
    pub arm: Arm,
    pub reward: f64,
    pub depleted: bool,
    pub samples_sent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingEvent {
    pub node_id: String,
    pub arm: Arm,
    /// Slot index at which training ran (data up to, not including, this slot).
    pub slot: usize,
    pub day: usize,
    pub episodes: usize,
    pub converged: bool,
    /// Whether the new table replaced the deployed one.
    pub deployed: bool,
    /// Interval until the next training, for the dynamic arm.
    pub next_interval_hours: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: String,
    pub arm: Arm,
    pub days: usize,
    pub trainings_performed: usize,
    pub negative_reward_days: usize,
    pub depletion_days: usize,
    pub total_reward: f64,
    pub samples_sent: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub members: usize,
    pub centroid_lux: f64,
    pub training_episodes: usize,
}

/// Everything a run produced, in a stable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub nodes: Vec<NodeSummary>,
    #[serde(default)]
    pub clusters: Vec<ClusterSummary>,
    pub trainings: Vec<TrainingEvent>,
    pub per_day: Vec<DayRecord>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            nodes: Vec::new(),
            clusters: Vec::new(),
            trainings: Vec::new(),
            per_day: Vec::new(),
        }
    }

    pub fn push_run(&mut self, run: NodeRun) {
        self.nodes.push(run.summary());
        self.trainings.extend(run.trainings);
        self.per_day.extend(run.days);
    }

    pub fn node(&self, node_id: &str, arm: Arm) -> Option<&NodeSummary> {
        self.nodes.iter().find(|n| n.node_id == node_id && n.arm == arm)
    }
}

/// A table produced by a run, named for the file it is written to.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTable {
    pub name: String,
    pub file: QTableFile,
}

/// One node's trajectory under one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRun {
    pub node_id: String,
    pub arm: Arm,
    pub days: Vec<DayRecord>,
    pub trainings: Vec<TrainingEvent>,
    pub table: QTable,
    pub training_episodes: u64,
}

impl NodeRun {
    fn new(node_id: &str, arm: Arm, table: QTable) -> Self {
        Self {
            node_id: node_id.to_string(),
            arm,
            days: Vec::new(),
            trainings: Vec::new(),
            table,
            training_episodes: 0,
        }
    }

    pub fn summary(&self) -> NodeSummary {
        NodeSummary {
            node_id: self.node_id.clone(),
            arm: self.arm,
            days: self.days.len(),
            trainings_performed: self.trainings.len(),
            negative_reward_days: self.days.iter().filter(|d| d.reward < 0.0).count(),
            depletion_days: self.days.iter().filter(|d| d.depleted).count(),
            total_reward: self.days.iter().map(|d| d.reward).sum(),
            samples_sent: self.days.iter().map(|d| d.samples_sent).sum(),
            cluster: None,
        }
    }

    pub fn named_table(&self, hp: &Hyperparameters) -> NamedTable {
        NamedTable {
            name: format!("{}-{}", self.arm.name(), self.node_id),
            file: self.table.to_file(QTableMetadata {
                hyperparameters: *hp,
                training_episodes: self.training_episodes,
                source_traces: vec![self.node_id.clone()],
            }),
        }
    }

    fn record_day(&mut self, day: usize, reward: f64, depletions: u32, samples_sent: u64) {
        self.days.push(DayRecord {
            day,
            node_id: self.node_id.clone(),
            arm: self.arm,
            reward,
            depleted: depletions > 0,
            samples_sent,
        });
    }
}

/// A report together with the tables it references.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub tables: Vec<NamedTable>,
}

/// Independent stream for `node_id` within a run.
pub fn node_seed(seed: u64, node_id: &str) -> u64 {
    derive_seed(seed, hash_str(node_id))
}

/// A blank prior carries no information and is treated as an empty table,
/// so warm-starting from zeros reproduces a cold start exactly.
fn normalize_prior(table: QTable) -> QTable {
    if table.is_blank() {
        QTable::new()
    } else {
        table
    }
}

/// Nightly retraining over every day of `series`.
pub fn run_day_by_day(
    series: &SlotSeries,
    setup: &LearningSetup,
    seed: u64,
) -> Result<NodeRun, ExperimentError> {
    run_day_by_day_from(series, QTable::new(), 0..series.days(), setup, seed, Arm::DayByDay)
}

/// Day-by-day learning over `days`, starting from `initial`.
///
/// The first day runs the fixed 5-minute policy when `initial` is blank and
/// the greedy policy of `initial` otherwise. After every day but the last,
/// the table is retrained on that day's data, warm-started from the current
/// table, and the following day runs greedily on the result. The node's
/// energy state carries over between days.
pub fn run_day_by_day_from(
    series: &SlotSeries,
    initial: QTable,
    days: Range<usize>,
    setup: &LearningSetup,
    seed: u64,
    arm: Arm,
) -> Result<NodeRun, ExperimentError> {
    setup.validate()?;
    if days.len() < 2 || days.end > series.days() {
        return Err(ExperimentError::TooShort {
            what: "day-by-day learning",
            needed: days.start + 2,
            got: series.days(),
        });
    }
    let hw = &setup.hardware;
    let seed = node_seed(seed, series.node_id());
    let train_seed = derive_seed(seed, TRAIN_TAG);
    let exec_seed = derive_seed(seed, EXEC_TAG);
    let mut run = NodeRun::new(series.node_id(), arm, normalize_prior(initial));
    let mut trained = !run.table.is_empty();
    let mut node = NodeEnergyState::initial(hw);

    for day in days.clone() {
        let out = if trained {
            let mut policy = GreedyPolicy::new(&run.table, derive_seed(exec_seed, day as u64));
            run_day(node, &mut policy, series, day, hw)?
        } else {
            let mut policy = FixedPolicy(Action::ALL[FIRST_DAY_ACTION as usize]);
            run_day(node, &mut policy, series, day, hw)?
        };
        node = out.node;
        run.record_day(day, out.reward, out.depletions, out.samples_sent);

        if day + 1 < days.end {
            let episodes = [Episode {
                series,
                slots: day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY,
            }];
            let table = std::mem::take(&mut run.table);
            let outcome = train_on_episodes(
                table,
                &episodes,
                hw,
                &setup.hyperparameters,
                &setup.convergence,
                derive_seed(train_seed, day as u64),
            )?;
            run.table = outcome.table;
            run.training_episodes += outcome.episodes_run as u64;
            run.trainings.push(TrainingEvent {
                node_id: run.node_id.clone(),
                arm,
                slot: (day + 1) * SLOTS_PER_DAY,
                day,
                episodes: outcome.episodes_run,
                converged: outcome.converged,
                deployed: true,
                next_interval_hours: None,
            });
            trained = true;
        }
    }
    Ok(run)
}

/// Dynamic-interval settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicOptions {
    pub initial_interval_hours: u32,
    pub min_interval_hours: u32,
    pub max_interval_hours: u32,
    /// Train and evaluate on the most recent days only instead of all data.
    pub window_days: Option<usize>,
    /// Keep the deployed table when the new one scores worse. By default the
    /// newest table is always deployed and the comparison only sets the interval.
    pub keep_better: bool,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        Self {
            initial_interval_hours: DEFAULT_INTERVAL_MIN_HOURS,
            min_interval_hours: DEFAULT_INTERVAL_MIN_HOURS,
            max_interval_hours: DEFAULT_INTERVAL_CAP_HOURS,
            window_days: None,
            keep_better: false,
        }
    }
}

impl DynamicOptions {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let ok = self.min_interval_hours >= 1
            && self.min_interval_hours <= self.initial_interval_hours
            && self.initial_interval_hours <= self.max_interval_hours
            && self.window_days != Some(0);
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::Options(
                "require 1 <= min <= initial <= max interval and a non-zero window".into(),
            ))
        }
    }

    /// Interval after a training that did (`success`) or did not improve.
    pub fn next_interval(&self, current: u32, success: bool) -> u32 {
        if success {
            current.saturating_mul(2).min(self.max_interval_hours)
        } else {
            (current / 2).max(self.min_interval_hours)
        }
    }
}

enum Deployed {
    Fixed(Action),
    Table(QTable),
}

impl Deployed {
    fn evaluate(
        &self,
        series: &SlotSeries,
        slots: Range<usize>,
        hw: &HardwareConfig,
        seed: u64,
    ) -> Result<f64, ExperimentError> {
        let mut total = 0.0;
        let mut node = NodeEnergyState::initial(hw);
        let mut fixed;
        let mut greedy;
        let policy: &mut dyn Policy = match self {
            Deployed::Fixed(a) => {
                fixed = FixedPolicy(*a);
                &mut fixed
            }
            Deployed::Table(t) => {
                greedy = GreedyPolicy::new(t, seed);
                &mut greedy
            }
        };
        let mut start = slots.start;
        while start < slots.end {
            let end = ((start / SLOTS_PER_DAY + 1) * SLOTS_PER_DAY).min(slots.end);
            let out = run_slots(node, policy, series, start..end, hw)?;
            node = out.node;
            total += out.reward;
            start = end;
        }
        Ok(total)
    }
}

/// Episodes covering `slots`: whole days plus a trailing partial day.
fn episodes_for(series: &SlotSeries, slots: Range<usize>) -> Vec<Episode<'_>> {
    let mut out = Vec::new();
    let mut start = slots.start;
    while start < slots.end {
        let end = ((start / SLOTS_PER_DAY + 1) * SLOTS_PER_DAY).min(slots.end);
        out.push(Episode {
            series,
            slots: start..end,
        });
        start = end;
    }
    out
}

/// Dynamic training interval with default options.
pub fn run_dynamic_interval(
    series: &SlotSeries,
    setup: &LearningSetup,
    seed: u64,
) -> Result<NodeRun, ExperimentError> {
    run_dynamic_interval_with(series, setup, &DynamicOptions::default(), seed)
}

/// Retrains at hour boundaries on an adaptive schedule.
///
/// The node starts on the fixed 5-minute policy. At each training instant a
/// new table is trained (warm-started from the deployed one) on the data
/// collected so far, and both tables are scored greedily on that data from a
/// fresh node with the same tie-break seed. The new table is deployed when it
/// scores at least as well, and the interval doubles; otherwise the old one
/// stays and the interval halves.
pub fn run_dynamic_interval_with(
    series: &SlotSeries,
    setup: &LearningSetup,
    options: &DynamicOptions,
    seed: u64,
) -> Result<NodeRun, ExperimentError> {
    setup.validate()?;
    options.validate()?;
    let days = series.days();
    if days < 2 {
        return Err(ExperimentError::TooShort {
            what: "dynamic interval learning",
            needed: 2,
            got: days,
        });
    }
    let hw = &setup.hardware;
    let seed = node_seed(seed, series.node_id());
    let train_seed = derive_seed(seed, TRAIN_TAG);
    let exec_seed = derive_seed(seed, EXEC_TAG);
    let eval_seed = derive_seed(seed, EVAL_TAG);
    let total_slots = days * SLOTS_PER_DAY;

    let mut run = NodeRun::new(series.node_id(), Arm::Dynamic, QTable::new());
    let mut deployed = Deployed::Fixed(Action::ALL[FIRST_DAY_ACTION as usize]);
    let mut interval = options.initial_interval_hours;
    let mut next_training = interval as usize * SLOTS_PER_HOUR;
    let mut node = NodeEnergyState::initial(hw);
    let mut training_count = 0u64;

    for day in 0..days {
        let day_end = (day + 1) * SLOTS_PER_DAY;
        let mut slot = day * SLOTS_PER_DAY;
        let (mut reward, mut depletions, mut samples) = (0.0, 0u32, 0u64);
        // Tie-break stream restarts at every day and every redeployment.
        let mut segment = 0u64;
        while slot < day_end {
            let end = next_training.min(day_end);
            let out = match &deployed {
                Deployed::Fixed(a) => run_slots(node, &mut FixedPolicy(*a), series, slot..end, hw)?,
                Deployed::Table(t) => {
                    let s = derive_seed(derive_seed(exec_seed, day as u64), segment);
                    run_slots(node, &mut GreedyPolicy::new(t, s), series, slot..end, hw)?
                }
            };
            node = out.node;
            reward += out.reward;
            depletions += out.depletions;
            samples += out.samples_sent;
            slot = end;
            segment += 1;

            if slot == next_training && slot < total_slots {
                let first = match options.window_days {
                    Some(w) => slot.saturating_sub(w * SLOTS_PER_DAY),
                    None => 0,
                };
                let window = first..slot;
                let prior = match &deployed {
                    Deployed::Fixed(_) => QTable::new(),
                    Deployed::Table(t) => t.clone(),
                };
                let outcome = train_on_episodes(
                    prior,
                    &episodes_for(series, window.clone()),
                    hw,
                    &setup.hyperparameters,
                    &setup.convergence,
                    derive_seed(train_seed, training_count),
                )?;
                let s = derive_seed(eval_seed, training_count);
                let old_score = deployed.evaluate(series, window.clone(), hw, s)?;
                let candidate = Deployed::Table(outcome.table);
                let new_score = candidate.evaluate(series, window, hw, s)?;
                let success = new_score >= old_score;
                let deploy = success || !options.keep_better;
                if deploy {
                    deployed = candidate;
                }
                interval = options.next_interval(interval, success);
                next_training = slot + interval as usize * SLOTS_PER_HOUR;
                training_count += 1;
                run.training_episodes += outcome.episodes_run as u64;
                run.trainings.push(TrainingEvent {
                    node_id: run.node_id.clone(),
                    arm: Arm::Dynamic,
                    slot,
                    day: slot / SLOTS_PER_DAY,
                    episodes: outcome.episodes_run,
                    converged: outcome.converged,
                    deployed: deploy,
                    next_interval_hours: Some(interval),
                });
            }
        }
        run.record_day(day, reward, depletions, samples);
    }
    if let Deployed::Table(t) = deployed {
        run.table = t;
    }
    Ok(run)
}

/// Runs `f` on every series in parallel, keeping input order.
pub fn run_suite<F>(series: &[SlotSeries], f: F) -> Result<Vec<NodeRun>, ExperimentError>
where
    F: Fn(&SlotSeries) -> Result<NodeRun, ExperimentError> + Sync + Send,
{
    series.par_iter().map(f).collect()
}

/// Day-by-day learning for each node, assembled into one report.
pub fn day_by_day_report(
    series: &[SlotSeries],
    setup: &LearningSetup,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    let runs = run_suite(series, |s| run_day_by_day(s, setup, seed))?;
    Ok(assemble("daybyday", seed, runs, &setup.hyperparameters))
}

/// Dynamic-interval learning for each node, assembled into one report.
pub fn dynamic_report(
    series: &[SlotSeries],
    setup: &LearningSetup,
    options: &DynamicOptions,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    let runs = run_suite(series, |s| run_dynamic_interval_with(s, setup, options, seed))?;
    Ok(assemble("dynamic", seed, runs, &setup.hyperparameters))
}

fn assemble(name: &str, seed: u64, runs: Vec<NodeRun>, hp: &Hyperparameters) -> ExperimentOutput {
    let mut report = ExperimentReport::new(name, seed);
    let mut tables = Vec::with_capacity(runs.len());
    for run in runs {
        tables.push(run.named_table(hp));
        report.push_run(run);
    }
    ExperimentOutput { report, tables }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::{Calendar, LightTrace, DEFAULT_START};

    fn series(id: &str, days: usize, lux: f64) -> SlotSeries {
        let t = LightTrace::constant(id, DEFAULT_START, days, lux);
        SlotSeries::from_trace(&t, 900, Calendar::default()).unwrap()
    }

    fn quick() -> LearningSetup {
        LearningSetup {
            convergence: ConvergenceCriterion {
                episode_cap: 200,
                ..ConvergenceCriterion::default()
            },
            ..LearningSetup::default()
        }
    }

    #[test]
    fn baseline_trains_once_per_elapsed_day() {
        let s = series("stair", 5, 400.0);
        let run = run_day_by_day(&s, &quick(), 3).unwrap();
        assert_eq!(run.trainings.len(), 4);
        assert_eq!(run.days.len(), 5);
        // Fixed 5-minute policy on day 0: three events per slot.
        assert_eq!(run.days[0].samples_sent, 96 * 3);
        assert_eq!(run.days[0].reward, 96.0);
    }

    #[test]
    fn baseline_needs_two_days() {
        let s = series("n", 1, 400.0);
        assert!(matches!(
            run_day_by_day(&s, &quick(), 1),
            Err(ExperimentError::TooShort { .. })
        ));
    }

    #[test]
    fn zero_prior_matches_cold_start() {
        let s = series("n", 4, 300.0);
        let cold = run_day_by_day(&s, &quick(), 9).unwrap();
        let mut zeros = QTable::new();
        for st in crate::envsim::ObservedState::all() {
            zeros.set(&st, Action::ALL[2], 0.0);
        }
        let warm = run_day_by_day_from(&s, zeros, 0..4, &quick(), 9, Arm::DayByDay).unwrap();
        assert_eq!(cold, warm);
    }

    #[test]
    fn interval_rule() {
        let o = DynamicOptions::default();
        let mut i = 1;
        let mut seen = vec![i];
        for _ in 0..4 {
            i = o.next_interval(i, true);
            seen.push(i);
        }
        assert_eq!(seen, [1, 2, 4, 8, 16]);
        assert_eq!(o.next_interval(4, false), 2);
        assert_eq!(o.next_interval(1, false), 1);
        assert_eq!(o.next_interval(128, true), 168);
        assert_eq!(o.next_interval(168, true), 168);
    }

    #[test]
    fn dynamic_trains_at_hour_boundaries_and_is_deterministic() {
        let s = series("n", 3, 800.0);
        let a = run_dynamic_interval(&s, &quick(), 5).unwrap();
        let b = run_dynamic_interval(&s, &quick(), 5).unwrap();
        assert_eq!(a, b);
        assert!(!a.trainings.is_empty());
        assert_eq!(a.trainings[0].slot, SLOTS_PER_HOUR);
        for w in a.trainings.windows(2) {
            let gap = w[1].slot - w[0].slot;
            assert_eq!(gap % SLOTS_PER_HOUR, 0);
            assert_eq!(gap / SLOTS_PER_HOUR, w[0].next_interval_hours.unwrap() as usize);
        }
        // At most one training per hour of elapsed data.
        assert!(a.trainings.len() < 3 * 24);
        assert_eq!(a.days.len(), 3);
    }

    #[test]
    fn partial_day_episodes() {
        let s = series("n", 3, 100.0);
        let e = episodes_for(&s, 0..96 + 10);
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].slots, 96..106);
    }

    #[test]
    fn report_counts_negative_days() {
        let mut run = NodeRun::new("n", Arm::DayByDay, QTable::new());
        run.record_day(0, 96.0, 0, 288);
        run.record_day(1, -40.0, 1, 100);
        let s = run.summary();
        assert_eq!(s.negative_reward_days, 1);
        assert_eq!(s.depletion_days, 1);
        assert_eq!(s.total_reward, 56.0);
    }
}
