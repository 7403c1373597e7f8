//! Augmented fleets, mean-light clustering and shared cluster policies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    Arm, ClusterSummary, DayRecord, ExperimentError, ExperimentOutput, ExperimentReport,
    LearningSetup, NamedTable, NodeSummary,
};
use crate::energy::NodeEnergyState;
use crate::envsim::run_day;
use crate::qlearn::{
    interleave_day_episodes, train_on_episodes, GreedyPolicy, QTable, QTableMetadata,
};
use crate::rng::{derive_seed, hash_str};
use crate::traces::{
    apply_augment, augmented_id, augmented_mean, draw_augment_params, AugmentParams, Calendar,
    LightTrace, SlotSeries,
};

/// Days at the start of each trace used for clustering and shared training.
pub const FIRST_WEEK_DAYS: usize = 7;
const FLEET_TAG: u64 = 0x0066_6c65_6574;
const EVAL_TAG: u64 = 0x7368_6172_6564;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub per_base_count: usize,
    pub cluster_count: usize,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            per_base_count: 200,
            cluster_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetMember {
    pub node_id: String,
    pub base: usize,
    pub params: AugmentParams,
}

/// Base traces plus augmentation draws; member traces are built on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub bases: Vec<LightTrace>,
    pub members: Vec<FleetMember>,
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn trace(&self, index: usize) -> LightTrace {
        let m = &self.members[index];
        apply_augment(&self.bases[m.base], m.params, m.node_id.clone())
    }

    /// Every member trace, materialized.
    pub fn traces(&self) -> Vec<LightTrace> {
        (0..self.len()).map(|i| self.trace(i)).collect()
    }

    /// Mean lux of member `index` over the first week.
    pub fn first_week_mean(&self, index: usize) -> f64 {
        let m = &self.members[index];
        let base = &self.bases[m.base];
        augmented_mean(base, m.params, 0..FIRST_WEEK_DAYS * base.samples_per_day())
    }
}

/// `per_base_count` augmented variants of each base, base-major.
pub fn build_fleet(bases: &[LightTrace], per_base_count: usize, seed: u64) -> Result<Fleet, ExperimentError> {
    if bases.is_empty() || per_base_count == 0 {
        return Err(ExperimentError::EmptyFleet);
    }
    if let Some(short) = bases.iter().find(|b| b.days() < FIRST_WEEK_DAYS) {
        return Err(ExperimentError::TooShort {
            what: "fleet construction",
            needed: FIRST_WEEK_DAYS,
            got: short.days(),
        });
    }
    let fleet_seed = derive_seed(seed, FLEET_TAG);
    let mut members = Vec::with_capacity(bases.len() * per_base_count);
    for (b, base) in bases.iter().enumerate() {
        let params = draw_augment_params(per_base_count, derive_seed(fleet_seed, b as u64), base.resolution());
        members.extend(params.into_iter().enumerate().map(|(i, params)| FleetMember {
            node_id: augmented_id(base, i),
            base: b,
            params,
        }));
    }
    Ok(Fleet {
        bases: bases.to_vec(),
        members,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_count: usize,
    /// Cluster of each item, in input order.
    pub assignment: Vec<usize>,
    pub node_ids: Vec<String>,
    /// Mean first-week lux of each cluster, lowest first.
    pub centroids: Vec<f64>,
}

impl ClusterAssignment {
    pub fn by_node(&self) -> BTreeMap<&str, usize> {
        self.node_ids
            .iter()
            .map(String::as_str)
            .zip(self.assignment.iter().copied())
            .collect()
    }

    /// Input indices of the members of `cluster`, in input order.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }

    /// Cluster whose centroid is closest to `mean_lux`; ties go to the lower cluster.
    pub fn nearest(&self, mean_lux: f64) -> usize {
        let mut best = 0;
        for (c, centroid) in self.centroids.iter().enumerate() {
            if (centroid - mean_lux).abs() < (self.centroids[best] - mean_lux).abs() {
                best = c;
            }
        }
        best
    }
}

/// Sorts by mean (ties by id) and cuts into `k` consecutive groups of equal
/// size; the remainder goes one each to the lowest clusters.
pub fn cluster_by_means(items: &[(String, f64)], k: usize) -> Result<ClusterAssignment, ExperimentError> {
    if items.is_empty() {
        return Err(ExperimentError::EmptyFleet);
    }
    if k == 0 || k > items.len() {
        return Err(ExperimentError::Assignment(format!(
            "cluster count {k} must be between 1 and the fleet size {}",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].1.total_cmp(&items[b].1).then_with(|| items[a].0.cmp(&items[b].0)));
    let (size, extra) = (items.len() / k, items.len() % k);
    let mut assignment = vec![0; items.len()];
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut pos = 0;
    for c in 0..k {
        let n = size + usize::from(c < extra);
        for &i in &order[pos..pos + n] {
            assignment[i] = c;
            sums[c] += items[i].1;
            counts[c] += 1;
        }
        pos += n;
    }
    Ok(ClusterAssignment {
        cluster_count: k,
        assignment,
        node_ids: items.iter().map(|(id, _)| id.clone()).collect(),
        centroids: sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect(),
    })
}

/// Quantile clustering of the fleet by first-week mean lux.
pub fn cluster_fleet(fleet: &Fleet, k: usize) -> Result<ClusterAssignment, ExperimentError> {
    let items: Vec<(String, f64)> = (0..fleet.len())
        .into_par_iter()
        .map(|i| (fleet.members[i].node_id.clone(), fleet.first_week_mean(i)))
        .collect();
    cluster_by_means(&items, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedPolicyOutcome {
    pub output: ExperimentOutput,
    pub cluster_tables: Vec<QTable>,
    pub global_table: QTable,
}

fn members_seed(seed: u64, ids: &[&str]) -> u64 {
    ids.iter().fold(seed, |acc, id| derive_seed(acc, hash_str(id)))
}

/// Trains one table per cluster and one over the whole fleet, each on the
/// interleaved first-week days of its members, then runs both greedily over
/// every day of each base trace. A base uses the cluster whose centroid is
/// closest to its own first-week mean.
pub fn run_shared_policy(
    fleet: &Fleet,
    assignment: &ClusterAssignment,
    setup: &LearningSetup,
    calendar: Calendar,
    seed: u64,
) -> Result<SharedPolicyOutcome, ExperimentError> {
    setup.validate()?;
    if assignment.assignment.len() != fleet.len()
        || assignment.node_ids.iter().zip(&fleet.members).any(|(a, m)| *a != m.node_id)
        || assignment.assignment.iter().any(|&c| c >= assignment.cluster_count)
        || assignment.centroids.len() != assignment.cluster_count
    {
        return Err(ExperimentError::Assignment(
            "assignment does not cover the fleet in order".into(),
        ));
    }
    let hw = &setup.hardware;
    let hp = &setup.hyperparameters;

    let first_weeks: Vec<SlotSeries> = (0..fleet.len())
        .into_par_iter()
        .map(|i| {
            let week = fleet.trace(i).sub_days(0, FIRST_WEEK_DAYS)?;
            Ok(SlotSeries::from_trace(&week, crate::envsim::SLOT_SECONDS, calendar)?)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let train = |members: &[usize]| -> Result<(QTable, usize), ExperimentError> {
        let refs: Vec<&SlotSeries> = members.iter().map(|&i| &first_weeks[i]).collect();
        let ids: Vec<&str> = members.iter().map(|&i| fleet.members[i].node_id.as_str()).collect();
        let episodes = interleave_day_episodes(&refs, 0..FIRST_WEEK_DAYS);
        let out = train_on_episodes(
            QTable::new(),
            &episodes,
            hw,
            hp,
            &setup.convergence,
            members_seed(seed, &ids),
        )?;
        Ok((out.table, out.episodes_run))
    };

    let mut groups: Vec<Vec<usize>> = (0..assignment.cluster_count).map(|c| assignment.members(c)).collect();
    groups.push((0..fleet.len()).collect());
    if groups.iter().any(Vec::is_empty) {
        return Err(ExperimentError::Assignment("empty cluster".into()));
    }
    let mut trained: Vec<(QTable, usize)> = groups.par_iter().map(|g| train(g)).collect::<Result<_, _>>()?;
    let (global_table, global_episodes) = trained.pop().expect("global group is present");

    let base_series: Vec<SlotSeries> = fleet
        .bases
        .iter()
        .map(|b| SlotSeries::from_trace(b, crate::envsim::SLOT_SECONDS, calendar))
        .collect::<Result<_, _>>()?;

    let mut report = ExperimentReport::new("shared", seed);
    for (c, (_, episodes)) in trained.iter().enumerate() {
        report.clusters.push(ClusterSummary {
            cluster: c,
            members: groups[c].len(),
            centroid_lux: assignment.centroids[c],
            training_episodes: *episodes,
        });
    }

    let evaluated: Vec<(Vec<DayRecord>, Vec<DayRecord>, usize)> = base_series
        .par_iter()
        .map(|s| {
            let cluster = assignment.nearest(s.mean_lux(0..FIRST_WEEK_DAYS * s.slots_per_day()));
            let eval_seed = derive_seed(derive_seed(seed, EVAL_TAG), hash_str(s.node_id()));
            let cluster_days = greedy_days(&trained[cluster].0, s, setup, eval_seed, Arm::Cluster)?;
            let global_days = greedy_days(&global_table, s, setup, eval_seed, Arm::Global)?;
            Ok((cluster_days, global_days, cluster))
        })
        .collect::<Result<_, ExperimentError>>()?;

    for (cluster_days, global_days, cluster) in evaluated {
        for (days, arm) in [(cluster_days, Arm::Cluster), (global_days, Arm::Global)] {
            let mut summary = summarize(&days, arm);
            if arm == Arm::Cluster {
                summary.cluster = Some(cluster);
            }
            report.nodes.push(summary);
            report.per_day.extend(days);
        }
    }

    let mut tables: Vec<NamedTable> = trained
        .iter()
        .enumerate()
        .map(|(c, (t, episodes))| NamedTable {
            name: format!("cluster-{c}"),
            file: t.to_file(QTableMetadata {
                hyperparameters: *hp,
                training_episodes: *episodes as u64,
                source_traces: groups[c].iter().map(|&i| fleet.members[i].node_id.clone()).collect(),
            }),
        })
        .collect();
    tables.push(NamedTable {
        name: "global".into(),
        file: global_table.to_file(QTableMetadata {
            hyperparameters: *hp,
            training_episodes: global_episodes as u64,
            source_traces: vec![format!("{} fleet members", fleet.len())],
        }),
    });

    Ok(SharedPolicyOutcome {
        output: ExperimentOutput { report, tables },
        cluster_tables: trained.into_iter().map(|(t, _)| t).collect(),
        global_table,
    })
}

/// Greedy execution over every day of `series` with one tie-break stream.
pub(super) fn greedy_days(
    table: &QTable,
    series: &SlotSeries,
    setup: &LearningSetup,
    seed: u64,
    arm: Arm,
) -> Result<Vec<DayRecord>, ExperimentError> {
    let hw = &setup.hardware;
    let mut policy = GreedyPolicy::new(table, seed);
    let mut node = NodeEnergyState::initial(hw);
    let mut days = Vec::with_capacity(series.days());
    for day in 0..series.days() {
        let out = run_day(node, &mut policy, series, day, hw)?;
        node = out.node;
        days.push(DayRecord {
            day,
            node_id: series.node_id().to_string(),
            arm,
            reward: out.reward,
            depleted: out.depletions > 0,
            samples_sent: out.samples_sent,
        });
    }
    Ok(days)
}

fn summarize(days: &[DayRecord], arm: Arm) -> NodeSummary {
    NodeSummary {
        node_id: days.first().map(|d| d.node_id.clone()).unwrap_or_default(),
        arm,
        days: days.len(),
        trainings_performed: 0,
        negative_reward_days: days.iter().filter(|d| d.reward < 0.0).count(),
        depletion_days: days.iter().filter(|d| d.depleted).count(),
        total_reward: days.iter().map(|d| d.reward).sum(),
        samples_sent: days.iter().map(|d| d.samples_sent).sum(),
        cluster: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlearn::{evaluate_policy, ConvergenceCriterion};
    use crate::traces::DEFAULT_START;

    fn items(means: &[f64]) -> Vec<(String, f64)> {
        means.iter().enumerate().map(|(i, &m)| (format!("n{i:02}"), m)).collect()
    }

    #[test]
    fn equal_quantile_groups() {
        let means: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let a = cluster_by_means(&items(&means), 5).unwrap();
        for c in 0..5 {
            assert_eq!(a.members(c).len(), 200);
        }
        assert!(a.centroids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn remainder_goes_to_lowest_clusters() {
        let a = cluster_by_means(&items(&[5.0, 1.0, 3.0, 2.0, 4.0, 6.0, 7.0]), 3).unwrap();
        let sizes: Vec<usize> = (0..3).map(|c| a.members(c).len()).collect();
        assert_eq!(sizes, [3, 2, 2]);
        assert_eq!(a.assignment, [1, 0, 0, 0, 1, 2, 2]);
    }

    #[test]
    fn single_cluster_and_ties() {
        let a = cluster_by_means(&items(&[3.0, 1.0]), 1).unwrap();
        assert_eq!(a.assignment, [0, 0]);
        let tied = vec![("b".to_string(), 1.0), ("a".to_string(), 1.0)];
        let a = cluster_by_means(&tied, 2).unwrap();
        assert_eq!(a.by_node()["a"], 0);
        assert_eq!(a.by_node()["b"], 1);
        assert!(cluster_by_means(&[], 1).is_err());
        assert!(cluster_by_means(&items(&[1.0]), 2).is_err());
    }

    #[test]
    fn identity_fleet_copies_bases() {
        let base = LightTrace::constant("b", DEFAULT_START, 7, 250.0);
        let fleet = Fleet {
            bases: vec![base.clone()],
            members: vec![FleetMember {
                node_id: "b".into(),
                base: 0,
                params: AugmentParams::IDENTITY,
            }],
        };
        assert_eq!(fleet.trace(0), base);
        assert_eq!(fleet.first_week_mean(0), 250.0);
    }

    #[test]
    fn fleet_size_and_lengths() {
        let bases: Vec<LightTrace> = (0..5)
            .map(|i| LightTrace::constant(format!("b{i}"), DEFAULT_START, 8, 100.0 * i as f64))
            .collect();
        let fleet = build_fleet(&bases, 200, 4).unwrap();
        assert_eq!(fleet.len(), 1000);
        assert!(fleet.traces().iter().all(|t| t.len() == bases[0].len()));
        assert_eq!(build_fleet(&bases, 200, 4).unwrap(), fleet);
    }

    #[test]
    fn one_cluster_equals_global() {
        let bases: Vec<LightTrace> = [150.0, 600.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| LightTrace::constant(format!("b{i}"), DEFAULT_START, 8, l))
            .collect();
        let fleet = build_fleet(&bases, 3, 2).unwrap();
        let assignment = cluster_fleet(&fleet, 1).unwrap();
        let setup = LearningSetup {
            convergence: ConvergenceCriterion {
                episode_cap: 300,
                ..ConvergenceCriterion::default()
            },
            ..LearningSetup::default()
        };
        let out = run_shared_policy(&fleet, &assignment, &setup, Calendar::default(), 8).unwrap();
        assert_eq!(out.cluster_tables[0], out.global_table);
        let r = &out.output.report;
        for b in &bases {
            let c = r.node(b.node_id(), Arm::Cluster).unwrap();
            let g = r.node(b.node_id(), Arm::Global).unwrap();
            assert_eq!(c.total_reward, g.total_reward);
        }
    }

    #[test]
    fn per_day_totals_match_evaluate_policy() {
        let t = LightTrace::constant("n", DEFAULT_START, 3, 350.0);
        let s = SlotSeries::from_trace(&t, 900, Calendar::default()).unwrap();
        let mut table = QTable::new();
        for st in crate::envsim::ObservedState::all() {
            table.set(&st, crate::envsim::Action::ALL[2], 1.0);
        }
        let setup = LearningSetup::default();
        let days = greedy_days(&table, &s, &setup, 4, Arm::Global).unwrap();
        let eval = evaluate_policy(&table, &s, 0..3, &setup.hardware, 4).unwrap();
        assert_eq!(days.iter().map(|d| d.reward).sum::<f64>(), eval.total_reward);
    }
}
