//! Tabular Q-learning: ε-greedy selection, the temporal-difference update,
//! trace-replay training to convergence and greedy evaluation.

use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{HardwareConfig, NodeEnergyState};
use crate::envsim::{
    env_step, observe_slot, penalty_once, run_slots, Action, ObservedState, Policy, SimError,
    ACTION_COUNT, SLOTS_PER_DAY,
};
use crate::rng::seeded_rng;
use crate::traces::SlotSeries;

pub mod oracle;
mod table;

pub use oracle::{
    q_learn_toy, sup_norm_distance, toy_harvest, value_iteration_oracle, FiniteMdp, OracleError,
    Outcome, ToyHarvest,
};
pub use table::{entry_key, parse_entry_key, QTable, QTableFile, QTableMetadata};

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("training window must cover at least one whole day ({0} slots given)")]
    TraceTooShort(usize),
    #[error("no training episodes")]
    NoEpisodes,
    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),
    #[error("invalid convergence criterion: {0}")]
    Convergence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Discount factor γ.
    pub gamma: f64,
    pub epsilon_max: f64,
    pub epsilon_min: f64,
    /// Subtracted from ε after every decision.
    pub epsilon_decrement: f64,
    /// Learning rate α.
    pub alpha: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon_max: 1.0,
            epsilon_min: 0.1,
            epsilon_decrement: 0.0004,
            alpha: 0.1,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Hyperparameters(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0 <= self.epsilon_min && self.epsilon_min <= self.epsilon_max && self.epsilon_max <= 1.0) {
            return bad("require 0 <= epsilon_min <= epsilon_max <= 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.epsilon_decrement > 0.0 && self.epsilon_decrement.is_finite()) {
            return bad("epsilon_decrement must be positive");
        }
        Ok(())
    }
}

/// Training stops once the mean Q-value has varied by at most `tolerance`
/// (relative) across the last `window` episodes, or after `episode_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceCriterion {
    pub window: usize,
    pub tolerance: f64,
    pub episode_cap: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self {
            window: 50,
            tolerance: 1e-3,
            episode_cap: 20_000,
        }
    }
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.window < 2 {
            return Err(LearnError::Convergence("window must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(LearnError::Convergence("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn holds(&self, means: &VecDeque<f64>) -> bool {
        if means.len() < self.window {
            return false;
        }
        let (lo, hi) = means
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        let last = *means.back().expect("window is non-empty");
        hi - lo <= self.tolerance * last.abs()
    }
}

pub fn q_lookup(table: &QTable, s: &ObservedState, a: Action) -> f64 {
    table.get(s, a)
}

/// Highest-valued action; ties are broken uniformly with `rng`.
pub fn greedy_action(table: &QTable, s: &ObservedState, rng: &mut impl Rng) -> Action {
    let row = table.row(s);
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ties = [0usize; ACTION_COUNT];
    let mut n = 0;
    for (i, &v) in row.iter().enumerate() {
        if v == best {
            ties[n] = i;
            n += 1;
        }
    }
    let pick = if n == 1 { ties[0] } else { ties[rng.random_range(0..n)] };
    Action::ALL[pick]
}

/// ε-greedy: greedy with probability `1 - epsilon`, uniform otherwise.
pub fn select_action(table: &QTable, s: &ObservedState, epsilon: f64, rng: &mut impl Rng) -> Action {
    if rng.random::<f64>() >= epsilon {
        greedy_action(table, s, rng)
    } else {
        Action::ALL[rng.random_range(0..ACTION_COUNT)]
    }
}

/// One temporal-difference step towards `r + γ max_a' Q(s', a')`.
#[inline]
pub fn q_update(
    table: &mut QTable,
    s: &ObservedState,
    a: Action,
    r: f64,
    s_next: &ObservedState,
    hp: &Hyperparameters,
) {
    let q_predict = table.get(s, a);
    let q_target = r + hp.gamma * table.row(s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    table.set(s, a, q_predict + hp.alpha * (q_target - q_predict));
}

/// `max(epsilon - decrement, epsilon_min)`. Results within rounding of the
/// floor snap onto it, so the floor is reached after exactly
/// `(epsilon_max - epsilon_min) / decrement` steps.
pub fn decay_epsilon(epsilon: f64, hp: &Hyperparameters) -> f64 {
    let next = epsilon - hp.epsilon_decrement;
    if next - hp.epsilon_min <= hp.epsilon_decrement * 1e-6 {
        hp.epsilon_min
    } else {
        next
    }
}

/// A contiguous run of slots replayed as one training episode.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    pub series: &'a SlotSeries,
    pub slots: Range<usize>,
}

/// One episode per whole day in `days`.
pub fn day_episodes(series: &SlotSeries, days: Range<usize>) -> Vec<Episode<'_>> {
    days.map(|d| Episode {
        series,
        slots: d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY,
    })
    .collect()
}

/// Round-robin interleaving: day 0 of every member, then day 1, and so on.
pub fn interleave_day_episodes<'a>(members: &[&'a SlotSeries], days: Range<usize>) -> Vec<Episode<'a>> {
    days.flat_map(|d| {
        members.iter().map(move |&series| Episode {
            series,
            slots: d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY,
        })
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub table: QTable,
    pub episodes_run: usize,
    pub converged: bool,
}

/// Replays `episodes` cyclically with ε-greedy exploration, updating after
/// every decision. Each episode starts from a fresh node at `v_initial`; ε
/// starts at `epsilon_max` and decays across the whole session.
pub fn train_on_episodes(
    table: QTable,
    episodes: &[Episode<'_>],
    hw: &HardwareConfig,
    hp: &Hyperparameters,
    crit: &ConvergenceCriterion,
    seed: u64,
) -> Result<TrainingOutcome, LearnError> {
    hp.validate()?;
    crit.validate()?;
    if episodes.is_empty() || episodes.iter().all(|e| e.slots.is_empty()) {
        return Err(LearnError::NoEpisodes);
    }
    let mut table = table;
    let mut rng = seeded_rng(seed);
    let mut epsilon = hp.epsilon_max;
    let mut means = VecDeque::with_capacity(crit.window + 1);

    for run in 0..crit.episode_cap {
        let episode = &episodes[run % episodes.len()];
        epsilon = run_training_episode(&mut table, episode, epsilon, &mut rng, hw, hp)?;
        if means.len() == crit.window {
            means.pop_front();
        }
        means.push_back(table.mean());
        if crit.holds(&means) {
            return Ok(TrainingOutcome {
                table,
                episodes_run: run + 1,
                converged: true,
            });
        }
    }
    Ok(TrainingOutcome {
        table,
        episodes_run: crit.episode_cap,
        converged: false,
    })
}

fn run_training_episode(
    table: &mut QTable,
    episode: &Episode<'_>,
    mut epsilon: f64,
    rng: &mut ChaCha8Rng,
    hw: &HardwareConfig,
    hp: &Hyperparameters,
) -> Result<f64, LearnError> {
    let series = episode.series;
    let mut node = NodeEnergyState::initial(hw);
    let mut state = observe_slot(&node, series, episode.slots.start, hw)?;
    let mut penalized_day = None;
    for slot in episode.slots.clone() {
        if !node.alive {
            // A dead node cannot report; nothing to learn until it restarts.
            let idle = Action::ALL[node.performance_state as usize];
            let (next, outcome) = env_step(&node, idle, series, slot, hw)?;
            node = next;
            state = outcome.next_state;
            continue;
        }
        let action = select_action(table, &state, epsilon, rng);
        let (next, outcome) = env_step(&node, action, series, slot, hw)?;
        let reward = if outcome.depleted {
            penalty_once(&mut penalized_day, slot / SLOTS_PER_DAY)
        } else {
            outcome.reward
        };
        q_update(table, &state, action, reward, &outcome.next_state, hp);
        epsilon = decay_epsilon(epsilon, hp);
        node = next;
        state = outcome.next_state;
    }
    Ok(epsilon)
}

/// Trains on every whole day of `days`, replayed in order.
pub fn train_on_trace(
    table: QTable,
    series: &SlotSeries,
    days: Range<usize>,
    hw: &HardwareConfig,
    hp: &Hyperparameters,
    crit: &ConvergenceCriterion,
    seed: u64,
) -> Result<TrainingOutcome, LearnError> {
    if days.is_empty() || days.end > series.days() {
        return Err(LearnError::TraceTooShort(days.len() * SLOTS_PER_DAY));
    }
    train_on_episodes(table, &day_episodes(series, days), hw, hp, crit, seed)
}

/// Greedy execution of a frozen table with seeded tie-breaking.
pub struct GreedyPolicy<'a> {
    table: &'a QTable,
    rng: ChaCha8Rng,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(table: &'a QTable, seed: u64) -> Self {
        Self {
            table,
            rng: seeded_rng(seed),
        }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, state: &ObservedState) -> Action {
        greedy_action(self.table, state, &mut self.rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub total_reward: f64,
    pub depletion_days: u32,
    pub samples_sent: u64,
}

/// Greedy run over `slots` from a fresh node, carrying state across days.
pub fn evaluate_slots(
    table: &QTable,
    series: &SlotSeries,
    slots: Range<usize>,
    hw: &HardwareConfig,
    seed: u64,
) -> Result<Evaluation, LearnError> {
    let mut policy = GreedyPolicy::new(table, seed);
    let mut node = NodeEnergyState::initial(hw);
    let mut eval = Evaluation {
        total_reward: 0.0,
        depletion_days: 0,
        samples_sent: 0,
    };
    let mut start = slots.start;
    while start < slots.end {
        let day_end = ((start / SLOTS_PER_DAY + 1) * SLOTS_PER_DAY).min(slots.end);
        let out = run_slots(node, &mut policy, series, start..day_end, hw)?;
        node = out.node;
        eval.total_reward += out.reward;
        eval.samples_sent += out.samples_sent;
        eval.depletion_days += u32::from(out.depletions > 0);
        start = day_end;
    }
    Ok(eval)
}

/// Greedy run over every whole day in `days`.
pub fn evaluate_policy(
    table: &QTable,
    series: &SlotSeries,
    days: Range<usize>,
    hw: &HardwareConfig,
    seed: u64,
) -> Result<Evaluation, LearnError> {
    if days.is_empty() || days.end > series.days() {
        return Err(LearnError::TraceTooShort(days.len() * SLOTS_PER_DAY));
    }
    evaluate_slots(
        table,
        series,
        days.start * SLOTS_PER_DAY..days.end * SLOTS_PER_DAY,
        hw,
        seed,
    )
}
