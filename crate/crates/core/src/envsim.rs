//! The node environment: 15-minute decision slots over a light trace.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    discretize_light, discretize_voltage, sensing_period, step_energy, EnergyError, HardwareConfig,
    NodeEnergyState, LEVELS, PERFORMANCE_STATES,
};
use crate::traces::{is_weekend, Calendar, SlotSeries};

pub const SLOT_SECONDS: u32 = 900;
pub const SLOTS_PER_DAY: usize = 96;
/// Replaces the slot reward when the store runs dry. Larger in magnitude than
/// a full day of top-rate rewards (96 * 3 = 288).
pub const DEPLETION_PENALTY: f64 = -300.0;
pub const STATE_COUNT: usize = LEVELS as usize * LEVELS as usize * 2;
pub const ACTION_COUNT: usize = PERFORMANCE_STATES as usize;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("slot {slot} outside trace of {slots} slots")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("day {day} outside trace of {days} days")]
    DayOutOfRange { day: usize, days: usize },
    #[error("invalid action {0}")]
    InvalidAction(u8),
    #[error("trace slots are {0} s, expected {SLOT_SECONDS} s")]
    SlotLength(u32),
}

/// What the agent sees: light level, storage level, weekend flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservedState {
    light_level: u8,
    storage_level: u8,
    weekend: bool,
}

impl ObservedState {
    pub fn new(light_level: u8, storage_level: u8, weekend: bool) -> Option<Self> {
        (light_level < LEVELS && storage_level < LEVELS).then_some(Self {
            light_level,
            storage_level,
            weekend,
        })
    }

    pub fn light_level(&self) -> u8 {
        self.light_level
    }

    pub fn storage_level(&self) -> u8 {
        self.storage_level
    }

    pub fn weekend(&self) -> bool {
        self.weekend
    }

    /// Dense index in `0..STATE_COUNT`.
    pub fn index(&self) -> usize {
        (self.light_level as usize * LEVELS as usize + self.storage_level as usize) * 2
            + self.weekend as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= STATE_COUNT {
            return None;
        }
        let weekend = index % 2 == 1;
        let rest = index / 2;
        Self::new(
            (rest / LEVELS as usize) as u8,
            (rest % LEVELS as usize) as u8,
            weekend,
        )
    }

    pub fn all() -> impl Iterator<Item = ObservedState> {
        (0..STATE_COUNT).filter_map(Self::from_index)
    }
}

/// Performance state to run for the next slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Action(u8);

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [Action(0), Action(1), Action(2), Action(3)];

    pub fn new(performance_state: u8) -> Result<Self, SimError> {
        if performance_state < PERFORMANCE_STATES {
            Ok(Self(performance_state))
        } else {
            Err(SimError::InvalidAction(performance_state))
        }
    }

    pub fn performance_state(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Sense-and-transmit events in one full slot.
    pub fn events_per_slot(self) -> u32 {
        SLOT_SECONDS / sensing_period(self.0).expect("action holds a valid state")
    }
}

impl TryFrom<u8> for Action {
    type Error = SimError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Action::new(v)
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub reward: f64,
    pub next_state: ObservedState,
    pub depleted: bool,
    pub samples_sent: u32,
}

fn observe_features(
    node: &NodeEnergyState,
    lux: f64,
    weekend: bool,
    hw: &HardwareConfig,
) -> Result<ObservedState, SimError> {
    Ok(ObservedState {
        light_level: discretize_light(lux)?,
        storage_level: discretize_voltage(node.voltage, hw)?,
        weekend,
    })
}

pub fn observe(
    node: &NodeEnergyState,
    lux: f64,
    timestamp: i64,
    calendar: &Calendar,
    hw: &HardwareConfig,
) -> Result<ObservedState, SimError> {
    observe_features(node, lux, is_weekend(timestamp, calendar), hw)
}

/// State observed at the start of `slot`; `slot == len` is allowed and
/// describes the moment after the last slot.
pub fn observe_slot(
    node: &NodeEnergyState,
    series: &SlotSeries,
    slot: usize,
    hw: &HardwareConfig,
) -> Result<ObservedState, SimError> {
    let (lux, weekend) = series.features(slot).ok_or(SimError::SlotOutOfRange {
        slot,
        slots: series.len(),
    })?;
    observe_features(node, lux, weekend, hw)
}

/// Runs one slot. A node that is off at slot start ignores the action,
/// earns nothing and only harvests.
pub fn env_step(
    node: &NodeEnergyState,
    action: Action,
    series: &SlotSeries,
    slot: usize,
    hw: &HardwareConfig,
) -> Result<(NodeEnergyState, SlotOutcome), SimError> {
    if series.slot_seconds() != SLOT_SECONDS {
        return Err(SimError::SlotLength(series.slot_seconds()));
    }
    if slot >= series.len() {
        return Err(SimError::SlotOutOfRange {
            slot,
            slots: series.len(),
        });
    }
    let step = step_energy(
        node,
        series.lux(slot),
        action.performance_state(),
        f64::from(SLOT_SECONDS),
        hw,
    )?;
    let next_state = observe_slot(&step.state, series, slot + 1, hw)?;
    let (reward, samples_sent) = if !node.alive {
        (0.0, 0)
    } else if step.depleted {
        let events = f64::from(action.events_per_slot()) * step.powered_fraction;
        (DEPLETION_PENALTY, events.floor() as u32)
    } else {
        (
            f64::from(action.performance_state()),
            action.events_per_slot(),
        )
    };
    Ok((
        step.state,
        SlotOutcome {
            reward,
            next_state,
            depleted: step.depleted,
            samples_sent,
        },
    ))
}

/// Maps observations to actions.
pub trait Policy {
    fn act(&mut self, state: &ObservedState) -> Action;
}

impl<F: FnMut(&ObservedState) -> Action> Policy for F {
    fn act(&mut self, state: &ObservedState) -> Action {
        self(state)
    }
}

/// Always runs the same performance state.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub Action);

impl Policy for FixedPolicy {
    fn act(&mut self, _: &ObservedState) -> Action {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: ObservedState,
    pub action: Action,
    pub reward: f64,
    pub next_state: ObservedState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayOutcome {
    pub node: NodeEnergyState,
    pub reward: f64,
    /// Decisions taken while the node was running; dead slots are not decisions.
    pub transitions: Vec<Transition>,
    pub depletions: u32,
    pub samples_sent: u64,
}

/// Depletion reward given at most once per day: a node that revives and
/// dies again on the same day earns 0 for the second death.
pub fn penalty_once(penalized_day: &mut Option<usize>, day: usize) -> f64 {
    if *penalized_day == Some(day) {
        0.0
    } else {
        *penalized_day = Some(day);
        DEPLETION_PENALTY
    }
}

/// Runs `policy` over an arbitrary slot range, carrying the node state.
pub fn run_slots(
    node: NodeEnergyState,
    policy: &mut dyn Policy,
    series: &SlotSeries,
    slots: Range<usize>,
    hw: &HardwareConfig,
) -> Result<DayOutcome, SimError> {
    if slots.end > series.len() {
        return Err(SimError::SlotOutOfRange {
            slot: slots.end.saturating_sub(1),
            slots: series.len(),
        });
    }
    let mut out = DayOutcome {
        node,
        reward: 0.0,
        transitions: Vec::with_capacity(slots.len()),
        depletions: 0,
        samples_sent: 0,
    };
    let mut penalized_day = None;
    for slot in slots {
        let alive = out.node.alive;
        let state = observe_slot(&out.node, series, slot, hw)?;
        let action = if alive {
            policy.act(&state)
        } else {
            Action(out.node.performance_state)
        };
        let (node, mut outcome) = env_step(&out.node, action, series, slot, hw)?;
        if outcome.depleted {
            outcome.reward = penalty_once(&mut penalized_day, slot / SLOTS_PER_DAY);
        }
        out.node = node;
        out.reward += outcome.reward;
        out.samples_sent += u64::from(outcome.samples_sent);
        out.depletions += u32::from(outcome.depleted);
        if alive {
            out.transitions.push(Transition {
                state,
                action,
                reward: outcome.reward,
                next_state: outcome.next_state,
            });
        }
    }
    Ok(out)
}

/// Runs the 96 slots of `day_index`.
pub fn run_day(
    node: NodeEnergyState,
    policy: &mut dyn Policy,
    series: &SlotSeries,
    day_index: usize,
    hw: &HardwareConfig,
) -> Result<DayOutcome, SimError> {
    let days = series.len() / SLOTS_PER_DAY;
    if day_index >= days {
        return Err(SimError::DayOutOfRange {
            day: day_index,
            days,
        });
    }
    let start = day_index * SLOTS_PER_DAY;
    run_slots(node, policy, series, start..start + SLOTS_PER_DAY, hw)
}
