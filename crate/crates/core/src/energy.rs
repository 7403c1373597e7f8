//! Supercapacitor storage, linear solar harvesting and load consumption.
//!
//! Energy in the store is `E = C V² / 2`. Per slot the node gains
//! `harvest_efficiency * lux * t` and pays for its sense-and-transmit events,
//! the sleep floor and the leakage through the voltage divider used to
//! read the capacitor voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling period in seconds for each performance state (index = state).
pub const SENSING_PERIOD_SECONDS: [u32; 4] = [900, 300, 60, 15];
pub const PERFORMANCE_STATES: u8 = 4;
/// Number of discrete light/storage levels (0 through 10 inclusive).
pub const LEVELS: u8 = 11;
/// Illuminance that maps to the top light level.
pub const FULL_SCALE_LUX: f64 = 2000.0;

// Keeps exact grid points (e.g. 3.8 V → level 5) from flooring one level low.
const LEVEL_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("negative voltage {0} V")]
    NegativeVoltage(f64),
    #[error("negative energy {0} J")]
    NegativeEnergy(f64),
    #[error("negative illuminance {0} lux")]
    NegativeLux(f64),
    #[error("invalid performance state {0} (expected 0-3)")]
    InvalidPerformanceState(u8),
    #[error("voltage {0} V outside the [{1}, {2}] V operating range")]
    VoltageOutOfRange(f64, f64, f64),
    #[error("invalid hardware config: {0}")]
    InvalidConfig(String),
}

/// Electrical parameters of a node.
///
/// `sleep_power`, `event_energy` and `harvest_efficiency` default to values
/// calibrated so that a full store lasts about a week in the dark when sensing
/// every ten minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    /// Farads.
    pub capacitance: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// A depleted node powers up again once the store reaches this voltage.
    pub v_restart: f64,
    /// Total divider resistance in ohms (two 10 MΩ resistors in series).
    pub divider_resistance: f64,
    /// Watts.
    pub sleep_power: f64,
    /// Joules per sense-and-transmit event.
    pub event_energy: f64,
    /// Watts of charging power per lux.
    pub harvest_efficiency: f64,
    pub v_initial: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            capacitance: 1.0,
            v_max: 5.5,
            v_min: 2.1,
            v_restart: 3.0,
            divider_resistance: 2.0e7,
            sleep_power: 5.0e-6,
            event_energy: 1.0e-2,
            harvest_efficiency: 1.0e-6,
            v_initial: 5.5,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: &str| Err(EnergyError::InvalidConfig(m.to_string()));
        let all_finite = [
            self.capacitance,
            self.v_max,
            self.v_min,
            self.v_restart,
            self.divider_resistance,
            self.sleep_power,
            self.event_energy,
            self.harvest_efficiency,
            self.v_initial,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("all fields must be finite");
        }
        if !(0.0 < self.v_min && self.v_min < self.v_restart && self.v_restart <= self.v_max) {
            return bad("require 0 < v_min < v_restart <= v_max");
        }
        if self.capacitance <= 0.0
            || self.sleep_power <= 0.0
            || self.event_energy <= 0.0
            || self.harvest_efficiency <= 0.0
            || self.divider_resistance <= 0.0
        {
            return bad("capacitance, powers, event energy, efficiency and resistance must be positive");
        }
        if !(self.v_min..=self.v_max).contains(&self.v_initial) {
            return bad("v_initial must lie in [v_min, v_max]");
        }
        Ok(())
    }

    /// Energy between empty-for-the-MCU and full.
    pub fn usable_energy(&self) -> f64 {
        0.5 * self.capacitance * (self.v_max * self.v_max - self.v_min * self.v_min)
    }

    fn energy(&self, v: f64) -> f64 {
        0.5 * self.capacitance * v * v
    }

    fn voltage(&self, e: f64) -> f64 {
        (2.0 * e.max(0.0) / self.capacitance).sqrt()
    }
}

/// Node-side energy state carried between slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeEnergyState {
    pub voltage: f64,
    pub alive: bool,
    pub performance_state: u8,
}

impl NodeEnergyState {
    /// Fully charged (per `v_initial`) and running.
    pub fn initial(hw: &HardwareConfig) -> Self {
        Self {
            voltage: hw.v_initial,
            alive: hw.v_initial > hw.v_min,
            performance_state: 0,
        }
    }
}

pub fn energy_of_voltage(v: f64, hw: &HardwareConfig) -> Result<f64, EnergyError> {
    if v < 0.0 {
        return Err(EnergyError::NegativeVoltage(v));
    }
    Ok(hw.energy(v))
}

pub fn voltage_of_energy(e: f64, hw: &HardwareConfig) -> Result<f64, EnergyError> {
    if e < 0.0 {
        return Err(EnergyError::NegativeEnergy(e));
    }
    Ok(hw.voltage(e))
}

pub fn harvest_power(lux: f64, hw: &HardwareConfig) -> Result<f64, EnergyError> {
    if lux < 0.0 {
        return Err(EnergyError::NegativeLux(lux));
    }
    Ok(hw.harvest_efficiency * lux)
}

pub fn sensing_period(performance_state: u8) -> Result<u32, EnergyError> {
    SENSING_PERIOD_SECONDS
        .get(performance_state as usize)
        .copied()
        .ok_or(EnergyError::InvalidPerformanceState(performance_state))
}

/// Divider leakage at `voltage` over `seconds`.
pub fn divider_energy(voltage: f64, seconds: f64, hw: &HardwareConfig) -> f64 {
    voltage * voltage / hw.divider_resistance * seconds
}

/// Energy drawn over `seconds` when sensing every `period` seconds.
///
/// Event cost is spread evenly over the interval; a dead node only leaks
/// through the divider.
pub fn load_energy(period: f64, seconds: f64, voltage: f64, alive: bool, hw: &HardwareConfig) -> f64 {
    let divider = divider_energy(voltage, seconds, hw);
    if !alive {
        return divider;
    }
    seconds / period * hw.event_energy + hw.sleep_power * seconds + divider
}

pub fn slot_load_energy(
    performance_state: u8,
    slot_seconds: f64,
    voltage: f64,
    alive: bool,
    hw: &HardwareConfig,
) -> Result<f64, EnergyError> {
    let period = sensing_period(performance_state)?;
    Ok(load_energy(f64::from(period), slot_seconds, voltage, alive, hw))
}

/// Result of advancing one node through one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub state: NodeEnergyState,
    /// The node was running at slot start and its store hit `v_min` in the slot.
    pub depleted: bool,
    /// Fraction of the slot during which the node was powered.
    pub powered_fraction: f64,
}

/// Advances the store by one slot under constant harvest and load.
///
/// With net power constant inside the slot, stored energy moves linearly, so a
/// running node depletes iff the end-of-slot energy is at or below
/// `E(v_min)`; the crossing time gives `powered_fraction`. A depleted node
/// stays off until harvesting lifts the store back to `v_restart`.
pub fn step_energy(
    state: &NodeEnergyState,
    lux: f64,
    performance_state: u8,
    slot_seconds: f64,
    hw: &HardwareConfig,
) -> Result<EnergyStep, EnergyError> {
    let e0 = energy_of_voltage(state.voltage, hw)?;
    let harvest = harvest_power(lux, hw)? * slot_seconds;
    let load = slot_load_energy(performance_state, slot_seconds, state.voltage, state.alive, hw)?;
    let e_min = hw.energy(hw.v_min);
    let e1 = e0 + harvest - load;
    let clamp = |e: f64| hw.voltage(e).clamp(hw.v_min, hw.v_max);

    if state.alive {
        if e1 <= e_min {
            let drain = load - harvest;
            let fraction = if drain > 0.0 {
                ((e0 - e_min) / drain).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return Ok(EnergyStep {
                state: NodeEnergyState {
                    voltage: hw.v_min,
                    alive: false,
                    performance_state,
                },
                depleted: true,
                powered_fraction: fraction,
            });
        }
        Ok(EnergyStep {
            state: NodeEnergyState {
                voltage: clamp(e1),
                alive: true,
                performance_state,
            },
            depleted: false,
            powered_fraction: 1.0,
        })
    } else {
        let voltage = clamp(e1);
        Ok(EnergyStep {
            state: NodeEnergyState {
                voltage,
                alive: voltage >= hw.v_restart,
                performance_state: state.performance_state,
            },
            depleted: false,
            powered_fraction: 0.0,
        })
    }
}

/// Storage level 0-10 on a linear scale from `v_min` to `v_max`.
pub fn discretize_voltage(v: f64, hw: &HardwareConfig) -> Result<u8, EnergyError> {
    if !(hw.v_min..=hw.v_max).contains(&v) {
        return Err(EnergyError::VoltageOutOfRange(v, hw.v_min, hw.v_max));
    }
    let x = (v - hw.v_min) / (hw.v_max - hw.v_min) * 10.0;
    Ok((x + LEVEL_EPSILON).floor().clamp(0.0, 10.0) as u8)
}

/// Light level 0-10 in 200 lux steps, saturating at 2000 lux.
pub fn discretize_light(lux: f64) -> Result<u8, EnergyError> {
    if lux < 0.0 || lux.is_nan() {
        return Err(EnergyError::NegativeLux(lux));
    }
    let x = lux / (FULL_SCALE_LUX / 10.0);
    Ok((x + LEVEL_EPSILON).floor().clamp(0.0, 10.0) as u8)
}

/// Seconds a node starting at `v_initial` survives in darkness while sensing
/// every `period` seconds, integrated in `step` second increments.
pub fn dark_lifetime(period: f64, step: f64, hw: &HardwareConfig) -> f64 {
    let e_min = hw.energy(hw.v_min);
    let mut e = hw.energy(hw.v_initial);
    let mut t = 0.0;
    loop {
        let v = hw.voltage(e);
        let load = load_energy(period, step, v, true, hw);
        if e - load <= e_min {
            return t + step * (e - e_min) / load;
        }
        e -= load;
        t += step;
    }
}
