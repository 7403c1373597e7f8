//! Runs one node through a dark-then-bright day under each fixed sensing
//! rate and shows the resulting rewards and depletions.
//!
//! cargo run --release --example env_step

use harvest_rl::energy::{HardwareConfig, NodeEnergyState};
use harvest_rl::envsim::{env_step, observe_slot, run_day, Action, FixedPolicy};
use harvest_rl::traces::{Calendar, LightTrace, SlotSeries, DEFAULT_START};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hw = HardwareConfig::default();
    // Night until 08:00, an office day at 600 lux, dark again from 18:00.
    let lux: Vec<f64> = (0..96).map(|s| if (32..72).contains(&s) { 600.0 } else { 0.0 }).collect();
    let trace = LightTrace::new("desk", DEFAULT_START, 900, lux)?;
    let series = SlotSeries::from_trace(&trace, 900, Calendar::default())?;

    let start = NodeEnergyState { voltage: 3.2, ..NodeEnergyState::initial(&hw) };
    println!("start at {:.2} V, state {:?}", start.voltage, observe_slot(&start, &series, 0, &hw)?);
    for action in Action::ALL {
        let day = run_day(start, &mut FixedPolicy(action), &series, 0, &hw)?;
        println!(
            "state {}: reward {:>6.0}, depletions {}, samples {:>5}, end {:.2} V",
            action.performance_state(),
            day.reward,
            day.depletions,
            day.samples_sent,
            day.node.voltage
        );
    }

    let (next, outcome) = env_step(&start, Action::ALL[3], &series, 0, &hw)?;
    println!("one slot at full rate: {:.4} V -> {:.4} V, reward {}", start.voltage, next.voltage, outcome.reward);
    Ok(())
}
