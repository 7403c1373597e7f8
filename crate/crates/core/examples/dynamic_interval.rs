//! Dynamic training interval for one placement, printing every retraining
//! and the interval it chose next.
//!
//! cargo run --release --example dynamic_interval [placement] [seed]

use harvest_rl::experiments::{run_dynamic_interval_with, DynamicOptions, LearningSetup};
use harvest_rl::traces::{generate_synthetic, ArchetypeKind, Calendar, PlacementArchetype, SlotSeries, DEFAULT_START};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: ArchetypeKind = args.next().unwrap_or_else(|| "stair_access".into()).parse()?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cal = Calendar::default();
    let trace = generate_synthetic(&PlacementArchetype::default_for(kind), 21, seed, DEFAULT_START, &cal)?;
    let series = SlotSeries::from_trace(&trace, 900, cal)?;
    let run = run_dynamic_interval_with(&series, &LearningSetup::default(), &DynamicOptions::default(), seed)?;
    for t in &run.trainings {
        println!(
            "day {:>2} {:>5.2} h  episodes {:>5}  {}  next in {:>3} h",
            t.day,
            (t.slot % 96) as f64 / 4.0,
            t.episodes,
            if t.deployed { "deployed" } else { "kept old" },
            t.next_interval_hours.unwrap_or_default()
        );
    }
    let s = run.summary();
    println!("{} trainings, {} negative days, reward {:.0}", s.trainings_performed, s.negative_reward_days, s.total_reward);
    Ok(())
}
