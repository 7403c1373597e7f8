//! Pre-trains a general table on the pooled first week, then compares warm-
//! and cold-started day-by-day learning over the following weeks.
//!
//! cargo run --release --example transfer [seed]

use harvest_rl::experiments::{run_transfer, Arm, LearningSetup};
use harvest_rl::traces::{default_archetypes, generate_suite, Calendar, SlotSeries, DEFAULT_START};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cal = Calendar::default();
    let bases = generate_suite(&default_archetypes(), 28, seed, DEFAULT_START, &cal)?
        .iter()
        .map(|t| SlotSeries::from_trace(t, 900, cal))
        .collect::<Result<Vec<_>, _>>()?;
    let out = run_transfer(&bases, &LearningSetup::default(), seed, None)?;
    println!("pre-trained table holds {} entries", out.pretrained.len());
    let r = &out.output.report;
    for b in &bases {
        let warm = r.node(b.node_id(), Arm::TransferWarm).expect("warm arm");
        let cold = r.node(b.node_id(), Arm::TransferCold).expect("cold arm");
        println!(
            "{:<16} warm: {:>2} negative days, {:>7.0} reward   cold: {:>2} negative days, {:>7.0} reward",
            b.node_id(),
            warm.negative_reward_days,
            warm.total_reward,
            cold.negative_reward_days,
            cold.total_reward
        );
    }
    Ok(())
}
