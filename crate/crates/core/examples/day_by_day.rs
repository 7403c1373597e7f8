//! Nightly retraining on the synthetic suite.
//!
//! cargo run --release --example day_by_day [seed] [days]

use harvest_rl::experiments::{day_by_day_report, LearningSetup};
use harvest_rl::traces::{default_archetypes, generate_suite, Calendar, SlotSeries, DEFAULT_START};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let days: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let cal = Calendar::default();
    let series = generate_suite(&default_archetypes(), days, seed, DEFAULT_START, &cal)?
        .iter()
        .map(|t| SlotSeries::from_trace(t, 900, cal))
        .collect::<Result<Vec<_>, _>>()?;
    let out = day_by_day_report(&series, &LearningSetup::default(), seed)?;
    for n in &out.report.nodes {
        let first_death = out
            .report
            .per_day
            .iter()
            .find(|d| d.node_id == n.node_id && d.depleted)
            .map(|d| d.day.to_string())
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<16} trainings {:>3}  negative days {:>3}  first death {:>3}  reward {:>8.0}",
            n.node_id, n.trainings_performed, n.negative_reward_days, first_death, n.total_reward
        );
    }
    Ok(())
}
