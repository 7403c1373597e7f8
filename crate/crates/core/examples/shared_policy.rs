//! Builds an augmented fleet, clusters it by first-week brightness and
//! compares per-cluster tables with one global table on the base traces.
//!
//! cargo run --release --example shared_policy [per_base_count] [clusters]

use harvest_rl::experiments::{build_fleet, cluster_fleet, run_shared_policy, Arm, LearningSetup};
use harvest_rl::traces::{default_archetypes, generate_suite, Calendar, DEFAULT_START};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let per_base: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(40);
    let k: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let cal = Calendar::default();
    let seed = 1;
    let bases = generate_suite(&default_archetypes(), 30, seed, DEFAULT_START, &cal)?;
    let fleet = build_fleet(&bases, per_base, seed)?;
    let assignment = cluster_fleet(&fleet, k)?;
    for c in 0..k {
        println!("cluster {c}: {} nodes, centroid {:.1} lux", assignment.members(c).len(), assignment.centroids[c]);
    }
    let out = run_shared_policy(&fleet, &assignment, &LearningSetup::default(), cal, seed)?;
    let r = &out.output.report;
    for b in &bases {
        let cluster = r.node(b.node_id(), Arm::Cluster).expect("every base is evaluated");
        let global = r.node(b.node_id(), Arm::Global).expect("every base is evaluated");
        println!(
            "{:<16} cluster {:>8.0}  global {:>8.0}",
            b.node_id(),
            cluster.total_reward,
            global.total_reward
        );
    }
    Ok(())
}
