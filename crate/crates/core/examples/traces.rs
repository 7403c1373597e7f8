//! Generates the synthetic placement suite, prints daily statistics and
//! derives augmented fleet members from one base trace.
//!
//! cargo run --release --example traces

use harvest_rl::traces::{
    augment_trace, default_archetypes, generate_suite, weekly_mean_lux, write_trace_csv, Calendar,
    SlotSeries, DEFAULT_START,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cal = Calendar::default();
    let suite = generate_suite(&default_archetypes(), 14, 7, DEFAULT_START, &cal)?;
    println!("{:<16} {:>9} {:>9} {:>9}", "placement", "week1", "week2", "dark %");
    for t in &suite {
        let slots = SlotSeries::from_trace(t, 900, cal)?;
        let dark = (0..slots.len()).filter(|&s| slots.lux(s) < 1.0).count();
        println!(
            "{:<16} {:>9.1} {:>9.1} {:>8.1}%",
            t.node_id(),
            weekly_mean_lux(t, 0)?,
            weekly_mean_lux(t, 1)?,
            100.0 * dark as f64 / slots.len() as f64
        );
    }

    let window = &suite[0];
    for v in augment_trace(window, 3, 99)? {
        println!("{} mean {:.1} lux", v.node_id(), v.mean_lux());
    }

    let mut head = Vec::new();
    write_trace_csv(&window.sub_days(0, 1)?, &mut head)?;
    let text = String::from_utf8(head)?;
    for line in text.lines().skip(420).take(3) {
        println!("{line}");
    }
    Ok(())
}
