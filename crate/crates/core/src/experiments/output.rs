//! Report serialization: full JSON, long-format per-day CSV and plot data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Arm, ExperimentReport};

pub fn write_report_json<W: Write>(report: &ExperimentReport, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")
}

/// Parses a report; the error message carries serde's line and column.
pub fn read_report<R: Read>(input: R) -> Result<ExperimentReport, String> {
    serde_json::from_reader(input).map_err(|e| e.to_string())
}

/// `day,node_id,arm,reward,depleted,samples_sent`, one row per node-day.
pub fn write_day_csv<W: Write>(report: &ExperimentReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "node_id", "arm", "reward", "depleted", "samples_sent"])?;
    for d in &report.per_day {
        w.write_record([
            d.day.to_string(),
            d.node_id.clone(),
            d.arm.name().to_string(),
            d.reward.to_string(),
            d.depleted.to_string(),
            d.samples_sent.to_string(),
        ])?;
    }
    w.flush()
}

/// Wide day-by-reward table (one column per node and arm) and per-day
/// training counts, as `(file name, bytes)` pairs.
pub fn write_plot_csvs(report: &ExperimentReport) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut series: BTreeMap<(Arm, &str), BTreeMap<usize, f64>> = BTreeMap::new();
    for d in &report.per_day {
        series.entry((d.arm, d.node_id.as_str())).or_default().insert(d.day, d.reward);
    }
    let days: std::collections::BTreeSet<usize> = report.per_day.iter().map(|d| d.day).collect();
    let mut rewards = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["day".to_string()];
    header.extend(series.keys().map(|(arm, id)| format!("{}:{id}", arm.name())));
    rewards.write_record(&header)?;
    for day in &days {
        let mut row = vec![day.to_string()];
        row.extend(series.values().map(|s| s.get(day).map(f64::to_string).unwrap_or_default()));
        rewards.write_record(&row)?;
    }

    let mut counts: BTreeMap<(Arm, &str, usize), usize> = BTreeMap::new();
    for t in &report.trainings {
        *counts.entry((t.arm, t.node_id.as_str(), t.day)).or_default() += 1;
    }
    let mut trainings = csv::Writer::from_writer(Vec::new());
    trainings.write_record(["day", "node_id", "arm", "trainings"])?;
    for ((arm, id, day), n) in counts {
        trainings.write_record([day.to_string(), id.to_string(), arm.name().to_string(), n.to_string()])?;
    }

    let into = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| e.into_error());
    Ok(vec![
        ("plot_rewards_by_day.csv".to_string(), into(rewards)?),
        ("plot_trainings_by_day.csv".to_string(), into(trainings)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{DayRecord, TrainingEvent};

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new("daybyday", 1);
        for (day, reward) in [(0, 96.0), (1, -20.5)] {
            r.per_day.push(DayRecord {
                day,
                node_id: "window".into(),
                arm: Arm::DayByDay,
                reward,
                depleted: reward < 0.0,
                samples_sent: 288,
            });
        }
        r.trainings.push(TrainingEvent {
            node_id: "window".into(),
            arm: Arm::DayByDay,
            slot: 96,
            day: 0,
            episodes: 10,
            converged: true,
            deployed: true,
            next_interval_hours: None,
        });
        r
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let mut buf = Vec::new();
        write_report_json(&r, &mut buf).unwrap();
        assert_eq!(read_report(buf.as_slice()).unwrap(), r);
        assert!(read_report(&b"{\"experiment\": 3}"[..]).is_err());
    }

    #[test]
    fn day_csv_layout() {
        let mut buf = Vec::new();
        write_day_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "day,node_id,arm,reward,depleted,samples_sent");
        assert_eq!(lines[2], "1,window,day_by_day,-20.5,true,288");
    }

    #[test]
    fn plot_files() {
        let files = write_plot_csvs(&sample()).unwrap();
        let rewards = String::from_utf8(files[0].1.clone()).unwrap();
        assert!(rewards.starts_with("day,day_by_day:window\n0,96\n1,-20.5\n"));
        let trainings = String::from_utf8(files[1].1.clone()).unwrap();
        assert_eq!(trainings, "day,node_id,arm,trainings\n0,window,day_by_day,1\n");
    }
}
