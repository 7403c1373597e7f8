//! Light-intensity traces: ingest, synthetic placement archetypes, fleet
//! augmentation, and the slot-aligned view consumed by the simulator.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDateTime, Weekday};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, hash_str, seeded_rng};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_HOUR: i64 = 3_600;
/// Internal sample spacing for generated and resampled traces.
pub const DEFAULT_RESOLUTION: u32 = 60;
/// 2018-11-05T00:00:00Z, a Monday.
pub const DEFAULT_START: i64 = 1_541_376_000;
/// Raw input gaps at or above this length are rejected rather than interpolated.
pub const MAX_GAP_SECONDS: i64 = SECONDS_PER_HOUR;

/// Augmentation bounds: ±30% intensity, ±3 h circular time shift.
pub const AUGMENT_SCALE_SPREAD: f64 = 0.3;
pub const AUGMENT_SHIFT_SECONDS: f64 = 3.0 * 3600.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: gap of {seconds} s exceeds the {MAX_GAP_SECONDS} s limit")]
    Gap { line: u64, seconds: i64 },
    #[error("line {line}: timestamp does not increase")]
    NonMonotonic { line: u64 },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("trace shorter than one whole day")]
    TooShort,
    #[error("slot {slot} outside trace of {slots} slots")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("week {week} not covered by a trace of {days} days")]
    WeekOutOfRange { week: usize, days: usize },
    #[error("augmentation count must be at least 1")]
    EmptyAugmentation,
}

/// Fixed UTC offset used to derive local calendar features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calendar {
    pub utc_offset_seconds: i32,
}

impl Default for Calendar {
    fn default() -> Self {
        Self {
            utc_offset_seconds: 0,
        }
    }
}

impl Calendar {
    fn local(&self, timestamp: i64) -> i64 {
        timestamp + i64::from(self.utc_offset_seconds)
    }

    /// Seconds since local midnight.
    pub fn seconds_of_day(&self, timestamp: i64) -> i64 {
        self.local(timestamp).rem_euclid(SECONDS_PER_DAY)
    }
}

/// True iff the local day of `timestamp` is a Saturday or Sunday.
pub fn is_weekend(timestamp: i64, calendar: &Calendar) -> bool {
    let days = calendar.local(timestamp).div_euclid(SECONDS_PER_DAY);
    // Day 0 of the Unix epoch is a Thursday.
    let weekday = (days + 4).rem_euclid(7);
    weekday == 0 || weekday == 6
}

/// Uniformly sampled illuminance series covering whole days.
#[derive(Debug, Clone, PartialEq)]
pub struct LightTrace {
    node_id: String,
    start: i64,
    resolution: u32,
    lux: Vec<f64>,
}

impl LightTrace {
    pub fn new(
        node_id: impl Into<String>,
        start: i64,
        resolution: u32,
        lux: Vec<f64>,
    ) -> Result<Self, TraceError> {
        if resolution == 0 || SECONDS_PER_DAY % i64::from(resolution) != 0 {
            return Err(TraceError::Invalid(format!(
                "resolution {resolution} s must divide one day"
            )));
        }
        let per_day = (SECONDS_PER_DAY / i64::from(resolution)) as usize;
        if lux.is_empty() {
            return Err(TraceError::TooShort);
        }
        if lux.len() % per_day != 0 {
            return Err(TraceError::Invalid(format!(
                "{} samples is not a whole number of days at {resolution} s",
                lux.len()
            )));
        }
        if let Some(i) = lux.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(TraceError::Invalid(format!(
                "sample {i} has illuminance {}",
                lux[i]
            )));
        }
        Ok(Self {
            node_id: node_id.into(),
            start,
            resolution,
            lux,
        })
    }

    /// Constant-illuminance trace, mostly useful in tests and examples.
    pub fn constant(node_id: impl Into<String>, start: i64, days: usize, lux: f64) -> Self {
        let per_day = (SECONDS_PER_DAY / i64::from(DEFAULT_RESOLUTION)) as usize;
        Self::new(node_id, start, DEFAULT_RESOLUTION, vec![lux; per_day * days])
            .expect("constant trace is valid")
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn lux(&self) -> &[f64] {
        &self.lux
    }

    pub fn len(&self) -> usize {
        self.lux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lux.is_empty()
    }

    pub fn samples_per_day(&self) -> usize {
        (SECONDS_PER_DAY / i64::from(self.resolution)) as usize
    }

    pub fn days(&self) -> usize {
        self.lux.len() / self.samples_per_day()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start + index as i64 * i64::from(self.resolution)
    }

    pub fn with_node_id(mut self, node_id: impl Into<String>) -> Self {
        self.node_id = node_id.into();
        self
    }

    pub fn mean_lux(&self) -> f64 {
        self.lux.iter().sum::<f64>() / self.lux.len() as f64
    }

    /// Keeps `days` whole days starting at `first_day`.
    pub fn sub_days(&self, first_day: usize, days: usize) -> Result<Self, TraceError> {
        let per_day = self.samples_per_day();
        if days == 0 {
            return Err(TraceError::TooShort);
        }
        if first_day + days > self.days() {
            return Err(TraceError::Invalid(format!(
                "days {first_day}..{} outside trace of {} days",
                first_day + days,
                self.days()
            )));
        }
        Ok(Self {
            node_id: self.node_id.clone(),
            start: self.timestamp(first_day * per_day),
            resolution: self.resolution,
            lux: self.lux[first_day * per_day..(first_day + days) * per_day].to_vec(),
        })
    }
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_timestamp(timestamp: i64) -> String {
    DateTime::from_timestamp(timestamp, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| timestamp.to_string())
}

/// Reads a `timestamp,lux` CSV and resamples it to `resolution` seconds.
pub fn load_trace(path: impl AsRef<Path>, resolution: u32) -> Result<LightTrace, TraceError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let node_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "node".to_string());
    read_trace_csv(file, node_id, resolution)
}

/// Parses CSV rows, then mean-aggregates them into `resolution`-second bins.
///
/// Bins left empty by a sub-hour gap are linearly interpolated from their
/// neighbours. A trailing partial day is padded with the last value when less
/// than an hour is missing and truncated otherwise.
pub fn read_trace_csv<R: Read>(
    reader: R,
    node_id: impl Into<String>,
    resolution: u32,
) -> Result<LightTrace, TraceError> {
    if resolution == 0 || SECONDS_PER_DAY % i64::from(resolution) != 0 {
        return Err(TraceError::Invalid(format!(
            "resolution {resolution} s must divide one day"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| TraceError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "lux" {
        return Err(TraceError::Parse {
            line: 1,
            message: "expected header `timestamp,lux`".into(),
        });
    }

    let mut rows: Vec<(i64, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(TraceError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| TraceError::Parse {
            line,
            message: format!("bad timestamp `{}`", &record[0]),
        })?;
        let lux: f64 = record[1].parse().map_err(|_| TraceError::Parse {
            line,
            message: format!("bad lux `{}`", &record[1]),
        })?;
        if !lux.is_finite() || lux < 0.0 {
            return Err(TraceError::Parse {
                line,
                message: format!("lux must be finite and non-negative, got {lux}"),
            });
        }
        if let Some(&(prev, _)) = rows.last() {
            if ts <= prev {
                return Err(TraceError::NonMonotonic { line });
            }
            if ts - prev >= MAX_GAP_SECONDS {
                return Err(TraceError::Gap {
                    line,
                    seconds: ts - prev,
                });
            }
        }
        rows.push((ts, lux));
    }
    let Some(&(start, _)) = rows.first() else {
        return Err(TraceError::TooShort);
    };

    let res = i64::from(resolution);
    let bins = ((rows.last().unwrap().0 - start) / res + 1) as usize;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0u32; bins];
    for &(ts, lux) in &rows {
        let b = ((ts - start) / res) as usize;
        sums[b] += lux;
        counts[b] += 1;
    }
    let mut lux: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / f64::from(c)))
        .collect();
    interpolate_gaps(&mut lux);
    let mut lux: Vec<f64> = lux.into_iter().map(|v| v.unwrap_or(0.0)).collect();

    let per_day = (SECONDS_PER_DAY / res) as usize;
    let rem = lux.len() % per_day;
    if rem != 0 {
        let missing = (per_day - rem) as i64 * res;
        if missing < MAX_GAP_SECONDS {
            let last = *lux.last().unwrap();
            lux.resize(lux.len() + per_day - rem, last);
        } else {
            lux.truncate(lux.len() - rem);
        }
    }
    if lux.is_empty() {
        return Err(TraceError::TooShort);
    }
    LightTrace::new(node_id, start, resolution, lux)
}

fn interpolate_gaps(bins: &mut [Option<f64>]) {
    let mut prev: Option<usize> = None;
    for i in 0..bins.len() {
        if bins[i].is_none() {
            continue;
        }
        if let Some(p) = prev {
            if i - p > 1 {
                let (a, b) = (bins[p].unwrap(), bins[i].unwrap());
                for j in p + 1..i {
                    let t = (j - p) as f64 / (i - p) as f64;
                    bins[j] = Some(a + (b - a) * t);
                }
            }
        }
        prev = Some(i);
    }
}

/// Writes the trace in the `timestamp,lux` CSV format.
pub fn write_trace_csv<W: Write>(trace: &LightTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "timestamp,lux")?;
    for (i, lux) in trace.lux.iter().enumerate() {
        writeln!(out, "{},{}", format_timestamp(trace.timestamp(i)), lux)?;
    }
    out.flush()
}

/// Mean illuminance over `[slot_start, slot_start + slot_seconds)`.
pub fn slot_lux(trace: &LightTrace, slot_index: usize, slot_seconds: u32) -> Result<f64, TraceError> {
    let res = trace.resolution as usize;
    let per_slot = (slot_seconds as usize).div_ceil(res).max(1);
    let slots = trace.len() * res / slot_seconds as usize;
    if slot_seconds == 0 || slot_index >= slots {
        return Err(TraceError::SlotOutOfRange {
            slot: slot_index,
            slots,
        });
    }
    let first = (slot_index * slot_seconds as usize).div_ceil(res);
    let end = (first + per_slot).min(trace.len());
    let window = &trace.lux[first..end];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Mean illuminance over the 7-day window starting at day `7 * week_index`.
pub fn weekly_mean_lux(trace: &LightTrace, week_index: usize) -> Result<f64, TraceError> {
    let days = trace.days();
    if (week_index + 1) * 7 > days {
        return Err(TraceError::WeekOutOfRange {
            week: week_index,
            days,
        });
    }
    let per_week = trace.samples_per_day() * 7;
    let window = &trace.lux[week_index * per_week..(week_index + 1) * per_week];
    Ok(window.iter().sum::<f64>() / per_week as f64)
}

/// Slot-aggregated light and calendar features, precomputed for the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSeries {
    node_id: String,
    start: i64,
    slot_seconds: u32,
    lux: Vec<f64>,
    weekend: Vec<bool>,
    calendar: Calendar,
}

impl SlotSeries {
    pub fn from_trace(
        trace: &LightTrace,
        slot_seconds: u32,
        calendar: Calendar,
    ) -> Result<Self, TraceError> {
        if slot_seconds == 0
            || slot_seconds % trace.resolution != 0
            || SECONDS_PER_DAY % i64::from(slot_seconds) != 0
        {
            return Err(TraceError::Invalid(format!(
                "slot length {slot_seconds} s must be a multiple of {} s and divide a day",
                trace.resolution
            )));
        }
        let per_slot = (slot_seconds / trace.resolution) as usize;
        let lux: Vec<f64> = trace
            .lux
            .chunks_exact(per_slot)
            .map(|c| c.iter().sum::<f64>() / per_slot as f64)
            .collect();
        let weekend = (0..lux.len())
            .map(|i| is_weekend(trace.start + i as i64 * i64::from(slot_seconds), &calendar))
            .collect();
        Ok(Self {
            node_id: trace.node_id.clone(),
            start: trace.start,
            slot_seconds,
            lux,
            weekend,
            calendar,
        })
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn slot_seconds(&self) -> u32 {
        self.slot_seconds
    }

    pub fn len(&self) -> usize {
        self.lux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lux.is_empty()
    }

    pub fn slots_per_day(&self) -> usize {
        (SECONDS_PER_DAY / i64::from(self.slot_seconds)) as usize
    }

    pub fn days(&self) -> usize {
        self.lux.len() / self.slots_per_day()
    }

    pub fn slot_timestamp(&self, slot: usize) -> i64 {
        self.start + slot as i64 * i64::from(self.slot_seconds)
    }

    pub fn lux(&self, slot: usize) -> f64 {
        self.lux[slot]
    }

    pub fn weekend(&self, slot: usize) -> bool {
        self.weekend[slot]
    }

    pub fn calendar(&self) -> Calendar {
        self.calendar
    }

    /// Light and weekend flag at `slot`; one past the end repeats the last
    /// slot's light with the calendar flag of the following timestamp.
    pub fn features(&self, slot: usize) -> Option<(f64, bool)> {
        if slot < self.len() {
            Some((self.lux[slot], self.weekend[slot]))
        } else if slot == self.len() && !self.is_empty() {
            Some((
                self.lux[slot - 1],
                is_weekend(self.slot_timestamp(slot), &self.calendar),
            ))
        } else {
            None
        }
    }

    pub fn mean_lux(&self, slots: std::ops::Range<usize>) -> f64 {
        let w = &self.lux[slots];
        w.iter().sum::<f64>() / w.len() as f64
    }

    /// Keeps `days` whole days starting at `first_day`.
    pub fn sub_days(&self, first_day: usize, days: usize) -> Result<Self, TraceError> {
        let spd = self.slots_per_day();
        if days == 0 || first_day + days > self.days() {
            return Err(TraceError::TooShort);
        }
        let range = first_day * spd..(first_day + days) * spd;
        Ok(Self {
            node_id: self.node_id.clone(),
            start: self.slot_timestamp(range.start),
            slot_seconds: self.slot_seconds,
            lux: self.lux[range.clone()].to_vec(),
            weekend: self.weekend[range].to_vec(),
            calendar: self.calendar,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    Window,
    Door,
    MiddleOffice,
    ConferenceRoom,
    StairAccess,
}

impl ArchetypeKind {
    pub const ALL: [ArchetypeKind; 5] = [
        ArchetypeKind::Window,
        ArchetypeKind::MiddleOffice,
        ArchetypeKind::Door,
        ArchetypeKind::ConferenceRoom,
        ArchetypeKind::StairAccess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchetypeKind::Window => "window",
            ArchetypeKind::Door => "door",
            ArchetypeKind::MiddleOffice => "middle_office",
            ArchetypeKind::ConferenceRoom => "conference_room",
            ArchetypeKind::StairAccess => "stair_access",
        }
    }

    /// Whether light depends on people being present (weekday occupancy).
    pub fn is_occupancy_driven(self) -> bool {
        matches!(self, ArchetypeKind::MiddleOffice | ArchetypeKind::ConferenceRoom)
    }
}

impl fmt::Display for ArchetypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchetypeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchetypeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown archetype `{s}`"))
    }
}

/// Shape parameters for a synthetic placement. Hours are local time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeParams {
    /// Illuminance at the brightest point of the pattern.
    pub peak_lux: f64,
    /// Sunrise for daylight kinds, arrival time for occupancy kinds.
    pub active_start_hour: f64,
    /// Sunset for daylight kinds, departure time for occupancy kinds.
    pub active_end_hour: f64,
    /// Occupancy events (meetings, corridor traffic) per active hour.
    /// Only `Door` and `ConferenceRoom` use it.
    pub occupancy_rate: f64,
    /// Multiplier applied on Saturdays and Sundays.
    pub weekend_factor: f64,
    /// Largest fractional day-to-day dimming (clouds, partial occupancy).
    pub daily_variation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementArchetype {
    pub kind: ArchetypeKind,
    pub params: ArchetypeParams,
}

impl PlacementArchetype {
    pub fn new(kind: ArchetypeKind, params: ArchetypeParams) -> Result<Self, TraceError> {
        let a = Self { kind, params };
        a.validate()?;
        Ok(a)
    }

    /// Built-in parameters for each placement.
    pub fn default_for(kind: ArchetypeKind) -> Self {
        let params = match kind {
            ArchetypeKind::Window => ArchetypeParams {
                peak_lux: 1800.0,
                active_start_hour: 6.5,
                active_end_hour: 18.5,
                occupancy_rate: 0.0,
                weekend_factor: 1.0,
                daily_variation: 0.5,
            },
            ArchetypeKind::Door => ArchetypeParams {
                peak_lux: 450.0,
                active_start_hour: 7.0,
                active_end_hour: 18.0,
                occupancy_rate: 1.0,
                weekend_factor: 0.6,
                daily_variation: 0.5,
            },
            ArchetypeKind::MiddleOffice => ArchetypeParams {
                peak_lux: 350.0,
                active_start_hour: 8.5,
                active_end_hour: 17.5,
                occupancy_rate: 0.0,
                weekend_factor: 0.0,
                daily_variation: 0.3,
            },
            ArchetypeKind::ConferenceRoom => ArchetypeParams {
                peak_lux: 600.0,
                active_start_hour: 9.0,
                active_end_hour: 17.0,
                occupancy_rate: 0.35,
                weekend_factor: 0.0,
                daily_variation: 0.2,
            },
            ArchetypeKind::StairAccess => ArchetypeParams {
                peak_lux: 300.0,
                active_start_hour: 0.0,
                active_end_hour: 0.0,
                occupancy_rate: 0.0,
                weekend_factor: 1.0,
                daily_variation: 0.0,
            },
        };
        Self { kind, params }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let p = &self.params;
        let bad = |m: &str| Err(TraceError::Invalid(format!("{}: {m}", self.kind)));
        if !(p.peak_lux.is_finite() && p.peak_lux > 0.0) {
            return bad("peak_lux must be positive");
        }
        let hour_ok = |h: f64| (0.0..24.0).contains(&h);
        if !hour_ok(p.active_start_hour) || !hour_ok(p.active_end_hour) {
            return bad("active hours must lie in [0, 24)");
        }
        if self.kind != ArchetypeKind::StairAccess && p.active_start_hour >= p.active_end_hour {
            return bad("active_start_hour must precede active_end_hour");
        }
        if !(p.occupancy_rate.is_finite() && p.occupancy_rate >= 0.0) {
            return bad("occupancy_rate must be non-negative");
        }
        if !(p.weekend_factor.is_finite() && p.weekend_factor >= 0.0) {
            return bad("weekend_factor must be non-negative");
        }
        if !(0.0..=1.0).contains(&p.daily_variation) {
            return bad("daily_variation must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Generates `days` whole days of 60 s samples for a placement, starting at
/// `start` (expected to be local midnight). Deterministic per seed.
pub fn generate_synthetic(
    archetype: &PlacementArchetype,
    days: usize,
    seed: u64,
    start: i64,
    calendar: &Calendar,
) -> Result<LightTrace, TraceError> {
    archetype.validate()?;
    if days == 0 {
        return Err(TraceError::TooShort);
    }
    let p = archetype.params;
    let res = i64::from(DEFAULT_RESOLUTION);
    let per_day = (SECONDS_PER_DAY / res) as usize;
    let mut rng = seeded_rng(derive_seed(seed, hash_str(archetype.kind.name())));
    let mut lux = Vec::with_capacity(per_day * days);
    let mut day = vec![0.0; per_day];

    for d in 0..days {
        let day_start = start + d as i64 * SECONDS_PER_DAY;
        let weekend = is_weekend(day_start + SECONDS_PER_DAY / 2, calendar);
        let dim = 1.0 - p.daily_variation * rng.random::<f64>();
        day.fill(0.0);
        let minute = |h: f64| ((h * 60.0).round().max(0.0) as usize).min(per_day);

        match archetype.kind {
            ArchetypeKind::StairAccess => day.fill(p.peak_lux),
            ArchetypeKind::Window | ArchetypeKind::Door => {
                let (rise, set) = (p.active_start_hour, p.active_end_hour);
                for (m, v) in day.iter_mut().enumerate() {
                    let h = m as f64 / 60.0;
                    if h >= rise && h < set {
                        *v = p.peak_lux * dim * (PI * (h - rise) / (set - rise)).sin();
                    }
                }
                if archetype.kind == ArchetypeKind::Door && !weekend {
                    // Corridor lights switched on by passers-by.
                    for (a, b) in poisson_events(&mut rng, p, 5.0, 20.0) {
                        for v in &mut day[minute(a)..minute(b)] {
                            *v += p.peak_lux * 0.6;
                        }
                    }
                }
            }
            ArchetypeKind::MiddleOffice => {
                if !weekend || p.weekend_factor > 0.0 {
                    let arrive = p.active_start_hour + rng.random_range(-1.0..1.0);
                    let leave = p.active_end_hour + rng.random_range(-1.5..1.5);
                    for v in &mut day[minute(arrive)..minute(leave.max(arrive))] {
                        *v = p.peak_lux * dim;
                    }
                }
            }
            ArchetypeKind::ConferenceRoom => {
                if !weekend || p.weekend_factor > 0.0 {
                    for (a, b) in poisson_events(&mut rng, p, 30.0, 90.0) {
                        for v in &mut day[minute(a)..minute(b)] {
                            *v = p.peak_lux * dim;
                        }
                    }
                }
            }
        }
        if weekend && archetype.kind != ArchetypeKind::StairAccess {
            day.iter_mut().for_each(|v| *v *= p.weekend_factor);
        }
        lux.extend_from_slice(&day);
    }
    LightTrace::new(archetype.kind.name(), start, DEFAULT_RESOLUTION, lux)
}

/// One trace per archetype, all sharing `seed`; each archetype draws from
/// its own stream so adding or removing one leaves the others unchanged.
pub fn generate_suite(
    archetypes: &[PlacementArchetype],
    days: usize,
    seed: u64,
    start: i64,
    calendar: &Calendar,
) -> Result<Vec<LightTrace>, TraceError> {
    archetypes
        .iter()
        .map(|a| generate_synthetic(a, days, seed, start, calendar))
        .collect()
}

/// The built-in parameters for every archetype, in [`ArchetypeKind::ALL`] order.
pub fn default_archetypes() -> Vec<PlacementArchetype> {
    ArchetypeKind::ALL.iter().map(|&k| PlacementArchetype::default_for(k)).collect()
}

/// Poisson arrivals over the active hours with uniform durations in minutes.
fn poisson_events(
    rng: &mut impl Rng,
    p: ArchetypeParams,
    min_minutes: f64,
    max_minutes: f64,
) -> Vec<(f64, f64)> {
    let mut events = Vec::new();
    if p.occupancy_rate <= 0.0 {
        return events;
    }
    let mut t = p.active_start_hour;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / p.occupancy_rate;
        if t >= p.active_end_hour {
            break;
        }
        let len = rng.random_range(min_minutes..=max_minutes) / 60.0;
        events.push((t, (t + len).min(24.0)));
    }
    events
}

/// Per-trace augmentation draw: intensity scale and circular shift in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub scale: f64,
    pub shift_steps: i64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        scale: 1.0,
        shift_steps: 0,
    };
}

/// Draws `count` augmentation parameters: scale ~ U[0.7, 1.3], shift ~ U[-3 h, 3 h]
/// rounded to whole `resolution` steps.
pub fn draw_augment_params(count: usize, seed: u64, resolution: u32) -> Vec<AugmentParams> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let scale = rng.random_range(1.0 - AUGMENT_SCALE_SPREAD..=1.0 + AUGMENT_SCALE_SPREAD);
            let shift = rng.random_range(-AUGMENT_SHIFT_SECONDS..=AUGMENT_SHIFT_SECONDS);
            AugmentParams {
                scale,
                shift_steps: (shift / f64::from(resolution)).round() as i64,
            }
        })
        .collect()
}

/// Scales and circularly shifts `base`; a positive shift moves light later.
pub fn apply_augment(base: &LightTrace, params: AugmentParams, node_id: impl Into<String>) -> LightTrace {
    let n = base.len() as i64;
    let lux = (0..n)
        .map(|j| base.lux[(j - params.shift_steps).rem_euclid(n) as usize] * params.scale)
        .collect();
    LightTrace {
        node_id: node_id.into(),
        start: base.start,
        resolution: base.resolution,
        lux,
    }
}

/// Mean of the augmented trace over `range` without materializing it.
pub fn augmented_mean(base: &LightTrace, params: AugmentParams, range: std::ops::Range<usize>) -> f64 {
    let n = base.len() as i64;
    let len = range.len() as f64;
    range
        .map(|j| base.lux[(j as i64 - params.shift_steps).rem_euclid(n) as usize])
        .sum::<f64>()
        * params.scale
        / len
}

pub fn augmented_id(base: &LightTrace, index: usize) -> String {
    format!("{}-{index:04}", base.node_id)
}

/// Builds `count` scaled and time-shifted variants of `base`.
pub fn augment_trace(base: &LightTrace, count: usize, seed: u64) -> Result<Vec<LightTrace>, TraceError> {
    if count == 0 {
        return Err(TraceError::EmptyAugmentation);
    }
    Ok(draw_augment_params(count, seed, base.resolution)
        .into_iter()
        .enumerate()
        .map(|(i, p)| apply_augment(base, p, augmented_id(base, i)))
        .collect())
}

#[allow(dead_code)]
fn weekday_of(timestamp: i64, calendar: &Calendar) -> Option<Weekday> {
    DateTime::from_timestamp(calendar.local(timestamp), 0).map(|d| d.weekday())
}
