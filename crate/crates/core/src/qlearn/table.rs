//! Tabular action-value store and its JSON file format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Hyperparameters;
use crate::envsim::{Action, ObservedState, ACTION_COUNT, STATE_COUNT};

const ENTRY_COUNT: usize = STATE_COUNT * ACTION_COUNT;

/// Q-values for every (state, action) pair. Pairs that were never written
/// are absent and read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Box<[f64]>,
    present: Box<[bool]>,
    stored: usize,
}

impl Default for QTable {
    fn default() -> Self {
        Self::new()
    }
}

impl QTable {
    pub fn new() -> Self {
        Self {
            values: vec![0.0; ENTRY_COUNT].into_boxed_slice(),
            present: vec![false; ENTRY_COUNT].into_boxed_slice(),
            stored: 0,
        }
    }

    #[inline]
    fn slot(s: &ObservedState, a: Action) -> usize {
        s.index() * ACTION_COUNT + a.index()
    }

    #[inline]
    pub fn get(&self, s: &ObservedState, a: Action) -> f64 {
        self.values[Self::slot(s, a)]
    }

    pub fn contains(&self, s: &ObservedState, a: Action) -> bool {
        self.present[Self::slot(s, a)]
    }

    #[inline]
    pub fn set(&mut self, s: &ObservedState, a: Action, value: f64) {
        let i = Self::slot(s, a);
        if !self.present[i] {
            self.present[i] = true;
            self.stored += 1;
        }
        self.values[i] = value;
    }

    #[inline]
    pub fn row(&self, s: &ObservedState) -> &[f64] {
        let i = s.index() * ACTION_COUNT;
        &self.values[i..i + ACTION_COUNT]
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    /// No entry differs from the implicit zero.
    pub fn is_blank(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Mean over stored entries; 0 for an empty table.
    pub fn mean(&self) -> f64 {
        if self.stored == 0 {
            return 0.0;
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(self.present.iter())
            .filter_map(|(v, &p)| p.then_some(*v))
            .sum();
        sum / self.stored as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stored entries in (state, action) index order.
    pub fn entries(&self) -> impl Iterator<Item = (ObservedState, Action, f64)> + '_ {
        (0..ENTRY_COUNT).filter(|&i| self.present[i]).map(|i| {
            let s = ObservedState::from_index(i / ACTION_COUNT).expect("index in range");
            (s, Action::ALL[i % ACTION_COUNT], self.values[i])
        })
    }

    pub fn to_file(&self, metadata: QTableMetadata) -> QTableFile {
        let entries = self
            .entries()
            .map(|(s, a, v)| (entry_key(&s, a), v))
            .collect();
        QTableFile { metadata, entries }
    }

    pub fn from_file(file: &QTableFile) -> Result<Self, String> {
        let mut t = QTable::new();
        for (key, &v) in &file.entries {
            let (s, a) = parse_entry_key(key).ok_or_else(|| format!("bad Q-table key `{key}`"))?;
            if !v.is_finite() {
                return Err(format!("non-finite value at `{key}`"));
            }
            t.set(&s, a, v);
        }
        Ok(t)
    }
}

/// `"light,storage,weekend,action"` with weekend as 0/1.
pub fn entry_key(s: &ObservedState, a: Action) -> String {
    format!(
        "{},{},{},{}",
        s.light_level(),
        s.storage_level(),
        u8::from(s.weekend()),
        a.performance_state()
    )
}

pub fn parse_entry_key(key: &str) -> Option<(ObservedState, Action)> {
    let parts: Vec<u8> = key
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    let [light, storage, weekend, action] = parts[..] else {
        return None;
    };
    if weekend > 1 {
        return None;
    }
    Some((
        ObservedState::new(light, storage, weekend == 1)?,
        Action::new(action).ok()?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableMetadata {
    pub hyperparameters: Hyperparameters,
    pub training_episodes: u64,
    pub source_traces: Vec<String>,
}

/// Serialized Q-table; entries are kept in sorted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QTableFile {
    pub metadata: QTableMetadata,
    pub entries: BTreeMap<String, f64>,
}
