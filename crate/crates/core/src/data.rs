//! Event sequences and the native JSON Lines dataset format.
//!
//! One sequence per line:
//!
//! ```text
//! {"T": 50.0, "events": [{"t": 0.71, "k": 0}, {"t": 1.64, "k": 1}]}
//! ```
//!
//! Marks are 0-based. A sidecar `manifest.json` records the number of
//! types, the generator and its configuration, and the seed.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: SequenceError },
    #[error("manifest: {0}")]
    Manifest(serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("horizon must be finite and > 0, got {0}")]
    Horizon(f64),
    #[error("event {index}: time {t} outside [0, T={horizon})")]
    OutOfWindow { index: usize, t: f64, horizon: f64 },
    #[error("event {index}: time {t} precedes previous event at {prev}")]
    Unordered { index: usize, t: f64, prev: f64 },
    #[error("event {index}: mark {k} not in [0, {num_types})")]
    Mark { index: usize, k: usize, num_types: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub k: usize,
}

impl Event {
    pub fn new(t: f64, k: usize) -> Self {
        Self { t, k }
    }
}

/// Marked events observed on `[0, T)`, ordered by time.
///
/// Equal timestamps are allowed (the supply-chain generator emits an order,
/// a stockout flag and a reorder at the same instant); decreasing times are
/// not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl EventSequence {
    pub fn new(horizon: f64, events: Vec<Event>) -> Self {
        Self { horizon, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Check ordering, window and (when given) mark range.
    pub fn validate(&self, num_types: Option<usize>) -> Result<(), SequenceError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SequenceError::Horizon(self.horizon));
        }
        let mut prev = 0.0;
        for (index, e) in self.events.iter().enumerate() {
            if !(e.t >= 0.0 && e.t < self.horizon) {
                return Err(SequenceError::OutOfWindow {
                    index,
                    t: e.t,
                    horizon: self.horizon,
                });
            }
            if e.t < prev {
                return Err(SequenceError::Unordered { index, t: e.t, prev });
            }
            if let Some(k) = num_types {
                if e.k >= k {
                    return Err(SequenceError::Mark {
                        index,
                        k: e.k,
                        num_types: k,
                    });
                }
            }
            prev = e.t;
        }
        Ok(())
    }

    /// Events strictly before `t`.
    pub fn history_before(&self, t: f64) -> &[Event] {
        let n = self.events.partition_point(|e| e.t < t);
        &self.events[..n]
    }

    pub fn max_mark(&self) -> Option<usize> {
        self.events.iter().map(|e| e.k).max()
    }

    /// Inter-event gaps `t_n − t_{n−1}` with `t_0 = 0`.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        let mut prev = 0.0;
        self.events.iter().map(move |e| {
            let g = e.t - prev;
            prev = e.t;
            g
        })
    }
}

/// Mean of all gaps pooled across `sequences`; `None` when there are no events.
pub fn mean_inter_event_time(sequences: &[EventSequence]) -> Option<f64> {
    let (sum, n) = sequences
        .iter()
        .flat_map(|s| s.gaps())
        .fold((0.0, 0usize), |(s, n), g| (s + g, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn write_jsonl<W: Write>(mut w: W, sequences: &[EventSequence]) -> io::Result<()> {
    for seq in sequences {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_jsonl(path: impl AsRef<Path>, sequences: &[EventSequence]) -> io::Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), sequences)
}

/// Parse and validate a JSONL stream. Blank lines are ignored.
pub fn read_jsonl<R: BufRead>(r: R, num_types: Option<usize>) -> Result<Vec<EventSequence>, DataError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: EventSequence =
            serde_json::from_str(&line).map_err(|source| DataError::Parse { line: i + 1, source })?;
        seq.validate(num_types)
            .map_err(|reason| DataError::Invalid { line: i + 1, reason })?;
        out.push(seq);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>, num_types: Option<usize>) -> Result<Vec<EventSequence>, DataError> {
    read_jsonl(BufReader::new(File::open(path)?), num_types)
}

/// Sidecar description of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Manifest {
    #[serde(rename = "K")]
    pub num_types: usize,
    pub generator: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub mark_names: Vec<String>,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self).map_err(DataError::Manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(DataError::Manifest)
    }
}
