//! Per-task event records of the learning loop, stored one JSON object per
//! line.
//!
//! Fields: `ordinal` (1-based arrival index), `task`, `outcome`
//! (`FIRST`, `NEW_HEAD`, `MERGED` or `SKIPPED`), `head` (the head now owning
//! the task), `sim_task`/`sim_head` (the most similar known task and its
//! head), `loss_theta0`/`loss_sim` (holdout RMSE of the two candidates),
//! `head_count`, `known_tasks`, `tasks_per_head` (per head, id order),
//! `max_tasks_per_head`, `mean_tasks_per_head`, `running` (mean/min/max
//! evaluation RMSE over all learned tasks), `head_digests` (SHA-256 of each
//! head's parameters, id order) and `skip_reason`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::HeadId;
use crate::data::TaskKey;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    First,
    NewHead,
    Merged,
    Skipped,
}

impl Outcome {
    /// True when the outcome created a head.
    pub fn creates_head(self) -> bool {
        matches!(self, Outcome::First | Outcome::NewHead)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl RmseSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(RmseSummary {
            mean: mean.clamp(min, max),
            min,
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub ordinal: usize,
    pub task: TaskKey,
    pub outcome: Outcome,
    pub head: Option<HeadId>,
    pub sim_task: Option<TaskKey>,
    pub sim_head: Option<HeadId>,
    pub loss_theta0: Option<f64>,
    pub loss_sim: Option<f64>,
    pub head_count: usize,
    pub known_tasks: usize,
    pub tasks_per_head: Vec<usize>,
    pub max_tasks_per_head: usize,
    pub mean_tasks_per_head: f64,
    pub running: Option<RmseSummary>,
    pub head_digests: Vec<String>,
    pub skip_reason: Option<String>,
}

pub fn write_events<W: Write>(events: &[TaskEvent], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
    }
    w.flush().map_err(|e| Error::io("<event log>", e))
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<TaskEvent>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<event log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: "<event log>".into(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn save_events(events: &[TaskEvent], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_events(events, f)
}

pub fn load_events(path: &Path) -> Result<Vec<TaskEvent>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(f).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}
