//! The append-only run history (JSON lines).
//!
//! Three line shapes share one file:
//!
//! * a run header, `{"event":"run","options":{...},"space":{...}}`, written first;
//! * evaluation records, `{"seq":..,"bracket":..,"stage":..,"resource":..,"loss":..,"config":{..},"id":..}`
//!   with `"failed":true,"error":".."` (and a null loss) for failed evaluations;
//! * weight updates, `{"event":"weights","iteration":t,"c":[..],"delta_raw":[..],"delta":[..]}`.
//!
//! Replaying the records rebuilds the [`EvaluationStore`] exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, HoistError, Result};
use crate::space::{ConfigSpace, Configuration, Value};
use crate::store::{EvaluationRecord, EvaluationStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub seq: u64,
    pub bracket: u64,
    pub stage: usize,
    pub resource: f64,
    pub loss: Option<f64>,
    pub config: BTreeMap<String, Value>,
    pub id: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordLine {
    pub fn from_record(r: &EvaluationRecord) -> Self {
        RecordLine {
            seq: r.created_seq,
            bracket: r.bracket_id,
            stage: r.stage_index,
            resource: r.resource,
            loss: r.failure.is_none().then_some(r.loss),
            config: r.config.values().clone(),
            id: r.config.id(),
            failed: r.failure.is_some(),
            error: r.failure.clone(),
        }
    }

    pub fn to_record(&self, space: &ConfigSpace) -> Result<EvaluationRecord> {
        let config = space.configuration(self.id, self.config.clone())?;
        let (loss, failure) = match (self.failed, self.loss) {
            (false, Some(loss)) => (loss, None),
            (false, None) => {
                return Err(HoistError::History(format!(
                    "record {} has no loss and is not marked failed",
                    self.seq
                )))
            }
            (true, _) => (
                f64::INFINITY,
                Some(self.error.clone().unwrap_or_else(|| "failed".into())),
            ),
        };
        Ok(EvaluationRecord {
            config,
            resource: self.resource,
            loss,
            stage_index: self.stage,
            bracket_id: self.bracket,
            created_seq: self.seq,
            failure,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsLine {
    pub event: String,
    pub iteration: u64,
    pub c: Vec<f64>,
    pub delta_raw: Vec<f64>,
    /// Amplified vector actually blended in; absent when it vanished.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

impl WeightsLine {
    pub fn new(iteration: u64, c: Vec<f64>, delta_raw: Vec<f64>, delta: Option<Vec<f64>>) -> Self {
        WeightsLine {
            event: "weights".into(),
            iteration,
            c,
            delta_raw,
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub event: String,
    pub options: serde_json::Value,
    pub space: serde_json::Value,
}

impl RunHeader {
    pub fn new(options: serde_json::Value, space: &ConfigSpace) -> Self {
        RunHeader {
            event: "run".into(),
            options,
            space: serde_json::from_str(&space.to_json_string()).expect("space is valid JSON"),
        }
    }

    pub fn space(&self) -> Result<ConfigSpace> {
        ConfigSpace::from_json_str(&self.space.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HistoryEvent {
    Run(RunHeader),
    Record(RecordLine),
    Weights(WeightsLine),
}

impl HistoryEvent {
    pub fn to_line(&self) -> String {
        match self {
            HistoryEvent::Run(h) => serde_json::to_string(h),
            HistoryEvent::Record(r) => serde_json::to_string(r),
            HistoryEvent::Weights(w) => serde_json::to_string(w),
        }
        .expect("history lines serialize")
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(line)?;
        match value.get("event").and_then(serde_json::Value::as_str) {
            Some("run") => Ok(HistoryEvent::Run(serde_json::from_value(value)?)),
            Some("weights") => Ok(HistoryEvent::Weights(serde_json::from_value(value)?)),
            Some(other) => Err(HoistError::History(format!("unknown event `{other}`"))),
            None => Ok(HistoryEvent::Record(serde_json::from_value(value)?)),
        }
    }
}

/// Reads a history file. A torn final line (no trailing newline, not valid
/// JSON) is dropped; damage anywhere else is an error.
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryEvent>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HoistError::io(path, e))?;
    parse_history(&text)
}

pub fn parse_history(text: &str) -> Result<Vec<HistoryEvent>> {
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match HistoryEvent::parse_line(line) {
            Ok(ev) => events.push(ev),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => return Err(HoistError::History(format!("line {}: {e}", i + 1))),
        }
    }
    Ok(events)
}

/// A store and weight trajectory rebuilt from history events.
#[derive(Debug, Clone)]
pub struct Replayed {
    pub header: Option<RunHeader>,
    pub store: EvaluationStore,
    pub weights: Vec<WeightsLine>,
}

pub fn replay(
    events: &[HistoryEvent],
    space: &ConfigSpace,
    max_resource: f64,
    eta: f64,
) -> Result<Replayed> {
    let mut store = EvaluationStore::new(max_resource, eta)?;
    let mut header = None;
    let mut weights = Vec::new();
    for ev in events {
        match ev {
            HistoryEvent::Run(h) => header = Some(h.clone()),
            HistoryEvent::Record(r) => store.restore(r.to_record(space)?)?,
            HistoryEvent::Weights(w) => weights.push(w.clone()),
        }
    }
    Ok(Replayed {
        header,
        store,
        weights,
    })
}

/// Receives run events as they happen.
pub trait RunObserver {
    fn on_record(&mut self, _record: &EvaluationRecord) {}
    fn on_weights(&mut self, _line: &WeightsLine) {}
}

/// Discards everything.
pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Streams events to a history file, one flushed line each.
pub struct HistoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl HistoryWriter {
    /// Creates (truncating) `path` and writes the run header.
    pub fn create(path: impl Into<PathBuf>, header: &RunHeader) -> Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| HoistError::io(&path, e))?;
        let mut w = HistoryWriter {
            path,
            out: BufWriter::new(file),
            error: None,
        };
        w.write_event(&HistoryEvent::Run(header.clone()));
        w.finish_check()?;
        Ok(w)
    }

    fn write_event(&mut self, ev: &HistoryEvent) {
        if self.error.is_some() {
            return;
        }
        let line = ev.to_line();
        let res = writeln!(self.out, "{line}").and_then(|_| self.out.flush());
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    /// Surfaces the first write error, if any.
    pub fn finish_check(&mut self) -> Result<()> {
        match self.error.take() {
            Some(e) => Err(HoistError::io(&self.path, e)),
            None => Ok(()),
        }
    }
}

impl RunObserver for HistoryWriter {
    fn on_record(&mut self, record: &EvaluationRecord) {
        self.write_event(&HistoryEvent::Record(RecordLine::from_record(record)));
    }

    fn on_weights(&mut self, line: &WeightsLine) {
        self.write_event(&HistoryEvent::Weights(line.clone()));
    }
}

#[derive(Debug, Clone)]
struct CachedEval {
    values: BTreeMap<String, Value>,
    resource: f64,
    outcome: std::result::Result<f64, String>,
}

/// Logged evaluation outcomes keyed by sequence number, served back to a
/// deterministic re-run so a resumed run skips work it already paid for.
#[derive(Debug, Clone, Default)]
pub struct ReplayCache {
    by_seq: HashMap<u64, CachedEval>,
}

impl ReplayCache {
    pub fn from_events(events: &[HistoryEvent]) -> Self {
        let by_seq = events
            .iter()
            .filter_map(|ev| match ev {
                HistoryEvent::Record(r) => Some((
                    r.seq,
                    CachedEval {
                        values: r.config.clone(),
                        resource: r.resource,
                        outcome: match (r.failed, r.loss) {
                            (false, Some(l)) => Ok(l),
                            _ => Err(r.error.clone().unwrap_or_else(|| "failed".into())),
                        },
                    },
                )),
                _ => None,
            })
            .collect();
        ReplayCache { by_seq }
    }

    pub fn len(&self) -> usize {
        self.by_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_seq.is_empty()
    }

    /// `Ok(None)` past the end of the log; an error if the re-run diverged.
    pub fn lookup(
        &self,
        seq: u64,
        config: &Configuration,
        resource: f64,
    ) -> Result<Option<std::result::Result<f64, EvalError>>> {
        let Some(cached) = self.by_seq.get(&seq) else {
            return Ok(None);
        };
        if &cached.values != config.values() || cached.resource != resource {
            return Err(HoistError::History(format!(
                "replay diverged at seq {seq}: logged {:?} at r={}, re-run proposes {:?} at r={resource}",
                cached.values,
                cached.resource,
                config.values()
            )));
        }
        Ok(Some(cached.outcome.clone().map_err(EvalError::Other)))
    }
}
