//! Evaluation data partitioned by fidelity stage.
//!
//! Stage `i` (1-based) holds every successful evaluation run at resource
//! `R * eta^(i - K)`; stage `K` is the full-resource data and is the only
//! stage that defines the incumbent. Failed evaluations are kept aside so the
//! history stays complete while surrogates never see them.

use crate::error::{HoistError, Result};
use crate::space::Configuration;

/// Number of rungs `s_max = floor(log_eta R)` without trusting `ln` rounding.
pub fn max_bracket_index(max_resource: f64, eta: f64) -> Result<usize> {
    if !(max_resource.is_finite() && max_resource >= 1.0) {
        return Err(HoistError::InvalidSchedule(format!(
            "max resource must be >= 1, got {max_resource}"
        )));
    }
    if !(eta.is_finite() && eta > 1.0) {
        return Err(HoistError::InvalidSchedule(format!(
            "eta must be > 1, got {eta}"
        )));
    }
    let mut s = 0usize;
    while eta.powi(s as i32 + 1) <= max_resource * (1.0 + 1e-12) {
        s += 1;
    }
    Ok(s)
}

/// The geometric resource ladder `r_i = R * eta^(i - K)` for `i = 1..=K`.
pub fn resource_ladder(max_resource: f64, eta: f64) -> Result<Vec<f64>> {
    let k = max_bracket_index(max_resource, eta)? + 1;
    Ok((1..=k)
        .map(|i| max_resource / eta.powi((k - i) as i32))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub config: Configuration,
    pub resource: f64,
    /// Raw objective value; `+inf` for failed evaluations.
    pub loss: f64,
    /// 1-based global stage index.
    pub stage_index: usize,
    pub bracket_id: u64,
    pub created_seq: u64,
    /// Failure diagnostic, set only for failed evaluations.
    pub failure: Option<String>,
}

impl EvaluationRecord {
    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDataset {
    pub stage_index: usize,
    pub resource_level: f64,
    pub records: Vec<EvaluationRecord>,
}

impl StageDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn configs(&self) -> impl Iterator<Item = &Configuration> {
        self.records.iter().map(|r| &r.config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationStore {
    max_resource: f64,
    eta: f64,
    stages: Vec<StageDataset>,
    failed: Vec<EvaluationRecord>,
    next_seq: u64,
}

impl EvaluationStore {
    pub fn new(max_resource: f64, eta: f64) -> Result<Self> {
        let stages = resource_ladder(max_resource, eta)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| StageDataset {
                stage_index: i + 1,
                resource_level: r,
                records: Vec::new(),
            })
            .collect();
        Ok(EvaluationStore {
            max_resource,
            eta,
            stages,
            failed: Vec::new(),
            next_seq: 0,
        })
    }

    pub fn max_resource(&self) -> f64 {
        self.max_resource
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Number of stages `K`.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[StageDataset] {
        &self.stages
    }

    /// Stage by 1-based index.
    pub fn stage(&self, stage_index: usize) -> Option<&StageDataset> {
        stage_index
            .checked_sub(1)
            .and_then(|i| self.stages.get(i))
    }

    /// The full-resource dataset `D_K`.
    pub fn complete(&self) -> &StageDataset {
        self.stages.last().expect("ladder has at least one stage")
    }

    pub fn failed(&self) -> &[EvaluationRecord] {
        &self.failed
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Successful plus failed records.
    pub fn total_records(&self) -> usize {
        self.stages.iter().map(StageDataset::len).sum::<usize>() + self.failed.len()
    }

    /// 1-based stage index whose level equals `resource` exactly.
    pub fn stage_for_resource(&self, resource: f64) -> Option<usize> {
        self.stages
            .iter()
            .find(|s| s.resource_level == resource)
            .map(|s| s.stage_index)
    }

    fn check_slot(&self, config: &Configuration, stage_index: usize, resource: f64) -> Result<()> {
        let reject = |reason: String| HoistError::RejectedRecord {
            config_id: config.id(),
            reason,
        };
        let stage = self
            .stage(stage_index)
            .ok_or_else(|| reject(format!("stage {stage_index} outside 1..={}", self.stages.len())))?;
        if stage.resource_level != resource {
            return Err(reject(format!(
                "resource {resource} does not match stage {stage_index} level {}",
                stage.resource_level
            )));
        }
        Ok(())
    }

    /// Appends a successful evaluation to its stage dataset.
    pub fn record(
        &mut self,
        config: Configuration,
        stage_index: usize,
        resource: f64,
        loss: f64,
        bracket_id: u64,
    ) -> Result<&EvaluationRecord> {
        self.check_slot(&config, stage_index, resource)?;
        if !loss.is_finite() {
            return Err(HoistError::RejectedRecord {
                config_id: config.id(),
                reason: format!("non-finite loss {loss} for {:?}", config.values()),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let stage = &mut self.stages[stage_index - 1];
        stage.records.push(EvaluationRecord {
            config,
            resource,
            loss,
            stage_index,
            bracket_id,
            created_seq: seq,
            failure: None,
        });
        Ok(stage.records.last().expect("just pushed"))
    }

    /// Keeps a failed evaluation out of the stage datasets.
    pub fn record_failure(
        &mut self,
        config: Configuration,
        stage_index: usize,
        resource: f64,
        bracket_id: u64,
        reason: impl Into<String>,
    ) -> Result<&EvaluationRecord> {
        self.check_slot(&config, stage_index, resource)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.failed.push(EvaluationRecord {
            config,
            resource,
            loss: f64::INFINITY,
            stage_index,
            bracket_id,
            created_seq: seq,
            failure: Some(reason.into()),
        });
        Ok(self.failed.last().expect("just pushed"))
    }

    /// Best full-resource record; ties go to the earliest.
    pub fn incumbent(&self) -> Option<&EvaluationRecord> {
        self.complete().records.iter().min_by(|a, b| {
            a.loss
                .total_cmp(&b.loss)
                .then(a.created_seq.cmp(&b.created_seq))
        })
    }

    /// All records, failed included, in creation order.
    pub fn records_in_order(&self) -> Vec<&EvaluationRecord> {
        let mut all: Vec<&EvaluationRecord> = self
            .stages
            .iter()
            .flat_map(|s| s.records.iter())
            .chain(self.failed.iter())
            .collect();
        all.sort_by_key(|r| r.created_seq);
        all
    }

    /// Re-inserts a logged record, keeping its sequence number.
    pub(crate) fn restore(&mut self, record: EvaluationRecord) -> Result<()> {
        self.check_slot(&record.config, record.stage_index, record.resource)?;
        if record.created_seq < self.next_seq {
            return Err(HoistError::History(format!(
                "sequence {} is not increasing (next expected >= {})",
                record.created_seq, self.next_seq
            )));
        }
        if !record.is_failed() && !record.loss.is_finite() {
            return Err(HoistError::History(format!(
                "record {} has a non-finite loss but no failure flag",
                record.created_seq
            )));
        }
        self.next_seq = record.created_seq + 1;
        if record.is_failed() {
            self.failed.push(record);
        } else {
            let idx = record.stage_index - 1;
            self.stages[idx].records.push(record);
        }
        Ok(())
    }
}
