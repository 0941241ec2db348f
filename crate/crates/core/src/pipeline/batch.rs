use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::backends::BackendError;
use crate::domain::QueryRecord;

use super::{parallel_map_cancellable, Pipeline, PipelineError, QueryTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidRecord,
    Prompt,
    Backend,
    ReplayMiss,
    Parse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl From<&PipelineError> for QueryFailure {
    fn from(e: &PipelineError) -> Self {
        let kind = match e {
            PipelineError::InvalidRecord { .. } => FailureKind::InvalidRecord,
            PipelineError::Prompt(_) => FailureKind::Prompt,
            PipelineError::Backend { source: BackendError::ReplayMiss { .. }, .. } => FailureKind::ReplayMiss,
            PipelineError::Backend { .. } => FailureKind::Backend,
            PipelineError::Parse(_) => FailureKind::Parse,
        };
        QueryFailure { kind, message: e.to_string() }
    }
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub record_id: String,
    pub result: Result<QueryTrace, QueryFailure>,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Outcomes of every query that ran, in input order.
    pub outcomes: Vec<QueryOutcome>,
    /// Number of records submitted.
    pub submitted: usize,
    pub interrupted: bool,
}

impl BatchOutcome {
    pub fn traces(&self) -> impl Iterator<Item = &QueryTrace> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &QueryFailure)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.record_id.as_str(), e)))
    }

    /// True when every submitted record produced a trace.
    pub fn is_complete(&self) -> bool {
        !self.interrupted && self.outcomes.len() == self.submitted && self.failures().next().is_none()
    }
}

/// Runs `records` on up to `config.parallelism` workers. Once `cancel` is set,
/// in-flight queries finish and nothing new starts. `on_done` is called once
/// per finished query, from the worker that ran it.
pub fn run_batch(
    pipeline: &Pipeline,
    records: &[QueryRecord],
    cancel: &AtomicBool,
    on_done: &(dyn Fn(&QueryOutcome) + Sync),
) -> BatchOutcome {
    let workers = pipeline.config().parallelism;
    let results = parallel_map_cancellable(records, workers, cancel, |_, record| {
        let outcome = QueryOutcome {
            record_id: record.id.clone(),
            result: pipeline.run_query(record).map_err(|e| QueryFailure::from(&e)),
        };
        on_done(&outcome);
        outcome
    });
    let interrupted = results.iter().any(Option::is_none);
    BatchOutcome {
        outcomes: results.into_iter().flatten().collect(),
        submitted: records.len(),
        interrupted,
    }
}
