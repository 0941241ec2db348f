use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::backends::BackendSet;
use crate::domain::{PipelineMode, QueryRecord, RunConfig, VisualLevel};
use crate::pipeline::{run_batch, FailureKind, Pipeline, QueryOutcome, QueryTrace};
use crate::prompting::PromptSet;

use super::{score_run, EvalError, Score};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: VisualLevel,
    pub label: String,
    /// Over the records that could be rendered at this level.
    pub score: Score,
    /// Records skipped because the level's caption (or image) is missing.
    pub skipped: Vec<String>,
    /// Records that failed for any other reason.
    pub failed: Vec<String>,
    /// Accuracy minus the first row's accuracy.
    pub delta: f64,
}

/// Traces of one sweep row, keyed by its level.
pub type LevelTraces = Vec<(VisualLevel, Vec<QueryTrace>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// One baseline-mode run per visual level, rows in the order given.
pub fn visual_level_sweep(
    records: &[QueryRecord],
    levels: &[VisualLevel],
    base: &RunConfig,
    prompts: &PromptSet,
    backends: &BackendSet,
    cancel: &AtomicBool,
    on_done: &(dyn Fn(VisualLevel, &QueryOutcome) + Sync),
) -> Result<(SweepTable, LevelTraces), EvalError> {
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut all_traces = Vec::new();
    for &level in levels {
        let config = RunConfig { mode: PipelineMode::Baseline, visual_level: Some(level), ..base.clone() };
        let pipeline = Pipeline::new(config, prompts.clone(), backends.clone())?;
        let outcome = run_batch(&pipeline, records, cancel, &|o| on_done(level, o));
        let mut skipped = Vec::new();
        let mut failed = Vec::new();
        for (id, f) in outcome.failures() {
            if f.kind == FailureKind::Prompt {
                skipped.push(id.to_string());
            } else {
                failed.push(id.to_string());
            }
        }
        let traces: Vec<QueryTrace> = outcome.traces().cloned().collect();
        let scored: Vec<QueryRecord> = records
            .iter()
            .filter(|r| traces.iter().any(|t| t.record_id == r.id))
            .cloned()
            .collect();
        let score = score_run(level.key(), &traces, &scored)?.overall;
        let delta = rows.first().map_or(0.0, |first| score.accuracy - first.score.accuracy);
        rows.push(SweepRow { level, label: level.label().to_string(), score, skipped, failed, delta });
        all_traces.push((level, traces));
        if outcome.interrupted {
            break;
        }
    }
    Ok((SweepTable { rows }, all_traces))
}
