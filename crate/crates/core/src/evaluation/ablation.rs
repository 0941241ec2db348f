use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::backends::BackendSet;
use crate::domain::{ExpertModuleId, QueryRecord, RunConfig};
use crate::pipeline::{apply_ablation, run_batch, AblationMode, BatchOutcome, Pipeline, QueryOutcome};
use crate::prompting::PromptSet;

use super::{score_run, EvalError, RunReport, Score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub score: Score,
    /// `score.accuracy` minus the reference accuracy (baseline for enable-only, full for disable-only).
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub module: ExpertModuleId,
    pub enable_only: Option<AblationCell>,
    pub disable_only: Option<AblationCell>,
}

/// Four module rows with enable-only and disable-only columns, plus the
/// baseline and full-pipeline rows the deltas refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMatrix {
    pub baseline: Option<Score>,
    pub full: Option<Score>,
    pub rows: Vec<AblationRow>,
}

impl AblationMatrix {
    pub fn from_scores(scores: &[(AblationMode, Score)]) -> AblationMatrix {
        let find = |mode: AblationMode| scores.iter().find(|(m, _)| *m == mode).map(|(_, s)| *s);
        let baseline = find(AblationMode::Baseline);
        let full = find(AblationMode::Full);
        let cell = |mode, reference: Option<Score>| {
            let score = find(mode)?;
            let reference = reference?;
            Some(AblationCell { score, delta: score.accuracy - reference.accuracy })
        };
        let rows = ExpertModuleId::ALL
            .iter()
            .map(|&m| AblationRow {
                module: m,
                enable_only: cell(AblationMode::EnableOnly(m), baseline),
                disable_only: cell(AblationMode::DisableOnly(m), full),
            })
            .collect();
        AblationMatrix { baseline, full, rows }
    }

    /// True when every cell and both reference rows are present.
    pub fn is_complete(&self) -> bool {
        self.baseline.is_some()
            && self.full.is_some()
            && self.rows.iter().all(|r| r.enable_only.is_some() && r.disable_only.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: AblationMode,
    pub config: RunConfig,
    pub outcome: BatchOutcome,
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub runs: Vec<ModeRun>,
    pub matrix: AblationMatrix,
    /// Set when a mode had failed queries or was interrupted; later modes were not run.
    pub aborted: Option<String>,
}

/// Runs every ablation mode over `records` (baseline and full first) and
/// builds the matrix. A mode with failed queries stops the sweep; the modes
/// finished so far are kept.
pub fn ablation_matrix(
    records: &[QueryRecord],
    base: &RunConfig,
    prompts: &PromptSet,
    backends: &BackendSet,
    cancel: &AtomicBool,
    on_done: &(dyn Fn(AblationMode, &QueryOutcome) + Sync),
) -> Result<AblationRun, EvalError> {
    let mut runs = Vec::new();
    let mut scores = Vec::new();
    let mut aborted = None;
    for mode in AblationMode::all() {
        let config = apply_ablation(base, mode);
        let pipeline = Pipeline::new(config.clone(), prompts.clone(), backends.clone())?;
        let outcome = run_batch(&pipeline, records, cancel, &|o| on_done(mode, o));
        let report = if outcome.is_complete() {
            let traces: Vec<_> = outcome.traces().cloned().collect();
            let report = score_run(&mode.key(), &traces, records)?;
            scores.push((mode, report.overall));
            Some(report)
        } else {
            let reason = match outcome.failures().next() {
                Some((id, f)) => format!("mode {}: record {id}: {}", mode.key(), f.message),
                None => format!("mode {}: interrupted", mode.key()),
            };
            aborted = Some(reason);
            None
        };
        runs.push(ModeRun { mode, config, outcome, report });
        if aborted.is_some() {
            break;
        }
    }
    Ok(AblationRun { runs, matrix: AblationMatrix::from_scores(&scores), aborted })
}
