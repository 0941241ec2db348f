use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answer_extract::Verdict;
use crate::backends::ResponseSource;
use crate::decision_parser::ParseDiagnostics;
use crate::domain::{Decision, FinalAnswer, PipelineMode, RunConfig, SubAnswer, SupplementaryInfo};

/// Wall-clock and provenance fields. Excluded from the trace digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CallTiming {
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ResponseSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStage {
    pub prompt_sha256: String,
    /// Raw text of every attempt, the accepted one last.
    pub responses: Vec<String>,
    pub decision: Decision,
    pub diagnostics: ParseDiagnostics,
    pub latency_ms: u64,
    pub timing: CallTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertCall {
    /// Exact prompt text sent; empty when the sub-task was skipped without a call.
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    pub answer: SubAnswer,
    pub latency_ms: u64,
    pub timing: CallTiming,
}

impl ExpertCall {
    pub fn issued(&self) -> bool {
        !self.prompt.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisStage {
    pub prompt_sha256: String,
    pub prompt: String,
    pub response: String,
    pub latency_ms: u64,
    pub timing: CallTiming,
}

/// Everything one query produced, stage by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub record_id: String,
    pub mode: PipelineMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionStage>,
    pub experts: Vec<ExpertCall>,
    pub supplementary: SupplementaryInfo,
    pub synthesis: SynthesisStage,
    pub answer: FinalAnswer,
    pub verdict: Verdict,
    pub config_digest: String,
    pub config: RunConfig,
    pub total_wall_ms: u64,
}

impl QueryTrace {
    /// Content digest over everything except wall-clock timings and response provenance.
    pub fn digest(&self) -> String {
        let mut t = self.clone();
        t.total_wall_ms = 0;
        if let Some(d) = &mut t.decision {
            d.timing = CallTiming::default();
            d.latency_ms = 0;
        }
        for e in &mut t.experts {
            e.timing = CallTiming::default();
            e.latency_ms = 0;
        }
        t.synthesis.timing = CallTiming::default();
        t.synthesis.latency_ms = 0;
        let bytes = serde_json::to_vec(&t).expect("trace serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Backend-reported latency summed over every call of the query.
    pub fn backend_latency_ms(&self) -> u64 {
        self.decision.as_ref().map_or(0, |d| d.latency_ms)
            + self.experts.iter().map(|e| e.latency_ms).sum::<u64>()
            + self.synthesis.latency_ms
    }

    /// Number of backend calls actually issued.
    pub fn call_count(&self) -> usize {
        self.decision.as_ref().map_or(0, |d| d.responses.len())
            + self.experts.iter().filter(|e| e.issued()).count()
            + 1
    }
}
