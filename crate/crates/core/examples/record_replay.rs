//! Records a mock evaluation to a transcript, replays it with no live
//! backend, and checks that traces and reports come out identical.
//!
//! cargo run --example record_replay

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use cantor::backends::{BackendSet, MockBackend, Transcript, TranscriptWriter};
use cantor::domain::{CategoryTags, GoldAnswer, QueryRecord, RunConfig, VisualInput};
use cantor::evaluation::{render_json, score_run};
use cantor::pipeline::{run_batch, Pipeline, QueryTrace};
use cantor::prompting::PromptSet;

const DECISION: &str = "Principle Analysis:\nRead the picture.\n\nModule Selection & Reason:\n- VisionIQ Analyst: looks.\n\nTask Allocation:\n[VisionIQ Analyst: What is shown?]\n";

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let records: Vec<QueryRecord> = (0..6)
        .map(|i| QueryRecord {
            id: format!("q{i}"),
            question: format!("Which option is right for case {i}?"),
            context: String::new(),
            options: vec!["first".into(), "second".into()],
            gold: GoldAnswer::Choice { index: i % 2 },
            visual: VisualInput::RoughCaption { caption: format!("Picture {i}.") },
            captions: Default::default(),
            categories: CategoryTags::new().with("subject", "SOC"),
            split: "test".into(),
        })
        .collect();
    let config = RunConfig { parallelism: 3, ..RunConfig::default() };
    let prompts = PromptSet::builtin();
    let cancel = AtomicBool::new(false);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("transcript.jsonl");

    let live = MockBackend::new("live")
        .with_responder(|req| req.text.contains("advanced question-answering agent").then(|| Ok(DECISION.to_string())))
        .with_responder(|req| req.text.starts_with('[').then(|| Ok("A small picture.".to_string())))
        .with_default("Answer: (A)");
    let writer = Arc::new(TranscriptWriter::create(&path)?);
    let recording = BackendSet::uniform(Arc::new(live.clone())).recording(writer.clone());
    let pipeline = Pipeline::new(config.clone(), prompts.clone(), recording)?;
    let first = run_batch(&pipeline, &records, &cancel, &|_| {});
    let entries = writer.finish()?;

    let transcript = Arc::new(Transcript::load(&path)?);
    let replay = Pipeline::new(config.clone(), prompts, BackendSet::replaying(transcript, &config))?;
    let calls_before = live.call_count();
    let second = run_batch(&replay, &records, &cancel, &|_| {});

    let digests = |o: &cantor::pipeline::BatchOutcome| o.traces().map(QueryTrace::digest).collect::<Vec<_>>();
    let report = |o: &cantor::pipeline::BatchOutcome| -> Result<String, Box<dyn std::error::Error>> {
        let traces: Vec<_> = o.traces().cloned().collect();
        Ok(render_json(&score_run("demo", &traces, &records)?))
    };
    let mut out = format!("recorded {entries} distinct calls ({calls_before} live calls made)\n");
    out.push_str(&format!("live calls during replay: {}\n", live.call_count() - calls_before));
    out.push_str(&format!("trace digests identical: {}\n", digests(&first) == digests(&second)));
    out.push_str(&format!("reports byte-identical: {}\n", report(&first)? == report(&second)?));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
