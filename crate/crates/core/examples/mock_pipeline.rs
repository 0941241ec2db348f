//! Runs the full decision, expert, and synthesis pipeline against scripted
//! mock backends and prints the stage-by-stage trace.
//!
//! cargo run --example mock_pipeline

use std::sync::Arc;

use cantor::backends::{BackendSet, MockBackend, MockRule};
use cantor::cli::format_trace;
use cantor::domain::{CategoryTags, GoldAnswer, QueryRecord, RunConfig, VisualInput};
use cantor::pipeline::Pipeline;
use cantor::prompting::PromptSet;

const DECISION: &str = "\
Principle Analysis:
Counting the particles in each beaker answers the question.

Module Selection & Reason:
- ObjectQuant Locator: counts objects.
- VisionIQ Analyst: compares the beakers.

Task Allocation:
[ObjectQuant Locator: How many green particles are in each solution?]
[VisionIQ Analyst: Are the two solvent volumes the same?]
";

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let record = QueryRecord {
        id: "particles".into(),
        question: "Which solution has a higher concentration of green particles?".into(),
        context: String::new(),
        options: vec!["Solution A".into(), "Solution B".into(), "neither; their concentrations are the same".into()],
        gold: GoldAnswer::Choice { index: 0 },
        visual: VisualInput::DetailedCaption { caption: "Two beakers with green particles.".into() },
        captions: Default::default(),
        categories: CategoryTags::new().with("subject", "NAT"),
        split: "test".into(),
    };
    let expert = MockBackend::new("expert")
        .with_rule(MockRule::on_contains("How many", "Solution A has 5 particles and Solution B has 3.").latency_ms(120))
        .with_rule(MockRule::on_contains("volumes", "Both hold 25 mL of solvent.").latency_ms(80));
    let backends = BackendSet {
        decision: Arc::new(MockBackend::new("decision").with_default(DECISION)),
        expert: Arc::new(expert.clone()),
        synthesis: Arc::new(MockBackend::new("synthesis").with_default(
            "Equal volumes, and A has more particles, so A is more concentrated.\nAnswer: The answer is (A).",
        )),
    };
    let config = RunConfig { parallelism: 2, ..RunConfig::default() };
    let pipeline = Pipeline::new(config, PromptSet::builtin(), backends)?;
    let trace = pipeline.run_query(&record)?;

    let mut out = format_trace(&trace);
    out.push_str(&format!("\nexpert calls issued: {}\n", expert.call_count()));
    out.push_str(&format!("supplementary block sent to synthesis:\n{}\n", trace.supplementary.rendered));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
