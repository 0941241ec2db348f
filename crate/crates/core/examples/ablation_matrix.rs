//! Enable-only / disable-only ablation over a scripted scenario in which
//! only the TextIntel Extractor's sub-answer carries the deciding fact.
//!
//! cargo run --example ablation_matrix

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use cantor::backends::{BackendSet, MockBackend};
use cantor::domain::{CategoryTags, GoldAnswer, Modality, QueryRecord, RunConfig, VisualInput};
use cantor::evaluation::ablation_matrix;
use cantor::prompting::PromptSet;

const DECISION: &str = "\
Principle Analysis:
The printed label decides the answer.

Module Selection & Reason:
- TextIntel Extractor: reads the label.
- VisionIQ Analyst: describes the scene.

Task Allocation:
[TextIntel Extractor: What does the label say?]
[VisionIQ Analyst: Describe the scene.]
";

fn records() -> Vec<QueryRecord> {
    (0..10)
        .map(|i| {
            let gold = i % 2;
            QueryRecord {
                id: format!("{i}"),
                question: format!("Which box is labelled correctly (item {i})?"),
                context: String::new(),
                options: vec!["Box A".into(), "Box B".into()],
                gold: GoldAnswer::Choice { index: gold },
                visual: VisualInput::DetailedCaption {
                    caption: format!("Two boxes. The label reads {}.", ["A", "B"][gold]),
                },
                captions: Default::default(),
                categories: CategoryTags::new().with("subject", if i < 5 { "NAT" } else { "SOC" }),
                split: "test".into(),
            }
        })
        .collect()
}

/// Decision always asks TextIntel and VisionIQ; only TextIntel's answer
/// reveals the label, and synthesis answers correctly only when it sees it.
pub fn scenario_backends() -> BackendSet {
    let expert = MockBackend::new("expert").with_modality(Modality::Text).with_responder(|req| {
        let text = &req.text;
        Some(Ok(if text.starts_with("[TextIntel Extractor:") {
            let caption = text.split("Image caption: ").nth(1).unwrap_or("");
            caption.split(". ").last().unwrap_or("").trim().to_string()
        } else {
            "Two boxes side by side.".to_string()
        }))
    });
    let synthesis = MockBackend::new("synthesis").with_responder(|req| {
        let hint = req
            .text
            .lines()
            .filter(|l| l.starts_with("Answer ") && l.contains("label reads "))
            .find_map(|l| l.trim_end_matches('.').chars().last());
        Some(Ok(format!("Answer: ({})", hint.unwrap_or('A'))))
    });
    BackendSet {
        decision: Arc::new(MockBackend::new("decision").with_default(DECISION)),
        expert: Arc::new(expert),
        synthesis: Arc::new(synthesis),
    }
}

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let mut config = RunConfig::default();
    config.expert_backend.modality = Modality::Text;
    config.parallelism = 4;
    let cancel = AtomicBool::new(false);
    let result = ablation_matrix(&records(), &config, &PromptSet::builtin(), &scenario_backends(), &cancel, &|_, _| {})?;
    let mut out = result.matrix.to_markdown();
    out.push_str(&format!("\ncomplete: {}\n", result.matrix.is_complete()));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
