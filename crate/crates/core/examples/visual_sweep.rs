//! Baseline accuracy at each visual-information level. The scripted model
//! only answers correctly when it sees the detailed caption; records without
//! the requested caption or image are skipped and counted.
//!
//! cargo run --example visual_sweep

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use cantor::backends::{BackendSet, MockBackend};
use cantor::domain::{Captions, CategoryTags, GoldAnswer, QueryRecord, RunConfig, VisualInput, VisualLevel};
use cantor::evaluation::visual_level_sweep;
use cantor::prompting::PromptSet;

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let records: Vec<QueryRecord> = (0..8)
        .map(|i| {
            let gold = (i % 2) as usize;
            let letter = ["A", "B"][gold];
            QueryRecord {
                id: format!("{i}"),
                question: format!("Which side is the marked item on (case {i})?"),
                context: String::new(),
                options: vec!["left".into(), "right".into()],
                gold: GoldAnswer::Choice { index: gold },
                visual: VisualInput::None,
                captions: Captions {
                    rough: Some("A photo of a table.".into()),
                    // Two records have no detailed caption.
                    detailed: (i < 6).then(|| format!("A table; the marked item is option {letter}.")),
                },
                categories: CategoryTags::new().with("subject", "NAT"),
                split: "test".into(),
            }
        })
        .collect();
    let model = MockBackend::new("model").with_responder(|req| {
        let letter = req.text.split("the marked item is option ").nth(1).and_then(|s| s.chars().next());
        Some(Ok(format!("Answer: ({})", letter.unwrap_or('A'))))
    });
    let backends = BackendSet::uniform(Arc::new(model));
    let cancel = AtomicBool::new(false);
    let (table, _) = visual_level_sweep(
        &records,
        &VisualLevel::ALL,
        &RunConfig::default(),
        &PromptSet::builtin(),
        &backends,
        &cancel,
        &|_, _| {},
    )?;
    Ok(table.to_markdown())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
