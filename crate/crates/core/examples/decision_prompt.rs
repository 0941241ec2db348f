//! Renders the decision-generation prompt for one ScienceQA-style record,
//! first with all four expert modules and then with ChartSense disabled.
//!
//! cargo run --example decision_prompt

use cantor::domain::{CategoryTags, ExpertModuleId, GoldAnswer, QueryRecord, RunConfig, VisualInput};
use cantor::prompting::{build_decision_prompt, select_in_context_examples, PromptSet};

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let record = QueryRecord {
        id: "demo".into(),
        question: "Which solution has a higher concentration of green particles?".into(),
        context: "The diagram below is a model of two solutions.".into(),
        options: vec!["Solution A".into(), "Solution B".into(), "neither; their concentrations are the same".into()],
        gold: GoldAnswer::Choice { index: 0 },
        visual: VisualInput::DetailedCaption {
            caption: "Two beakers of equal volume; A holds five green particles, B holds three.".into(),
        },
        captions: Default::default(),
        categories: CategoryTags::new().with("subject", "NAT"),
        split: "test".into(),
    };
    let prompts = PromptSet::builtin();
    let mut config = RunConfig::default();
    let examples = select_in_context_examples(&prompts, config.dataset, Some(1))?;

    let (_, full) = build_decision_prompt(&record, &config, &prompts, &examples)?;
    config.enabled_modules.remove(&ExpertModuleId::ChartSenseExpert);
    let (spec, reduced) = build_decision_prompt(&record, &config, &prompts, &examples)?;

    let mut out = String::new();
    out.push_str(&full.text);
    out.push_str(&format!(
        "\n--- with ChartSense disabled: {} module descriptions, {} bytes (was {})\n",
        spec.module_descriptions.len(),
        reduced.text.len(),
        full.text.len()
    ));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
