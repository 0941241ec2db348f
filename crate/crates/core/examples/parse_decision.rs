//! Parses a loosely formatted decision reply, prints the recovered
//! structure and parser warnings, and re-serializes it in canonical form.
//!
//! cargo run --example parse_decision

use std::collections::BTreeSet;

use cantor::decision_parser::{parse_decision, serialize_decision, ParseOptions};
use cantor::domain::{DisabledModulePolicy, ExpertModuleId};

const REPLY: &str = "\
**Principle analysis**: The question asks which beaker is more concentrated, so the particles must be counted.

Module selection and reason:
1. ObjectQuant Locator - counts the particles in each beaker
2. VisionIQ analyst: checks that the volumes match

Task allocation:
- ObjectQuant Locator: Count the green particles in Solution A and in Solution B.
[VisionIQ Analyst: Are the two solvent volumes equal?]
[ChartSense Expert: Read the chart.]
";

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    // ChartSense is disabled, so its sub-task is dropped with a warning.
    let enabled: BTreeSet<_> = ExpertModuleId::ALL
        .into_iter()
        .filter(|m| *m != ExpertModuleId::ChartSenseExpert)
        .collect();
    let (decision, diagnostics) =
        parse_decision(REPLY, &enabled, DisabledModulePolicy::Skip, ParseOptions { strict: false })?;

    let mut out = format!("principle analysis: {}\n", decision.principle_analysis);
    for t in &decision.sub_tasks {
        out.push_str(&format!("sub-task {}: {} -> {}\n", t.ordinal, t.module.display_name(), t.instruction));
    }
    for w in &diagnostics.warnings {
        out.push_str(&format!("warning {:?}: {}\n", w.code, w.message));
    }
    out.push_str("\ncanonical form:\n");
    out.push_str(&serialize_decision(&decision));

    // The strict parser rejects the same text.
    let strict = parse_decision(REPLY, &enabled, DisabledModulePolicy::Skip, ParseOptions { strict: true });
    out.push_str(&format!("\nstrict parse: {}\n", strict.map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string())));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
