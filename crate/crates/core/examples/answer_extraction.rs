//! Extracts final answers from raw model outputs: multiple choice by each
//! rule, free-form numbers and text, and the typed errors for unusable output.
//!
//! cargo run --example answer_extraction

use cantor::answer_extract::{extract_choice, extract_choice_with_rule, extract_free_form, FreeFormKind};

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let options: Vec<String> = ["Solution A", "Solution B", "neither; their concentrations are the same"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let samples = [
        "Counting gives 5 versus 3.\nAnswer: The answer is (A).",
        "A has more particles per volume.\nB",
        "The particles are denser on the left.\nSo the answer is Solution A",
        "Answer: (A)\nOn reflection, answer: (B)",
        "I cannot tell from the picture.",
        "Answer: (F)",
    ];
    let mut out = String::new();
    for raw in samples {
        let shown = raw.replace('\n', " | ");
        match extract_choice_with_rule(raw, &options, false) {
            Ok((i, rule)) => out.push_str(&format!("{shown:<70} => {} via {rule:?}\n", options[i])),
            Err(e) => out.push_str(&format!("{shown:<70} => error: {e}\n")),
        }
    }
    out.push_str(&format!(
        "strict mode on a bare final letter: {:?}\n",
        extract_choice("Reasoning.\nB", &options, true).map_err(|e| e.to_string())
    ));
    for raw in ["The total is 1,250 dollars.\nAnswer: 1,250", "Answer: 25%", "Answer: **Tuesday**."] {
        let kind = if raw.contains('%') {
            FreeFormKind::Number { percent_as_fraction: true }
        } else if raw.contains("Tuesday") {
            FreeFormKind::Text
        } else {
            FreeFormKind::Number { percent_as_fraction: false }
        };
        out.push_str(&format!("{:<45} => {:?}\n", raw.replace('\n', " | "), extract_free_form(raw, kind)?));
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
