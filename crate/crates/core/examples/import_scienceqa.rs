//! Imports a small ScienceQA-format annotation file (with one image on disk
//! and one missing) into canonical records and prints the tag breakdown.
//!
//! cargo run --example import_scienceqa

use cantor::datasets::{import_scienceqa, tag_counts, to_jsonl};

const PROBLEMS: &str = r#"{
  "10": {"question": "Which word does not rhyme?", "choices": ["bike", "hike", "stop"], "answer": 2,
         "hint": "", "image": null, "subject": "language science", "grade": "grade2", "split": "test"},
  "2": {"question": "Which animal's feet are also adapted for digging?", "choices": ["mole", "tree frog"], "answer": 0,
        "hint": "Aardvarks dig burrows.", "image": "image.png", "subject": "natural science", "grade": "grade5", "split": "test"},
  "7": {"question": "Which state is farthest west?", "choices": ["Oregon", "Maine"], "answer": 0,
        "hint": "", "image": "image.png", "subject": "social science", "grade": "grade8", "split": "test"},
  "9": {"question": "Not in this split.", "choices": ["a", "b"], "answer": 0,
        "hint": "", "image": null, "subject": "social science", "grade": "grade8", "split": "train"}
}"#;

pub fn run() -> Result<String, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let source = dir.path().join("problems.json");
    std::fs::write(&source, PROBLEMS)?;
    let image_dir = dir.path().join("images/test/2");
    std::fs::create_dir_all(&image_dir)?;
    std::fs::write(image_dir.join("image.png"), b"\x89PNG\r\n\x1a\nnot really a png")?;

    let outcome = import_scienceqa(&source, "test", Some(&dir.path().join("images")))?;
    let mut out = format!("{} records\n", outcome.records.len());
    for w in &outcome.warnings {
        out.push_str(&format!("warning {}: {}\n", w.id, w.message));
    }
    for (family, counts) in tag_counts(&outcome.records) {
        out.push_str(&format!("{family}: {counts:?}\n"));
    }
    let jsonl = to_jsonl(&outcome.records);
    out.push_str(&format!("first canonical line: {}\n", jsonl.lines().next().unwrap_or("")));
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run()?);
    Ok(())
}
