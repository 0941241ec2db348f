//! Rendered decision prompts compared byte-for-byte against checked-in files.
//! Regenerate with `UPDATE_GOLDENS=1 cargo test --test prompt_goldens`.
mod common;

use cantor::domain::ExpertModuleId;
use cantor::prompting::build_expert_prompt;
use common::{golden_cases, PREAMBLE, ALLOCATION};

#[test]
fn decision_prompts_match_goldens() {
    let dir = common::goldens_dir();
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    for (name, text) in golden_cases() {
        assert!(text.contains(PREAMBLE), "{name}");
        assert!(text.contains(ALLOCATION), "{name}");
        let path = dir.join(name);
        if update {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {name}"));
        assert_eq!(text, want, "{name} drifted from its golden file");
    }
}

#[test]
fn three_module_prompt_omits_chartsense() {
    let cases = golden_cases();
    assert!(cases[0].1.contains("ChartSense Expert:"));
    assert!(!cases[1].1.contains("ChartSense Expert:"));
}

#[test]
fn expert_prompts_use_bracketed_form() {
    use cantor::domain::SubTask;
    use ExpertModuleId::*;
    let cases = [
        (ChartSenseExpert, "Extract the values of all the bars from the chart.", "[ChartSense Expert: Extract the values of all the bars from the chart.]"),
        (VisionIQAnalyst, "What is the total number of people in the image?", "[VisionIQ Analyst: What is the total number of people in the image?]"),
        (ObjectQuantLocator, "Which sample has more particles?", "[ObjectQuant Locator: Which sample has more particles?]"),
    ];
    for (m, instr, want) in cases {
        assert_eq!(build_expert_prompt(&SubTask::new(m, instr, 0)), want);
    }
}
