//! Runs every example's `run()` and checks its headline output.

#[path = "../examples/ablation_matrix.rs"]
#[allow(dead_code)]
mod ablation_matrix;
#[path = "../examples/answer_extraction.rs"]
#[allow(dead_code)]
mod answer_extraction;
#[path = "../examples/decision_prompt.rs"]
#[allow(dead_code)]
mod decision_prompt;
#[path = "../examples/import_scienceqa.rs"]
#[allow(dead_code)]
mod import_scienceqa;
#[path = "../examples/mock_pipeline.rs"]
#[allow(dead_code)]
mod mock_pipeline;
#[path = "../examples/parse_decision.rs"]
#[allow(dead_code)]
mod parse_decision;
#[path = "../examples/record_replay.rs"]
#[allow(dead_code)]
mod record_replay;
#[path = "../examples/response_cache.rs"]
#[allow(dead_code)]
mod response_cache;
#[path = "../examples/visual_sweep.rs"]
#[allow(dead_code)]
mod visual_sweep;

#[test]
fn ablation_matrix_example() {
    let out = ablation_matrix::run().unwrap();
    assert!(out.contains("| TextIntel Extractor | 100.00(+50.00) | 50.00(-50.00) |"), "{out}");
    assert!(out.contains("complete: true"));
}

#[test]
fn answer_extraction_example() {
    let out = answer_extraction::run().unwrap();
    assert!(out.contains("=> Solution A via Marker"), "{out}");
    assert!(out.contains("ambiguous"));
    assert!(out.contains("Number(0.25)"));
}

#[test]
fn decision_prompt_example() {
    let out = decision_prompt::run().unwrap();
    assert!(out.contains("You are an advanced question-answering agent"), "{out}");
    assert!(out.contains("Assign specific tasks to each module as needed"));
}

#[test]
fn import_scienceqa_example() {
    let out = import_scienceqa::run().unwrap();
    assert!(out.starts_with("3 records"), "{out}");
    assert!(out.contains("subject: {\"LAN\": 1, \"NAT\": 1, \"SOC\": 1}"));
}

#[test]
fn mock_pipeline_example() {
    let out = mock_pipeline::run().unwrap();
    assert!(out.contains("verdict Correct"), "{out}");
    assert!(out.contains("== experts"));
}

#[test]
fn parse_decision_example() {
    let out = parse_decision::run().unwrap();
    assert!(out.contains("sub-task 1: VisionIQ Analyst"), "{out}");
    assert!(out.contains("DisabledModuleSkipped"));
}

#[test]
fn record_replay_example() {
    let out = record_replay::run().unwrap();
    assert!(out.contains("live calls during replay: 0"), "{out}");
    assert!(out.contains("reports byte-identical: true"));
}

#[test]
fn response_cache_example() {
    let out = response_cache::run().unwrap();
    assert!(out.contains("from Cache"), "{out}");
}

#[test]
fn visual_sweep_example() {
    let out = visual_sweep::run().unwrap();
    assert!(out.contains("| + Detailed Caption | 100.00(+50.00) | 6 | 2 |"), "{out}");
    assert!(out.contains("| + Image | - | 0 | 8 |"));
}
