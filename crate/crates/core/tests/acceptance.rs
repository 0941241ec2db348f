//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Environment knobs:
//! - `CANTOR_SCIENCEQA_PROBLEMS`, `CANTOR_SCIENCEQA_IMAGES`, `CANTOR_MATHVISTA_TESTMINI`:
//!   upstream dataset files for criterion 9 (synthetic fixtures are generated otherwise).
//! - `CANTOR_API_KEY_GEMINI` / `CANTOR_API_KEY_OPENAI` plus `CANTOR_LIVE_CONFIG` and
//!   `CANTOR_LIVE_RECORDS`: enable the live smoke run of criterion 11.
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use cantor::answer_extract::{compare_answer, extract_answer, Verdict};
use cantor::backends::{BackendSet, Transcript, TranscriptWriter};
use cantor::datasets::{check_scienceqa_tags, import_mathvista, import_scienceqa};
use cantor::decision_parser::{parse_decision, serialize_decision, ParseOptions};
use cantor::domain::{
    DisabledModulePolicy, ExpertModuleId, Modality, QueryRecord, RunConfig, SubTask, SupplementaryInfo, VisualInput,
};
use cantor::evaluation::{ablation_matrix, render_csv, render_json, render_markdown, score_run, RunReport};
use cantor::pipeline::{assemble_supplementary, run_batch, AblationMode, BatchOutcome, Pipeline, QueryTrace};
use cantor::prompting::{build_expert_prompt, build_synthesis_prompt, PromptSet, SYNTHESIS_INSTRUCTION_RESOURCE};

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Outcome = Result<Status, String>;

fn pass(detail: impl Into<String>) -> Outcome {
    Ok(Status::Pass(detail.into()))
}

fn fail(detail: impl Into<String>) -> Outcome {
    Ok(Status::Fail(detail.into()))
}

fn all_modules() -> BTreeSet<ExpertModuleId> {
    ExpertModuleId::ALL.into_iter().collect()
}

/// Draws `n` values from a strategy with a fixed seed.
fn sample<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut r = TestRunner::deterministic();
    (0..n).map(|_| strategy.new_tree(&mut r).expect("strategy generates").current()).collect()
}

fn c1_round_trip() -> Outcome {
    let decisions = sample(common::arb_decision(), 1000);
    let start = Instant::now();
    let mut mismatches = 0;
    for d in &decisions {
        let text = serialize_decision(d);
        match parse_decision(&text, &all_modules(), DisabledModulePolicy::Error, ParseOptions::default()) {
            Ok((back, _)) if back.same_structure(d) => {}
            _ => mismatches += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("1000 decisions, {mismatches} mismatches, {secs:.2}s");
    if mismatches == 0 && secs < 5.0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

/// Arbitrary strings, printable strings, and shuffled decision-like fragments.
fn fuzz_inputs() -> impl Strategy<Value = String> {
    let fragment = prop_oneof![
        Just("Principle Analysis:".to_string()),
        Just("## Module Selection & Reason".to_string()),
        Just("3. Task Allocation:".to_string()),
        Just("[VisionIQ Analyst: what?]".to_string()),
        Just("[Unknown Thing: x]".to_string()),
        Just("ChartSense Expert: read the bars".to_string()),
        Just("[".to_string()),
        Just("]:".to_string()),
        Just("\u{feff}\u{200b}".to_string()),
        "\\PC{0,30}",
    ];
    prop_oneof![
        any::<String>(),
        "\\PC*",
        prop::collection::vec(fragment, 0..12).prop_map(|v| v.join("\n")),
    ]
}

fn c2_parser_totality() -> Outcome {
    let inputs = sample(fuzz_inputs(), 10_000);
    let mut panics = 0;
    let (mut ok, mut errs) = (0, 0);
    for raw in &inputs {
        for policy in [DisabledModulePolicy::Error, DisabledModulePolicy::Skip, DisabledModulePolicy::FallbackToVisionIq] {
            let res = catch_unwind(AssertUnwindSafe(|| {
                parse_decision(raw, &all_modules(), policy, ParseOptions::default()).is_ok()
            }));
            match res {
                Ok(true) => ok += 1,
                Ok(false) => errs += 1,
                Err(_) => panics += 1,
            }
        }
    }
    let detail = format!("10000 inputs x 3 policies: {ok} decisions, {errs} typed errors, {panics} panics");
    if panics == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn c3_prompt_goldens() -> Outcome {
    let mut bad = Vec::new();
    for (name, text) in common::golden_cases() {
        let want = std::fs::read_to_string(common::goldens_dir().join(name)).map_err(|e| format!("{name}: {e}"))?;
        if text != want || !text.contains(common::PREAMBLE) || !text.contains(common::ALLOCATION) {
            bad.push(name);
        }
    }
    if bad.is_empty() {
        pass("3 configurations byte-match their goldens")
    } else {
        fail(format!("mismatch: {}", bad.join(", ")))
    }
}

fn c4_expert_prompts() -> Outcome {
    use ExpertModuleId::*;
    let cases = [
        (ChartSenseExpert, "Extract the values of all the bars from the chart.", "[ChartSense Expert: Extract the values of all the bars from the chart.]"),
        (VisionIQAnalyst, "What is the total number of people in the image?", "[VisionIQ Analyst: What is the total number of people in the image?]"),
        (ObjectQuantLocator, "Which sample has more particles?", "[ObjectQuant Locator: Which sample has more particles?]"),
    ];
    let wrong: Vec<_> = cases
        .iter()
        .filter(|(m, i, want)| build_expert_prompt(&SubTask::new(*m, *i, 0)) != *want)
        .map(|(m, _, _)| m.display_name())
        .collect();
    if wrong.is_empty() {
        pass("3/3 byte-exact")
    } else {
        fail(format!("wrong: {wrong:?}"))
    }
}

fn c5_synthesis_prompt() -> Outcome {
    let prompts = PromptSet::builtin();
    // the stored file opens with `#` comment lines; the instruction is everything after them
    let body: Vec<&str> = SYNTHESIS_INSTRUCTION_RESOURCE.lines().skip_while(|l| l.starts_with('#')).collect();
    let body = body.join("\n").trim().to_string();
    if body.is_empty() || prompts.synthesis_instruction != body {
        return fail("builtin synthesis instruction differs from the stored resource");
    }
    let record = common::choice("s", "Which is larger?", &["left", "right"], 0, "NAT");
    let config = RunConfig::default();
    let lists = sample(common::arb_sub_answers(), 100);
    let mut failures = 0;
    for pairs in lists {
        let ok: Vec<String> = pairs.iter().filter(|p| p.is_ok()).map(|p| build_expert_prompt(&p.sub_task)).collect();
        let supp: SupplementaryInfo = assemble_supplementary(pairs);
        let (_, rendered) = build_synthesis_prompt(&record, &supp, &config, &prompts).map_err(|e| e.to_string())?;
        let text = rendered.text;
        let mut last = 0;
        let mut monotone = text.starts_with(&body);
        for (i, p) in ok.iter().enumerate() {
            let needle = format!("Sub-task {}: {p}", i + 1);
            match text[last..].find(&needle) {
                Some(at) => last += at + needle.len(),
                None => monotone = false,
            }
        }
        if !monotone {
            failures += 1;
        }
    }
    if failures == 0 {
        pass("instruction embedded byte-equal; 100/100 pair lists in sub-task order")
    } else {
        fail(format!("{failures}/100 pair lists out of order or instruction missing"))
    }
}

fn c6_ablation() -> Outcome {
    let records = common::label_records(50);
    let expert = common::label_expert();
    let backends = common::label_backends(&expert);
    let mut config = RunConfig::default();
    config.expert_backend.modality = Modality::Text;
    config.parallelism = 8;
    let cancel = AtomicBool::new(false);
    let run = ablation_matrix(&records, &config, &PromptSet::builtin(), &backends, &cancel, &|_, _| {})
        .map_err(|e| e.to_string())?;
    if let Some(reason) = &run.aborted {
        return fail(format!("aborted: {reason}"));
    }
    let mut violations = 0;
    let mut issued = 0;
    for mode_run in &run.runs {
        for t in mode_run.outcome.traces() {
            for e in t.experts.iter().filter(|e| e.issued()) {
                issued += 1;
                if !mode_run.config.enabled_modules.contains(&e.answer.sub_task.module) {
                    violations += 1;
                }
            }
        }
        let queries = mode_run.outcome.traces().count();
        if queries != 50 {
            return fail(format!("mode {} ran {queries} queries", mode_run.mode.key()));
        }
    }
    // every expert request the backend saw must name a module the trace audit allowed
    let seen = expert.requests().len();
    let m = &run.matrix;
    let (Some(base), Some(full)) = (m.baseline, m.full) else {
        return fail("matrix missing reference rows");
    };
    let shape = m.rows.len() == 4 && m.is_complete();
    let exact = m.rows.iter().all(|r| {
        let e = r.enable_only.unwrap();
        let d = r.disable_only.unwrap();
        e.delta == e.score.accuracy - base.accuracy
            && d.delta == d.score.accuracy - full.accuracy
            && e.score.accuracy == e.score.correct as f64 / e.score.count as f64
    });
    let text_intel = &m.rows[0];
    let expected = text_intel.module == ExpertModuleId::TextIntelExtractor
        && text_intel.enable_only.unwrap().delta == 0.5
        && text_intel.disable_only.unwrap().delta == -0.5;
    let detail = format!(
        "10 modes x 50 queries, {issued} expert calls ({seen} seen by backend), {violations} outside enabled set; baseline {:.2}, full {:.2}, TextIntel enable {:+.2} disable {:+.2}",
        base.accuracy,
        full.accuracy,
        text_intel.enable_only.unwrap().delta,
        text_intel.disable_only.unwrap().delta
    );
    if violations == 0 && issued == seen && shape && exact && expected && run.runs.len() == AblationMode::all().len() {
        pass(detail)
    } else {
        fail(format!("{detail}; shape {shape}, exact {exact}, expected values {expected}"))
    }
}

fn report_bytes(outcome: &BatchOutcome, records: &[QueryRecord]) -> Result<Vec<String>, String> {
    let traces: Vec<QueryTrace> = outcome.traces().cloned().collect();
    let report: RunReport = score_run("determinism", &traces, records).map_err(|e| e.to_string())?;
    Ok(vec![render_json(&report), render_markdown(&report), render_csv(&report)])
}

fn c7_determinism() -> Outcome {
    let records = common::label_records(20);
    let mut config = RunConfig::default();
    config.expert_backend.modality = Modality::Text;
    config.parallelism = 6;
    let prompts = PromptSet::builtin();
    let cancel = AtomicBool::new(false);
    let digests = |o: &BatchOutcome| o.traces().map(QueryTrace::digest).collect::<Vec<_>>();

    let live_expert = common::label_expert();
    let live = common::label_backends(&live_expert);
    let p = Pipeline::new(config.clone(), prompts.clone(), live.clone()).map_err(|e| e.to_string())?;
    let a = run_batch(&p, &records, &cancel, &|_| {});
    let b = run_batch(&p, &records, &cancel, &|_| {});
    if !a.is_complete() || !b.is_complete() {
        return fail("mock run did not complete");
    }
    let same_digests = digests(&a) == digests(&b);
    let same_reports = report_bytes(&a, &records)? == report_bytes(&b, &records)?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("transcript.jsonl");
    let writer = Arc::new(TranscriptWriter::create(&path).map_err(|e| e.to_string())?);
    let recording = Pipeline::new(config.clone(), prompts.clone(), live.recording(writer.clone())).map_err(|e| e.to_string())?;
    let recorded = run_batch(&recording, &records, &cancel, &|_| {});
    writer.finish().map_err(|e| e.to_string())?;
    let transcript = Arc::new(Transcript::load(&path).map_err(|e| e.to_string())?);
    let calls_before = live_expert.call_count();
    let replay = Pipeline::new(config.clone(), prompts, BackendSet::replaying(transcript, &config)).map_err(|e| e.to_string())?;
    let replayed = run_batch(&replay, &records, &cancel, &|_| {});
    let live_calls = live_expert.call_count() - calls_before;
    let replay_same = replayed.is_complete() && report_bytes(&recorded, &records)? == report_bytes(&replayed, &records)?;

    let detail = format!(
        "digests identical {same_digests}, reports identical {same_reports}, replay report identical {replay_same}, live calls during replay {live_calls}"
    );
    if same_digests && same_reports && replay_same && live_calls == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn c8_extraction() -> Outcome {
    use common::ChoiceOutcome;
    let corpus = common::load_choice_corpus();
    let mut exact = 0;
    let mut silent_adversarial = 0;
    let mut silent_total = 0;
    for item in &corpus {
        match common::check_choice(item) {
            ChoiceOutcome::Exact => exact += 1,
            ChoiceOutcome::Missed(_) => {}
            ChoiceOutcome::SilentWrong(_) => {
                silent_total += 1;
                if item.category == "adversarial" {
                    silent_adversarial += 1;
                }
            }
        }
    }
    let free = common::free_form_corpus();
    let free_ok = free
        .iter()
        .enumerate()
        .filter(|(i, c)| {
            let mut r = common::choice(&format!("f{i}"), "q", &[], 0, "NAT");
            r.gold = c.gold.clone();
            compare_answer(&extract_answer(&c.raw, &r, false), &c.gold) == Verdict::Correct
        })
        .count();
    let rate = exact as f64 / corpus.len() as f64;
    let detail = format!(
        "choice {exact}/{} ({:.1}%), free-form {free_ok}/{}, silent wrong {silent_total} ({silent_adversarial} adversarial)",
        corpus.len(),
        rate * 100.0,
        free.len()
    );
    if rate >= 0.95 && free_ok == free.len() && free.len() == 20 && silent_adversarial == 0 {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from)
}

fn c9_imports() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (sqa, sqa_images, sqa_source) = match env_path("CANTOR_SCIENCEQA_PROBLEMS") {
        Some(p) => (p, env_path("CANTOR_SCIENCEQA_IMAGES"), "upstream"),
        None => {
            let (p, images) = common::synthetic_scienceqa(dir.path(), 4241, 2017);
            (p, Some(images), "synthetic")
        }
    };
    let mv = match env_path("CANTOR_MATHVISTA_TESTMINI") {
        Some(p) => (p, "upstream"),
        None => (common::synthetic_mathvista(&dir.path().join("mathvista"), 1000), "synthetic"),
    };
    let sqa_out = import_scienceqa(&sqa, "test", sqa_images.as_deref()).map_err(|e| e.to_string())?;
    let mv_out = import_mathvista(&mv.0, None).map_err(|e| e.to_string())?;

    let img_tagged = sqa_out.records.iter().filter(|r| r.categories.has("context", "IMG")).count();
    let img_loaded = sqa_out.records.iter().filter(|r| matches!(r.visual, VisualInput::Image { .. })).count();
    let mut tag_errors: Vec<String> = sqa_out
        .records
        .iter()
        .filter_map(|r| check_scienceqa_tags(r, r.categories.has("context", "IMG")).err())
        .collect();
    tag_errors.extend(mv_out.records.iter().filter_map(|r| mathvista_tags_ok(r).err()));
    let detail = format!(
        "ScienceQA ({sqa_source}) {} records, {img_tagged} image-bearing ({img_loaded} images on disk); MathVista ({}) {} records; {} tag violations",
        sqa_out.records.len(),
        mv.1,
        mv_out.records.len(),
        tag_errors.len()
    );
    let images_ok = sqa_images.is_none() || img_loaded == img_tagged;
    if sqa_out.records.len() == 4241 && img_tagged == 2017 && images_ok && mv_out.records.len() == 1000 && tag_errors.is_empty() {
        pass(detail)
    } else {
        fail(format!("{detail}; first violation: {:?}", tag_errors.first()))
    }
}

fn mathvista_tags_ok(r: &QueryRecord) -> Result<(), String> {
    if r.categories.values("task").len() != 1 {
        return Err(format!("{}: expected one task tag", r.id));
    }
    if r.categories.values("skill").is_empty() {
        return Err(format!("{}: no skill tag", r.id));
    }
    Ok(())
}

fn c10_scoring_algebra() -> Outcome {
    let cases = sample(common::arb_outcomes(), 300);
    let mut bad = 0;
    for outcomes in cases {
        let (records, traces): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
        let report = score_run("algebra", &traces, &records).map_err(|e| e.to_string())?;
        let sums_ok = ["subject", "grade"].iter().all(|fam| {
            let sum: f64 = report.tags[*fam].values().map(|s| s.count as f64 * s.accuracy).sum();
            (sum - report.overall.correct as f64).abs() < 1e-9
        });
        let props_ok = report.module_usage.by_tag.values().flat_map(|g| g.values()).all(|g| {
            let total: f64 = g.proportions.values().sum();
            if g.zero_denominator {
                total == 0.0
            } else {
                (total - 1.0).abs() <= 1e-9
            }
        });
        if !(sums_ok && props_ok) {
            bad += 1;
        }
    }
    if bad == 0 {
        pass("300 randomized runs: tag sums equal total correct; usage proportions sum to 1")
    } else {
        fail(format!("{bad}/300 randomized runs violate the algebra"))
    }
}

fn c11_live_smoke() -> Outcome {
    let keys = ["CANTOR_API_KEY_GEMINI", "CANTOR_API_KEY_OPENAI"];
    if !keys.iter().any(|k| std::env::var_os(k).is_some()) {
        return Ok(Status::Skip("no CANTOR_API_KEY_GEMINI or CANTOR_API_KEY_OPENAI in the environment".into()));
    }
    let (Some(config_path), Some(records_path)) = (env_path("CANTOR_LIVE_CONFIG"), env_path("CANTOR_LIVE_RECORDS")) else {
        return Ok(Status::Skip("API key present but CANTOR_LIVE_CONFIG or CANTOR_LIVE_RECORDS unset".into()));
    };
    live_smoke(&config_path, &records_path)
}

fn live_smoke(config_path: &Path, records_path: &Path) -> Outcome {
    let config = RunConfig::load(Some(config_path), &[]).map_err(|e| e.to_string())?;
    let records: Vec<QueryRecord> = cantor::datasets::load_canonical(records_path)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|r| r.categories.has("context", "IMG") && r.image().is_some())
        .take(20)
        .collect();
    if records.len() < 20 {
        return fail(format!("only {} ScienceQA-IMG records with images in {}", records.len(), records_path.display()));
    }
    let backends = BackendSet::from_config(&config).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(config, PromptSet::builtin(), backends).map_err(|e| e.to_string())?;
    let outcome = run_batch(&pipeline, &records, &AtomicBool::new(false), &|_| {});
    let traces: Vec<QueryTrace> = outcome.traces().cloned().collect();
    let scored = traces.iter().filter(|t| t.verdict != Verdict::Unscored).count();
    let done: Vec<QueryRecord> =
        records.iter().filter(|r| traces.iter().any(|t| t.record_id == r.id)).cloned().collect();
    let report = score_run("live-smoke", &traces, &done).map_err(|e| e.to_string())?;
    let json = render_json(&report);
    let well_formed = serde_json::from_str::<RunReport>(&json).map(|r| r == report).unwrap_or(false);
    let detail = format!("{} completed, {scored} scored, report well-formed {well_formed}", traces.len());
    if scored >= 18 && well_formed {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn main() -> ExitCode {
    // the harness passes libtest flags; `--list` must print nothing runnable
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("decision parser round-trip", c1_round_trip),
        ("parser totality fuzz", c2_parser_totality),
        ("decision prompt goldens", c3_prompt_goldens),
        ("expert prompt format", c4_expert_prompts),
        ("synthesis prompt canon", c5_synthesis_prompt),
        ("ablation soundness", c6_ablation),
        ("end-to-end determinism", c7_determinism),
        ("answer extraction", c8_extraction),
        ("dataset import counts", c9_imports),
        ("scoring algebra", c10_scoring_algebra),
        ("live-run smoke", c11_live_smoke),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let status = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match status {
            Ok(Status::Pass(d)) => ("PASS", d),
            Ok(Status::Skip(d)) => ("SKIP", d),
            Ok(Status::Fail(d)) => {
                failed += 1;
                ("FAIL", d)
            }
            Err(e) => {
                failed += 1;
                ("FAIL", format!("error: {e}"))
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
