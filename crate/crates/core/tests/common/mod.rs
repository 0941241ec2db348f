//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use cantor::answer_extract::{extract_choice_with_rule, ChoiceRule, ExtractError};
use cantor::backends::{BackendSet, MockBackend};
use cantor::decision_parser::{parse_decision, ParseError, ParseOptions};
use cantor::domain::{
    CategoryTags, DisabledModulePolicy, ExpertModuleId, GoldAnswer, Modality, QueryRecord, VisualInput,
};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn choice(id: &str, question: &str, options: &[&str], gold: usize, subject: &str) -> QueryRecord {
    QueryRecord {
        id: id.into(),
        question: question.into(),
        context: String::new(),
        options: options.iter().map(|s| s.to_string()).collect(),
        gold: GoldAnswer::Choice { index: gold },
        visual: VisualInput::None,
        captions: Default::default(),
        categories: CategoryTags::new().with("subject", subject),
        split: "test".into(),
    }
}

// ---------------------------------------------------------------- choice corpus

#[derive(Debug, Deserialize)]
pub struct ChoiceItem {
    pub id: String,
    pub category: String,
    pub raw: String,
    pub options: Vec<String>,
    pub expect: ChoiceExpect,
}

#[derive(Debug, Deserialize)]
pub struct ChoiceExpect {
    pub index: Option<usize>,
    pub rule: Option<ChoiceRule>,
    pub error: Option<String>,
}

pub fn load_choice_corpus() -> Vec<ChoiceItem> {
    let text = std::fs::read_to_string(fixtures().join("extraction/choice_corpus.json")).expect("choice corpus");
    serde_json::from_str(&text).expect("choice corpus parses")
}

fn error_kind(e: &ExtractError) -> &'static str {
    match e {
        ExtractError::NoAnswerFound => "no_answer",
        ExtractError::Ambiguous { .. } => "ambiguous",
        ExtractError::OutOfRange { .. } => "out_of_range",
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum ChoiceOutcome {
    /// Expected index (and rule) or expected typed error.
    Exact,
    /// A different typed error than expected, or a typed error where an index was expected.
    Missed(String),
    /// An index that differs from the expectation: a silent wrong extraction.
    SilentWrong(String),
}

pub fn check_choice(item: &ChoiceItem) -> ChoiceOutcome {
    let got = extract_choice_with_rule(&item.raw, &item.options, false);
    match (&item.expect.index, &item.expect.error, got) {
        (Some(want), _, Ok((i, rule))) if i == *want && item.expect.rule.is_none_or(|r| r == rule) => {
            ChoiceOutcome::Exact
        }
        (Some(want), _, Ok((i, rule))) if i == *want => {
            ChoiceOutcome::Missed(format!("right index via {rule:?}, expected {:?}", item.expect.rule))
        }
        (_, _, Ok((i, rule))) => ChoiceOutcome::SilentWrong(format!("extracted {i} via {rule:?}")),
        (_, Some(kind), Err(e)) if error_kind(&e) == kind => ChoiceOutcome::Exact,
        (_, _, Err(e)) => ChoiceOutcome::Missed(format!("got error {e}")),
    }
}

// ---------------------------------------------------------------- free-form corpus

pub struct FreeFormCase {
    pub raw: String,
    pub gold: GoldAnswer,
}

/// Twenty rationale-then-answer outputs built from (value, rendering, template) triples.
pub fn free_form_corpus() -> Vec<FreeFormCase> {
    let numbers: [(f64, &str, Option<f64>); 14] = [
        (42.0, "42", None),
        (3.5, "3.5", Some(0.05)),
        (-7.0, "-7", None),
        (1250.0, "1,250", None),
        (0.25, "25%", Some(0.005)),
        (18.0, "18 cm", None),
        (1_000_000.0, "1,000,000", None),
        (2.75, "$2.75", Some(0.005)),
        (0.0, "0", None),
        (360.0, "360 degrees", None),
        (0.6, "0.6", Some(0.05)),
        (12.0, "12 apples", None),
        (1.414, "1.414", Some(0.0005)),
        (2024.0, "2024", None),
    ];
    let templates = [
        "First find each part, then add them.\nAnswer: {}",
        "Multiplying the two sides gives the area.\nThe answer is {}.",
        "Reading the chart, the bars sum as shown.\n**Answer:** {}",
        "There are 3 groups of 4 and 2 left over, so in total we get {} after step 2.\nAnswer: {}",
        "Subtract 8 from 20 and keep the sign.\nFinal answer: {}",
    ];
    let mut out = Vec::new();
    for (i, (value, shown, tol)) in numbers.iter().enumerate() {
        let raw = templates[i % templates.len()].replace("{}", shown);
        out.push(FreeFormCase { raw, gold: GoldAnswer::Number { value: *value, tolerance: *tol } });
    }
    let texts = [
        ("tuesday", "Answer: **Tuesday**."),
        ("photosynthesis", "Plants make sugar from light.\nThe answer is Photosynthesis"),
        ("north", "The needle points up the map.\nAnswer: \"north\""),
        ("blue whale", "It is the largest animal ever.\nAnswer: Blue whale!"),
        ("mercury", "Closest to the sun.\nanswer: Mercury"),
        ("oxygen", "Step 1 releases a gas.\nAnswer is: oxygen."),
    ];
    for (gold, raw) in texts {
        out.push(FreeFormCase { raw: raw.into(), gold: GoldAnswer::Text { value: gold.into() } });
    }
    out
}

// ---------------------------------------------------------------- decision fixtures

#[derive(Debug, Deserialize)]
pub struct DecisionSpec {
    pub enabled: Option<Vec<ExpertModuleId>>,
    #[serde(default)]
    pub policy: DisabledModulePolicy,
    #[serde(default)]
    pub strict: bool,
    pub expect: DecisionExpect,
}

#[derive(Debug, Deserialize)]
pub struct DecisionExpect {
    pub principle_analysis: Option<String>,
    pub sub_tasks: Option<Vec<(ExpertModuleId, String)>>,
    pub selections: Option<Vec<ExpertModuleId>>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub recovered: Option<bool>,
    pub error: Option<String>,
}

pub struct DecisionFixture {
    pub name: String,
    pub text: String,
    pub spec: DecisionSpec,
}

pub fn load_decision_fixtures() -> Vec<DecisionFixture> {
    let dir = fixtures().join("decisions");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("decision fixtures")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let sidecar = p.with_extension("json");
            let spec: DecisionSpec =
                serde_json::from_str(&std::fs::read_to_string(&sidecar).expect("sidecar")).expect("sidecar parses");
            DecisionFixture {
                name: p.file_stem().unwrap().to_string_lossy().into_owned(),
                text: std::fs::read_to_string(&p).expect("fixture text"),
                spec,
            }
        })
        .collect()
}

fn parse_error_kind(e: &ParseError) -> &'static str {
    match e {
        ParseError::EmptyInput => "empty_input",
        ParseError::NoTasksFound => "no_tasks_found",
        ParseError::UnknownModule { .. } => "unknown_module",
        ParseError::DisabledModule { .. } => "disabled_module",
    }
}

pub fn check_decision_fixture(f: &DecisionFixture) -> Result<(), String> {
    let enabled: BTreeSet<ExpertModuleId> = match &f.spec.enabled {
        Some(list) => list.iter().copied().collect(),
        None => ExpertModuleId::ALL.into_iter().collect(),
    };
    let result = parse_decision(&f.text, &enabled, f.spec.policy, ParseOptions { strict: f.spec.strict });
    let want = &f.spec.expect;
    match (result, &want.error) {
        (Err(e), Some(kind)) if parse_error_kind(&e) == kind => Ok(()),
        (Err(e), _) => Err(format!("unexpected error: {e}")),
        (Ok(_), Some(kind)) => Err(format!("expected error {kind}, parse succeeded")),
        (Ok((d, diag)), None) => {
            if let Some(p) = &want.principle_analysis {
                if &d.principle_analysis != p {
                    return Err(format!("principle analysis {:?}", d.principle_analysis));
                }
            }
            if let Some(tasks) = &want.sub_tasks {
                let got: Vec<(ExpertModuleId, String)> =
                    d.sub_tasks.iter().map(|t| (t.module, t.instruction.clone())).collect();
                if &got != tasks {
                    return Err(format!("sub-tasks {got:?}"));
                }
                if d.sub_tasks.iter().enumerate().any(|(i, t)| t.ordinal != i) {
                    return Err("ordinals not contiguous".into());
                }
            }
            if let Some(sel) = &want.selections {
                let got: Vec<ExpertModuleId> = d.module_selections.iter().map(|s| s.module).collect();
                if &got != sel {
                    return Err(format!("selections {got:?}"));
                }
            }
            for w in &want.warnings {
                let present = diag
                    .warnings
                    .iter()
                    .any(|x| serde_json::to_value(x.code).ok().and_then(|v| v.as_str().map(String::from)).as_deref() == Some(w));
                if !present {
                    return Err(format!("missing warning {w}; got {:?}", diag.warnings));
                }
            }
            if let Some(r) = want.recovered {
                if diag.recovered != r {
                    return Err(format!("recovered = {}", diag.recovered));
                }
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- scripted scenarios

pub const ALL_MODULES_DECISION: &str = "\
Principle Analysis:
The printed label decides the answer; the other modules add context.

Module Selection & Reason:
- TextIntel Extractor: reads the label.
- ObjectQuant Locator: counts the boxes.
- VisionIQ Analyst: describes the scene.
- ChartSense Expert: reads any chart.

Task Allocation:
[TextIntel Extractor: What does the label say?]
[ObjectQuant Locator: How many boxes are there?]
[VisionIQ Analyst: Describe the scene.]
[ChartSense Expert: Is there a chart, and what does it show?]
";

/// Records whose detailed caption names the gold letter; golds alternate A/B.
pub fn label_records(n: usize) -> Vec<QueryRecord> {
    (0..n)
        .map(|i| {
            let gold = i % 2;
            let subjects = ["NAT", "SOC", "LAN"];
            let mut r = choice(
                &format!("{i}"),
                &format!("Which box carries the correct label (item {i})?"),
                &["Box A", "Box B"],
                gold,
                subjects[i % 3],
            );
            r.visual = VisualInput::DetailedCaption { caption: format!("Two boxes. The label reads {}.", ["A", "B"][gold]) };
            r.categories.insert("grade", if i % 4 < 2 { "G1-6" } else { "G7-12" });
            r
        })
        .collect()
}

/// Text-only experts. Only TextIntel's answer reveals the label; synthesis is
/// correct exactly when that answer is in the supplementary block.
pub fn label_expert() -> MockBackend {
    MockBackend::new("expert").with_modality(Modality::Text).with_responder(|req| {
        let text = &req.text;
        Some(Ok(if text.starts_with("[TextIntel Extractor:") {
            let caption = text.split("Image caption: ").nth(1).unwrap_or("");
            caption.split(". ").last().unwrap_or("").trim().to_string()
        } else {
            "Nothing decisive.".to_string()
        }))
    })
}

pub fn label_synthesis() -> MockBackend {
    MockBackend::new("synthesis").with_responder(|req| {
        let hint = req
            .text
            .lines()
            .filter(|l| l.starts_with("Answer ") && l.contains("label reads "))
            .find_map(|l| l.trim_end_matches('.').chars().last());
        Some(Ok(format!("Rationale from the supplementary information.\nAnswer: ({})", hint.unwrap_or('A'))))
    })
}

pub fn label_backends(expert: &MockBackend) -> BackendSet {
    BackendSet {
        decision: Arc::new(MockBackend::new("decision").with_default(ALL_MODULES_DECISION)),
        expert: Arc::new(expert.clone()),
        synthesis: Arc::new(label_synthesis()),
    }
}

// ---------------------------------------------------------------- upstream dataset fixtures

/// Writes a schema-faithful ScienceQA `problems.json` with `test` items of which
/// `with_image` reference an image present on disk, plus train/val items that
/// must be filtered out. Returns (problems path, image root).
pub fn synthetic_scienceqa(dir: &Path, test: usize, with_image: usize) -> (PathBuf, PathBuf) {
    let subjects = ["natural science", "social science", "language science"];
    let images = dir.join("images");
    let mut problems = serde_json::Map::new();
    let total = test + 40;
    for i in 1..=total {
        let split = if i <= test { "test" } else if i % 2 == 0 { "train" } else { "val" };
        let has_image = i <= with_image;
        let hint = if i % 3 == 0 { format!("Hint for item {i}.") } else { String::new() };
        if has_image {
            let d = images.join(split).join(i.to_string());
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join("image.png"), format!("png-{i}")).unwrap();
        }
        problems.insert(
            i.to_string(),
            json!({
                "question": format!("Question {i}?"),
                "choices": ["first", "second", "third"],
                "answer": i % 3,
                "hint": hint,
                "image": if has_image { json!("image.png") } else { json!(null) },
                "task": "closed choice",
                "grade": format!("grade{}", 1 + i % 12),
                "subject": subjects[i % 3],
                "topic": "topic",
                "category": "category",
                "skill": "skill",
                "lecture": "",
                "solution": "",
                "split": split,
            }),
        );
    }
    let path = dir.join("problems.json");
    std::fs::write(&path, serde_json::to_string(&problems).unwrap()).unwrap();
    (path, images)
}

/// Writes a schema-faithful MathVista `testmini.json` with `n` items (mixed
/// multiple-choice, integer, float, and text answers) and their image files.
pub fn synthetic_mathvista(dir: &Path, n: usize) -> PathBuf {
    let tasks = [
        "figure question answering",
        "geometry problem solving",
        "math word problem",
        "textbook question answering",
        "visual question answering",
    ];
    let skills = [
        "algebraic reasoning",
        "arithmetic reasoning",
        "geometry reasoning",
        "logical reasoning",
        "numeric commonsense",
        "scientific reasoning",
        "statistical reasoning",
    ];
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut items = serde_json::Map::new();
    for pid in 1..=n {
        let image = format!("images/{pid}.jpg");
        std::fs::write(dir.join(&image), format!("jpg-{pid}")).unwrap();
        let (question_type, answer_type, choices, answer, precision) = match pid % 4 {
            0 => ("multi_choice", "text", json!(["3", "4", "5", "6"]), json!("5"), json!(null)),
            1 => ("free_form", "integer", json!(null), json!(format!("{}", pid * 3)), json!(null)),
            2 => ("free_form", "float", json!(null), json!("1.25"), json!(2.0)),
            _ => ("free_form", "text", json!(null), json!("triangle"), json!(null)),
        };
        items.insert(
            pid.to_string(),
            json!({
                "pid": pid.to_string(),
                "question": format!("What is asked in problem {pid}?"),
                "image": image,
                "choices": choices,
                "unit": if pid % 5 == 0 { json!("cm") } else { json!(null) },
                "precision": precision,
                "answer": answer,
                "question_type": question_type,
                "answer_type": answer_type,
                "metadata": {
                    "split": "testmini",
                    "source": "synthetic",
                    "task": tasks[pid % tasks.len()],
                    "category": "math-targeted-vqa",
                    "context": "synthetic scene",
                    "grade": "high school",
                    "language": "english",
                    "skills": [skills[pid % skills.len()], skills[(pid / 7) % skills.len()]],
                },
                "query": format!("Hint: answer the question.\nQuestion: problem {pid}"),
            }),
        );
    }
    let path = dir.join("testmini.json");
    std::fs::write(&path, serde_json::to_string(&items).unwrap()).unwrap();
    path
}

// ---------------------------------------------------------------- generators

use cantor::answer_extract::Verdict;
use cantor::domain::{Decision, FinalAnswer, ModuleSelection, PipelineMode, RunConfig, SubAnswer, SubTask, SupplementaryInfo};
use cantor::pipeline::{CallTiming, ExpertCall, QueryTrace, SynthesisStage};
use proptest::prelude::*;

const HEADER_WORDS: [&str; 8] =
    ["principle", "module", "task", "sub-task", "analysis", "reason", "selection", "allocation"];

fn sentence() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.?'()%-]{0,60}[A-Za-z0-9.?)]".prop_filter("must not read as a section header", |s| {
        let lower = s.to_lowercase();
        !HEADER_WORDS.iter().any(|w| lower.starts_with(w))
    })
}

pub fn arb_module() -> impl Strategy<Value = ExpertModuleId> {
    (0usize..4).prop_map(|i| ExpertModuleId::ALL[i])
}

/// Well-formed decisions: 0-3 principle lines, 1-5 sub-tasks, one selection per distinct module.
pub fn arb_decision() -> impl Strategy<Value = Decision> {
    let principle = prop::collection::vec(sentence(), 0..4).prop_map(|v| v.join("\n"));
    let tasks = prop::collection::vec((arb_module(), sentence()), 1..6);
    (principle, tasks, prop::collection::vec(sentence(), 4)).prop_map(|(principle, tasks, reasons)| {
        let sub_tasks: Vec<SubTask> =
            tasks.into_iter().enumerate().map(|(i, (m, instr))| SubTask::new(m, instr, i)).collect();
        let mut module_selections: Vec<ModuleSelection> = Vec::new();
        for t in &sub_tasks {
            if !module_selections.iter().any(|s| s.module == t.module) {
                let reason = reasons[module_selections.len()].clone();
                module_selections.push(ModuleSelection { module: t.module, reason });
            }
        }
        Decision { principle_analysis: principle, module_selections, sub_tasks, raw: String::new() }
    })
}

/// Sub-answers in ordinal order with a mix of ok, failed, and skipped statuses.
pub fn arb_sub_answers() -> impl Strategy<Value = Vec<SubAnswer>> {
    prop::collection::vec((arb_module(), sentence(), sentence(), 0u8..4), 0..8).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (m, instr, text, status))| {
                let t = SubTask::new(m, format!("{instr} #{i}"), i);
                match status {
                    0 => SubAnswer::failed(t, "timeout"),
                    1 => SubAnswer::skipped(t),
                    _ => SubAnswer::ok(t, text),
                }
            })
            .collect()
    })
}

pub fn fake_trace(id: &str, verdict: Verdict, modules: &[ExpertModuleId]) -> QueryTrace {
    let experts = modules
        .iter()
        .enumerate()
        .map(|(i, m)| ExpertCall {
            prompt: format!("[{}: t{i}]", m.display_name()),
            image_sha256: None,
            answer: SubAnswer::ok(SubTask::new(*m, format!("t{i}"), i), "x"),
            latency_ms: 10,
            timing: CallTiming::default(),
        })
        .collect();
    QueryTrace {
        record_id: id.into(),
        mode: PipelineMode::Cantor,
        decision: None,
        experts,
        supplementary: SupplementaryInfo::default(),
        synthesis: SynthesisStage {
            prompt_sha256: String::new(),
            prompt: String::new(),
            response: String::new(),
            latency_ms: 5,
            timing: CallTiming::default(),
        },
        answer: FinalAnswer::default(),
        verdict,
        config_digest: "d".into(),
        config: RunConfig::default(),
        total_wall_ms: 0,
    }
}

/// (record, trace) pairs with random verdicts, ScienceQA-style partition tags
/// (one subject, one grade, one or more context values), and random expert calls.
pub fn arb_outcomes() -> impl Strategy<Value = Vec<(QueryRecord, QueryTrace)>> {
    let one = (
        0usize..3,
        0usize..2,
        prop::sample::subsequence(vec!["TXT", "IMG", "NO"], 1..=2),
        0u8..3,
        prop::collection::vec(arb_module(), 0..5),
    );
    prop::collection::vec(one, 1..60).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (subject, grade, contexts, verdict, modules))| {
                let id = format!("r{i}");
                let mut r = choice(&id, "q", &["a", "b"], 0, ["NAT", "SOC", "LAN"][subject]);
                r.categories.insert("grade", ["G1-6", "G7-12"][grade]);
                for c in contexts {
                    r.categories.insert("context", c);
                }
                let v = [Verdict::Correct, Verdict::Incorrect, Verdict::Unscored][verdict as usize];
                (r, fake_trace(&id, v, &modules))
            })
            .collect()
    })
}

// ---------------------------------------------------------------- prompt goldens

use cantor::prompting::{build_decision_prompt, select_in_context_examples, PromptSet};

pub const PREAMBLE: &str = "You are an advanced question-answering agent required with four specialized modules to aid in the analysis and responding to queries about images.";
pub const ALLOCATION: &str = "Assign specific tasks to each module as needed, based on their capabilities, to gather additional information essential for answering the question accurately.";

pub fn goldens_dir() -> PathBuf {
    fixtures().join("goldens")
}

/// (golden file name, rendered decision prompt) for the 4-module, 3-module, and no-visual setups.
pub fn golden_cases() -> Vec<(&'static str, String)> {
    let prompts = PromptSet::builtin();
    let mut record = choice(
        "golden",
        "Which solution has a higher concentration of green particles?",
        &["Solution A", "Solution B", "neither; their concentrations are the same"],
        0,
        "NAT",
    );
    record.context = "The diagram below is a model of two solutions.".into();
    record.visual = VisualInput::DetailedCaption {
        caption: "Two beakers of equal volume; A holds five green particles, B holds three.".into(),
    };
    let full = RunConfig::default();
    let examples = select_in_context_examples(&prompts, full.dataset, Some(1)).unwrap();
    let render = |config: &RunConfig, record: &QueryRecord| {
        build_decision_prompt(record, config, &prompts, &examples).unwrap().1.text
    };

    let mut three = full.clone();
    three.enabled_modules.remove(&ExpertModuleId::ChartSenseExpert);
    let mut no_visual = record.clone();
    no_visual.visual = VisualInput::None;
    vec![
        ("decision_4_modules.txt", render(&full, &record)),
        ("decision_3_modules.txt", render(&three, &record)),
        ("decision_no_visual.txt", render(&full, &no_visual)),
    ]
}

