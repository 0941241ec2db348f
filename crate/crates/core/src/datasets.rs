//! Importers from the upstream ScienceQA and MathVista layouts into canonical
//! JSONL, plus loading and writing of canonical record files.
//!
//! Canonical JSONL holds one [`QueryRecord`] per line, sorted by id
//! (numeric ids numerically). Tag families:
//!
//! | family    | values                               | partition |
//! |-----------|--------------------------------------|-----------|
//! | `subject` | NAT, SOC, LAN                        | yes       |
//! | `context` | TXT, IMG, NO                         | no        |
//! | `grade`   | G1-6, G7-12                          | yes       |
//! | `task`    | FQA, GPS, MWP, TQA, VQA              | yes       |
//! | `skill`   | ALG, ARI, GEO, LOG, NUM, SCI, STA    | no        |

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    validate_query, CategoryTags, GoldAnswer, ImageRef, QueryRecord, Violation, VisualInput,
};

pub const SUBJECT: &str = "subject";
pub const CONTEXT: &str = "context";
pub const GRADE: &str = "grade";
pub const TASK: &str = "task";
pub const SKILL: &str = "skill";

/// Families whose values partition a dataset (exactly one value per record).
pub const PARTITION_FAMILIES: [&str; 3] = [SUBJECT, GRADE, TASK];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("source schema error in {item}: {message}")]
    SourceSchema { item: String, message: String },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{} invalid record(s): {}", .0.len(), summarize(.0))]
    ValidationFailed(Vec<(String, Vec<Violation>)>),
    #[error("duplicate record id {0}")]
    DuplicateId(String),
}

fn summarize(report: &[(String, Vec<Violation>)]) -> String {
    report
        .iter()
        .map(|(id, v)| {
            let rules: Vec<String> = v.iter().map(|x| format!("{}: {}", x.field, x.rule)).collect();
            format!("{id} ({})", rules.join("; "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn schema(item: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::SourceSchema { item: item.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportWarning {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportOutcome {
    pub records: Vec<QueryRecord>,
    /// Records kept with `visual = None` because their image file is missing.
    pub warnings: Vec<ImportWarning>,
}

/// Numeric ids sort numerically, everything else lexically after them.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Upstream files come as an id-keyed object or as a list of items.
fn items_of(root: Value, id_field: &str) -> Result<Vec<(String, Value)>, DatasetError> {
    match root {
        Value::Object(map) => Ok(map.into_iter().collect()),
        Value::Array(list) => list
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let id = match &v[id_field] {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Err(schema(&format!("item #{i}"), format!("missing `{id_field}`"))),
                };
                Ok((id, v))
            })
            .collect(),
        _ => Err(schema("root", "expected an object or a list")),
    }
}

fn str_field<'a>(item: &'a Value, id: &str, field: &str) -> Result<&'a str, DatasetError> {
    item[field].as_str().ok_or_else(|| schema(id, format!("`{field}` must be a string")))
}

fn opt_str<'a>(item: &'a Value, field: &str) -> &'a str {
    item[field].as_str().unwrap_or("")
}

fn string_list(item: &Value, id: &str, field: &str) -> Result<Vec<String>, DatasetError> {
    match &item[field] {
        Value::Null => Ok(Vec::new()),
        Value::Array(a) => a
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(schema(id, format!("`{field}` entries must be strings"))),
            })
            .collect(),
        _ => Err(schema(id, format!("`{field}` must be a list"))),
    }
}

fn load_image(candidates: &[PathBuf]) -> Option<ImageRef> {
    candidates.iter().find(|p| p.is_file()).and_then(|p| ImageRef::from_file(p).ok())
}

pub fn scienceqa_subject_tag(subject: &str) -> Option<&'static str> {
    match subject.trim().to_ascii_lowercase().as_str() {
        "natural science" => Some("NAT"),
        "social science" => Some("SOC"),
        "language science" => Some("LAN"),
        _ => None,
    }
}

/// "grade7" → G7-12.
pub fn grade_band(grade: &str) -> Option<&'static str> {
    let n: u32 = grade.trim().trim_start_matches(|c: char| !c.is_ascii_digit()).parse().ok()?;
    match n {
        1..=6 => Some("G1-6"),
        7..=12 => Some("G7-12"),
        _ => None,
    }
}

/// Imports one split of a ScienceQA `problems.json`. Images are looked up at
/// `<images>/<split>/<id>/<file>` and then `<images>/<id>/<file>`.
pub fn import_scienceqa(source: &Path, split: &str, images: Option<&Path>) -> Result<ImportOutcome, DatasetError> {
    let mut items = items_of(read_json(source)?, "id")?;
    items.sort_by(|a, b| compare_ids(&a.0, &b.0));
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (id, item) in items {
        let item_split = opt_str(&item, "split");
        if !item_split.is_empty() && item_split != split {
            continue;
        }
        let question = str_field(&item, &id, "question")?.to_string();
        let options = string_list(&item, &id, "choices")?;
        let answer = item["answer"]
            .as_u64()
            .ok_or_else(|| schema(&id, "`answer` must be a non-negative integer"))? as usize;
        if answer >= options.len() {
            return Err(schema(&id, format!("answer {answer} out of range for {} choices", options.len())));
        }
        let hint = opt_str(&item, "hint").trim().to_string();
        let image_name = item["image"].as_str().filter(|s| !s.is_empty());

        let mut tags = CategoryTags::new();
        let subject = opt_str(&item, "subject");
        tags.insert(
            SUBJECT,
            scienceqa_subject_tag(subject).ok_or_else(|| schema(&id, format!("unknown subject `{subject}`")))?,
        );
        if !hint.is_empty() {
            tags.insert(CONTEXT, "TXT");
        }
        if image_name.is_some() {
            tags.insert(CONTEXT, "IMG");
        }
        if hint.is_empty() && image_name.is_none() {
            tags.insert(CONTEXT, "NO");
        }
        let grade = opt_str(&item, "grade");
        tags.insert(GRADE, grade_band(grade).ok_or_else(|| schema(&id, format!("unknown grade `{grade}`")))?);

        let visual = match (image_name, images) {
            (Some(name), Some(root)) => {
                let found = load_image(&[root.join(split).join(&id).join(name), root.join(&id).join(name)]);
                match found {
                    Some(image) => VisualInput::Image { image },
                    None => {
                        warnings.push(ImportWarning { id: id.clone(), message: format!("image file {name} not found") });
                        VisualInput::None
                    }
                }
            }
            (Some(name), None) => {
                warnings.push(ImportWarning { id: id.clone(), message: format!("no image root given for {name}") });
                VisualInput::None
            }
            (None, _) => VisualInput::None,
        };
        records.push(QueryRecord {
            id,
            question,
            context: hint,
            options,
            gold: GoldAnswer::Choice { index: answer },
            visual,
            captions: Default::default(),
            categories: tags,
            split: split.to_string(),
        });
    }
    Ok(ImportOutcome { records, warnings })
}

pub fn mathvista_task_tag(task: &str) -> Option<&'static str> {
    match task.trim().to_ascii_lowercase().as_str() {
        "figure question answering" => Some("FQA"),
        "geometry problem solving" => Some("GPS"),
        "math word problem" => Some("MWP"),
        "textbook question answering" => Some("TQA"),
        "visual question answering" => Some("VQA"),
        _ => None,
    }
}

pub fn mathvista_skill_tag(skill: &str) -> Option<&'static str> {
    match skill.trim().to_ascii_lowercase().as_str() {
        "algebraic reasoning" => Some("ALG"),
        "arithmetic reasoning" => Some("ARI"),
        "geometry reasoning" => Some("GEO"),
        "logical reasoning" => Some("LOG"),
        "numeric commonsense" => Some("NUM"),
        "scientific reasoning" => Some("SCI"),
        "statistical reasoning" => Some("STA"),
        _ => None,
    }
}

fn answer_string(item: &Value, id: &str) -> Result<String, DatasetError> {
    match &item["answer"] {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(schema(id, "`answer` must be a string or number")),
    }
}

/// Gold for a free-form item. Floats get a tolerance of half a unit in the
/// last stated decimal place.
fn free_form_gold(item: &Value, id: &str, answer: &str) -> Result<GoldAnswer, DatasetError> {
    let answer_type = opt_str(item, "answer_type");
    let parsed = answer.replace(',', "").parse::<f64>().ok().filter(|v| v.is_finite());
    Ok(match (answer_type, parsed) {
        ("text" | "list", _) | (_, None) => {
            if answer_type == "integer" || answer_type == "float" {
                return Err(schema(id, format!("{answer_type} answer `{answer}` does not parse")));
            }
            GoldAnswer::Text { value: answer.to_string() }
        }
        ("float", Some(value)) => {
            let precision = item["precision"].as_f64().map(|p| p as i32).unwrap_or_else(|| {
                answer.split_once('.').map_or(0, |(_, frac)| frac.len() as i32)
            });
            GoldAnswer::Number { value, tolerance: Some(0.5 * 10f64.powi(-precision)) }
        }
        (_, Some(value)) => GoldAnswer::Number { value, tolerance: None },
    })
}

/// Imports MathVista testmini. Image paths in the source are relative to `images`
/// (or to the source file's directory when `images` is not given).
pub fn import_mathvista(source: &Path, images: Option<&Path>) -> Result<ImportOutcome, DatasetError> {
    let mut items = items_of(read_json(source)?, "pid")?;
    items.sort_by(|a, b| compare_ids(&a.0, &b.0));
    let image_root = images
        .map(Path::to_path_buf)
        .or_else(|| source.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (id, item) in items {
        let question = str_field(&item, &id, "question")?.to_string();
        let choices = string_list(&item, &id, "choices")?;
        let answer = answer_string(&item, &id)?;
        let gold = if choices.is_empty() {
            free_form_gold(&item, &id, &answer)?
        } else {
            let index = choices
                .iter()
                .position(|c| c.trim() == answer)
                .or_else(|| choices.iter().position(|c| c.trim().eq_ignore_ascii_case(&answer)))
                .ok_or_else(|| schema(&id, format!("answer `{answer}` is not one of the choices")))?;
            GoldAnswer::Choice { index }
        };
        let meta = &item["metadata"];
        let mut tags = CategoryTags::new();
        let task = opt_str(meta, "task");
        tags.insert(TASK, mathvista_task_tag(task).ok_or_else(|| schema(&id, format!("unknown task `{task}`")))?);
        let mut skills = BTreeSet::new();
        for s in string_list(meta, &id, "skills")? {
            skills.insert(mathvista_skill_tag(&s).ok_or_else(|| schema(&id, format!("unknown skill `{s}`")))?);
        }
        for s in skills {
            tags.insert(SKILL, s);
        }
        let unit = opt_str(&item, "unit").trim();
        let visual = match item["image"].as_str().filter(|s| !s.is_empty()) {
            Some(rel) => match load_image(&[image_root.join(rel)]) {
                Some(image) => VisualInput::Image { image },
                None => {
                    warnings.push(ImportWarning { id: id.clone(), message: format!("image file {rel} not found") });
                    VisualInput::None
                }
            },
            None => VisualInput::None,
        };
        records.push(QueryRecord {
            id,
            question,
            context: if unit.is_empty() { String::new() } else { format!("Unit: {unit}") },
            options: choices,
            gold,
            visual,
            captions: Default::default(),
            categories: tags,
            split: "testmini".into(),
        });
    }
    Ok(ImportOutcome { records, warnings })
}

/// Loads canonical records from a JSONL file, or from a directory of one-record
/// `.json` files. Every record is validated; any violation fails the load.
pub fn load_canonical(path: &Path) -> Result<Vec<QueryRecord>, DatasetError> {
    let mut records = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(io_err(&f))?;
            let r: QueryRecord = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
                path: f.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            records.push(r);
        }
    } else {
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: QueryRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
    }
    let report: Vec<(String, Vec<Violation>)> = records
        .iter()
        .map(|r| (r.id.clone(), validate_query(r)))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if !report.is_empty() {
        return Err(DatasetError::ValidationFailed(report));
    }
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId(r.id.clone()));
        }
    }
    Ok(records)
}

pub fn to_jsonl(records: &[QueryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_canonical(path: &Path, records: &[QueryRecord]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(to_jsonl(records).as_bytes()).map_err(io_err(path))
}

/// Per-family value counts, for import summaries.
pub fn tag_counts(records: &[QueryRecord]) -> BTreeMap<String, BTreeMap<String, usize>> {
    let mut out: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        for fam in r.categories.families() {
            for v in r.categories.values(fam) {
                *out.entry(fam.to_string()).or_default().entry(v.clone()).or_default() += 1;
            }
        }
    }
    out
}

/// Checks the tag rules of an imported ScienceQA record: one subject, one
/// grade band, and context flags consistent with hint/image presence.
pub fn check_scienceqa_tags(record: &QueryRecord, had_image: bool) -> Result<(), String> {
    let tags = &record.categories;
    if tags.values(SUBJECT).len() != 1 {
        return Err(format!("{}: expected one subject tag", record.id));
    }
    if tags.values(GRADE).len() != 1 {
        return Err(format!("{}: expected one grade tag", record.id));
    }
    let txt = !record.context.trim().is_empty();
    let ok = tags.has(CONTEXT, "TXT") == txt
        && tags.has(CONTEXT, "IMG") == had_image
        && tags.has(CONTEXT, "NO") == (!txt && !had_image);
    if ok {
        Ok(())
    } else {
        Err(format!("{}: context flags {:?} inconsistent", record.id, tags.values(CONTEXT)))
    }
}
