//! Pulls the scorable answer out of rationale-then-answer text and scores it.
//!
//! Choice extraction rules, in precedence order:
//! 1. an explicit marker: `Answer: (X)`, `Answer: X`, `The answer is X`;
//! 2. an option letter alone on the final line, or the last `(X)` on it;
//! 3. exactly one option's text appearing on the final line.
//!
//! Strict mode applies rule 1 only.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{FinalAnswer, FreeFormValue, GoldAnswer, QueryRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no answer found")]
    NoAnswerFound,
    #[error("ambiguous answer: candidates {candidates:?}")]
    Ambiguous { candidates: Vec<usize> },
    #[error("answer letter {letter} is out of range for {options} options")]
    OutOfRange { letter: char, options: usize },
}

/// Which extraction rule produced a choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceRule {
    Marker,
    FinalLineLetter,
    OptionText,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?:(?i:\banswer)\s*(?:(?i:is)\s*)?[:：]|(?i:\banswer\s+is)|(?i:\bcorrect\s+(?:option|choice)\s+is))\s*[*_]*\s*(?:(?i:option|choice)\s*)?(?:\(([A-Za-z])\)|([A-Z])(?:[^A-Za-z0-9]|$))",
    )
    .expect("marker regex")
});

/// A second letter offered right after a marked one: "A or B", "(A) and (C)", "A/B".
static ALTERNATIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\)?[\s*_]*(?:,|/|\bor\b|\band\b)\s*(?:\(([A-Za-z])\)|([A-Z])\b)").expect("alternative regex")
});

static PAREN_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(([A-Z])\)").expect("paren regex"));

static LONE_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[\s*_>#-]*\(?([A-Z])\)?[\s.*_)]*$").expect("lone letter regex"));

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|-?\.\d+)(\s*%)?").expect("number regex")
});

static TEXT_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\banswer\s*(?:is\s*)?[:：]|\banswer\s+is\b)\s*(.*)$").expect("text marker regex")
});

fn final_line(raw: &str) -> Option<&str> {
    raw.lines().rev().map(str::trim).find(|l| !l.is_empty())
}

fn letter_index(letter: char, options: usize) -> Result<usize, ExtractError> {
    let upper = letter.to_ascii_uppercase();
    let idx = (upper as u8 - b'A') as usize;
    if idx < options {
        Ok(idx)
    } else {
        Err(ExtractError::OutOfRange { letter: upper, options })
    }
}

/// Letters named by answer markers, including hedged alternatives after one.
fn marker_letters(raw: &str) -> Vec<char> {
    let mut out = Vec::new();
    for c in MARKER.captures_iter(raw) {
        let Some(m) = c.get(1).or_else(|| c.get(2)) else { continue };
        out.extend(m.as_str().chars().next().map(|c| c.to_ascii_uppercase()));
        if let Some(alt) = ALTERNATIVE.captures(&raw[m.end()..]) {
            let letter = alt.get(1).or_else(|| alt.get(2)).and_then(|l| l.as_str().chars().next());
            out.extend(letter.map(|c| c.to_ascii_uppercase()));
        }
    }
    out
}

/// Whether `needle` occurs in `hay` on word boundaries (both lowercase).
fn occurs_as_phrase(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let bytes = hay.as_bytes();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = start == 0 || !hay[..start].chars().next_back().is_some_and(char::is_alphanumeric);
        let after_ok = end == bytes.len() || !hay[end..].chars().next().is_some_and(char::is_alphanumeric);
        if before_ok && after_ok {
            return true;
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn option_text_match(line: &str, options: &[String]) -> Result<usize, ExtractError> {
    let hay = line.to_lowercase();
    let lowered: Vec<String> = options.iter().map(|o| o.trim().to_lowercase()).collect();
    let hits: Vec<usize> = (0..options.len()).filter(|&i| occurs_as_phrase(&hay, &lowered[i])).collect();
    // drop an option whose text is contained in another matched option ("red" inside "dark red")
    let maximal: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| {
            !hits
                .iter()
                .any(|&j| j != i && lowered[j] != lowered[i] && lowered[j].contains(lowered[i].as_str()))
        })
        .collect();
    match maximal.as_slice() {
        [] => Err(ExtractError::NoAnswerFound),
        [one] => Ok(*one),
        many => Err(ExtractError::Ambiguous { candidates: many.to_vec() }),
    }
}

/// Extracts an option index. Never returns an index `>= options.len()`.
pub fn extract_choice(raw: &str, options: &[String], strict: bool) -> Result<usize, ExtractError> {
    extract_choice_with_rule(raw, options, strict).map(|(i, _)| i)
}

pub fn extract_choice_with_rule(
    raw: &str,
    options: &[String],
    strict: bool,
) -> Result<(usize, ChoiceRule), ExtractError> {
    if options.is_empty() {
        return Err(ExtractError::NoAnswerFound);
    }
    let letters = marker_letters(raw);
    if let Some(&last) = letters.last() {
        if letters.iter().any(|&l| l != last) {
            let mut candidates: Vec<usize> = letters.iter().map(|&l| (l as u8 - b'A') as usize).collect();
            candidates.sort_unstable();
            candidates.dedup();
            return Err(ExtractError::Ambiguous { candidates });
        }
        return letter_index(last, options.len()).map(|i| (i, ChoiceRule::Marker));
    }
    if strict {
        return Err(ExtractError::NoAnswerFound);
    }
    let Some(line) = final_line(raw) else {
        return Err(ExtractError::NoAnswerFound);
    };
    if let Some(c) = LONE_LETTER.captures(line) {
        let letter = c[1].chars().next().expect("one letter");
        return letter_index(letter, options.len()).map(|i| (i, ChoiceRule::FinalLineLetter));
    }
    if let Some(c) = PAREN_LETTER.captures_iter(line).last() {
        let letter = c[1].chars().next().expect("one letter");
        return letter_index(letter, options.len()).map(|i| (i, ChoiceRule::FinalLineLetter));
    }
    option_text_match(line, options).map(|i| (i, ChoiceRule::OptionText))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeFormKind {
    /// `percent_as_fraction`: read "45%" as 0.45 (used when the gold is a fraction in [0, 1]).
    Number { percent_as_fraction: bool },
    Text,
}

impl FreeFormKind {
    pub fn for_gold(gold: &GoldAnswer) -> Option<FreeFormKind> {
        match gold {
            GoldAnswer::Choice { .. } => None,
            GoldAnswer::Number { value, .. } => Some(FreeFormKind::Number {
                percent_as_fraction: value.abs() <= 1.0 && value.fract() != 0.0,
            }),
            GoldAnswer::Text { .. } => Some(FreeFormKind::Text),
        }
    }
}

/// The line holding the final answer: the last line with an answer marker, else the last non-empty line.
fn answer_line(raw: &str) -> Option<&str> {
    raw.lines()
        .rev()
        .map(str::trim)
        .find(|l| TEXT_MARKER.is_match(l))
        .or_else(|| final_line(raw))
}

fn parse_number(line: &str, percent_as_fraction: bool) -> Option<f64> {
    let m = NUMBER.captures_iter(line).last()?;
    let value: f64 = m[1].replace(',', "").parse().ok()?;
    Some(if m.get(2).is_some() && percent_as_fraction { value / 100.0 } else { value })
}

fn normalize_text(s: &str) -> String {
    s.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '*' | '_' | '"' | '\'' | '`' | '“' | '”' | '.' | '!' | ';')
    })
    .to_lowercase()
}

pub fn extract_free_form(raw: &str, kind: FreeFormKind) -> Result<FreeFormValue, ExtractError> {
    match kind {
        FreeFormKind::Number { percent_as_fraction } => {
            let line = answer_line(raw).ok_or(ExtractError::NoAnswerFound)?;
            let scope = TEXT_MARKER
                .captures(line)
                .and_then(|c| c.get(1))
                .map(|m| m.as_str())
                .filter(|s| NUMBER.is_match(s))
                .unwrap_or(line);
            parse_number(scope, percent_as_fraction)
                .map(FreeFormValue::Number)
                .ok_or(ExtractError::NoAnswerFound)
        }
        FreeFormKind::Text => raw
            .lines()
            .rev()
            .filter_map(|l| TEXT_MARKER.captures(l.trim()))
            .map(|c| normalize_text(&c[1]))
            .find(|t| !t.is_empty())
            .map(FreeFormValue::Text)
            .ok_or(ExtractError::NoAnswerFound),
    }
}

/// Extracts the answer for `record` from synthesis output. Extraction failures
/// are recorded in `extraction_error` and leave the answer unscorable.
pub fn extract_answer(raw: &str, record: &QueryRecord, strict: bool) -> FinalAnswer {
    let mut answer = FinalAnswer {
        rationale: rationale_of(raw),
        raw: raw.to_string(),
        ..FinalAnswer::default()
    };
    let result = if record.is_choice() {
        extract_choice(raw, &record.options, strict).map(|i| answer.choice_index = Some(i))
    } else {
        match FreeFormKind::for_gold(&record.gold) {
            Some(kind) => extract_free_form(raw, kind).map(|v| answer.free_form = Some(v)),
            None => Err(ExtractError::NoAnswerFound),
        }
    };
    if let Err(e) = result {
        answer.extraction_error = Some(e.to_string());
    }
    answer
}

/// Everything before the final answer-marker line; the whole text when there is none.
fn rationale_of(raw: &str) -> String {
    let lines: Vec<&str> = raw.lines().collect();
    match lines.iter().rposition(|l| TEXT_MARKER.is_match(l.trim())) {
        Some(i) if i > 0 => lines[..i].join("\n").trim().to_string(),
        _ => raw.trim().to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unscored,
}

pub fn default_tolerance(gold: f64) -> f64 {
    1e-6 * gold.abs().max(1.0)
}

fn numbers_match(pred: f64, gold: f64, tolerance: Option<f64>) -> bool {
    (pred - gold).abs() <= tolerance.unwrap_or_else(|| default_tolerance(gold))
}

pub fn compare_answer(pred: &FinalAnswer, gold: &GoldAnswer) -> Verdict {
    if pred.extraction_error.is_some() || !pred.is_scorable() {
        return Verdict::Unscored;
    }
    let correct = match (gold, pred.choice_index, &pred.free_form) {
        (GoldAnswer::Choice { index }, Some(p), _) => p == *index,
        (GoldAnswer::Number { value, tolerance }, _, Some(FreeFormValue::Number(p))) => numbers_match(*p, *value, *tolerance),
        (GoldAnswer::Number { value, tolerance }, _, Some(FreeFormValue::Text(t))) => t
            .trim()
            .replace(',', "")
            .parse::<f64>()
            .is_ok_and(|p| numbers_match(p, *value, *tolerance)),
        (GoldAnswer::Text { value }, _, Some(FreeFormValue::Text(t))) => normalize_text(t) == normalize_text(value),
        (GoldAnswer::Text { value }, _, Some(FreeFormValue::Number(p))) => {
            value.trim().parse::<f64>().is_ok_and(|g| numbers_match(*p, g, None))
        }
        _ => false,
    };
    if correct {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}
