use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::domain::ExpertModuleId;

use super::{AblationMatrix, EvalError, RunReport, Score, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Markdown, ReportFormat::Csv];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

const FAMILY_ORDER: [&str; 5] = ["subject", "context", "grade", "task", "skill"];
const TAG_ORDER: [&str; 20] = [
    "NAT", "SOC", "LAN", "TXT", "IMG", "NO", "G1-6", "G7-12", "FQA", "GPS", "MWP", "TQA", "VQA", "ALG", "ARI", "GEO",
    "LOG", "NUM", "SCI", "STA",
];

fn rank<T: PartialEq>(order: &[T], x: &T) -> usize {
    order.iter().position(|o| o == x).unwrap_or(order.len())
}

fn ordered<'a, V>(map: &'a BTreeMap<String, V>, order: &[&str]) -> Vec<(&'a String, &'a V)> {
    let mut v: Vec<_> = map.iter().collect();
    v.sort_by(|a, b| rank(order, &a.0.as_str()).cmp(&rank(order, &b.0.as_str())).then(a.0.cmp(b.0)));
    v
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// "80.91(+4.06)"
pub fn with_delta(accuracy: f64, delta: f64) -> String {
    let d = delta * 100.0;
    let d = if d.abs() < 0.005 { 0.0 } else { d };
    format!("{}({:+.2})", pct(accuracy), d)
}

pub fn render_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Accuracy row over every tag, then module-usage proportions per tag.
pub fn render_markdown(report: &RunReport) -> String {
    let mut cols: Vec<(String, Score)> = Vec::new();
    for (_, tags) in ordered(&report.tags, &FAMILY_ORDER) {
        for (tag, score) in ordered(tags, &TAG_ORDER) {
            cols.push((tag.clone(), *score));
        }
    }
    let mut out = format!("# Run {}\n\n## Accuracy (%)\n\n", report.run_id);
    out.push_str("| Run |");
    for (tag, _) in &cols {
        out.push_str(&format!(" {tag} |"));
    }
    out.push_str(" Avg |\n|---|");
    out.push_str(&"---|".repeat(cols.len() + 1));
    out.push_str(&format!("\n| {} |", report.run_id));
    for (_, s) in &cols {
        out.push_str(&format!(" {} |", pct(s.accuracy)));
    }
    out.push_str(&format!(" {} |\n\n", pct(report.overall.accuracy)));
    out.push_str(&format!(
        "Records: {}. Correct: {}. Unscored (counted as incorrect): {}.\n\n",
        report.overall.count, report.overall.correct, report.overall.unscored
    ));

    out.push_str("## Expert module usage (% of calls)\n\n| Tag |");
    for m in ExpertModuleId::ALL {
        out.push_str(&format!(" {} |", m.display_name()));
    }
    out.push_str(" Calls |\n|---|");
    out.push_str(&"---|".repeat(ExpertModuleId::ALL.len() + 1));
    out.push('\n');
    for (_, groups) in ordered(&report.module_usage.by_tag, &FAMILY_ORDER) {
        for (tag, g) in ordered(groups, &TAG_ORDER) {
            out.push_str(&format!("| {tag} |"));
            for m in ExpertModuleId::ALL {
                out.push_str(&format!(" {} |", pct(g.proportions.get(&m).copied().unwrap_or(0.0))));
            }
            out.push_str(&format!(" {} |\n", g.calls));
        }
    }
    out.push_str(&format!(
        "\nBackend calls: {}. Reported backend latency: {} ms total, {:.1} ms per query.\n",
        report.timing.backend_calls, report.timing.total_latency_ms, report.timing.mean_latency_ms_per_query
    ));
    out
}

/// One row per (tag, metric), plus the overall rows.
pub fn render_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "tag", "metric", "value"]).expect("in-memory csv");
    let mut rows = vec![("overall".to_string(), "all".to_string(), report.overall)];
    for (fam, tags) in ordered(&report.tags, &FAMILY_ORDER) {
        for (tag, s) in ordered(tags, &TAG_ORDER) {
            rows.push((fam.clone(), tag.clone(), *s));
        }
    }
    for (fam, tag, s) in rows {
        for (metric, value) in [
            ("count", s.count.to_string()),
            ("correct", s.correct.to_string()),
            ("unscored", s.unscored.to_string()),
            ("accuracy", format!("{:.6}", s.accuracy)),
        ] {
            w.write_record([fam.as_str(), tag.as_str(), metric, value.as_str()]).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Writes `report.<ext>` into `dir`.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf, EvalError> {
    let text = match format {
        ReportFormat::Json => render_json(report),
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
    };
    let path = dir.join(format!("report.{}", format.extension()));
    std::fs::write(&path, text).map_err(|source| EvalError::Io { path: path.clone(), source })?;
    Ok(path)
}

impl AblationMatrix {
    /// Module rows with "accuracy(delta)" cells, then the two reference rows.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Module | Enable Only | Disable Only |\n|---|---|---|\n");
        let cell = |c: &Option<super::ablation::AblationCell>| {
            c.map_or_else(|| "-".to_string(), |c| with_delta(c.score.accuracy, c.delta))
        };
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                r.module.display_name(),
                cell(&r.enable_only),
                cell(&r.disable_only)
            ));
        }
        let acc = |s: &Option<Score>| s.map_or_else(|| "-".to_string(), |s| pct(s.accuracy));
        out.push_str(&format!("| Baseline (no modules) | {} | - |\n", acc(&self.baseline)));
        out.push_str(&format!("| Full pipeline | - | {} |\n", acc(&self.full)));
        out.push_str("\nEnable-only deltas are against the baseline row; disable-only deltas against the full pipeline.\n");
        out
    }
}

impl SweepTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Visual information | Accuracy (%) | Evaluated | Skipped |\n|---|---|---|---|\n");
        for (i, r) in self.rows.iter().enumerate() {
            let acc = if r.score.count == 0 {
                "-".to_string()
            } else if i == 0 {
                pct(r.score.accuracy)
            } else {
                with_delta(r.score.accuracy, r.delta)
            };
            out.push_str(&format!("| {} | {} | {} | {} |\n", r.label, acc, r.score.count, r.skipped.len()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer_extract::Verdict;
    use crate::evaluation::score_run;
    use crate::evaluation::tests::{fake_trace, tagged};

    fn report() -> RunReport {
        let records = vec![tagged("a", "NAT"), tagged("b", "SOC"), tagged("c", "LAN")];
        let traces = vec![
            fake_trace("a", Verdict::Correct, &[ExpertModuleId::VisionIQAnalyst]),
            fake_trace("b", Verdict::Incorrect, &[]),
            fake_trace("c", Verdict::Unscored, &[]),
        ];
        score_run("demo", &traces, &records).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let back: RunReport = serde_json::from_str(&render_json(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_tags_times_metrics_rows() {
        let csv = render_csv(&report());
        // header + (3 tags + overall) × 4 metrics
        assert_eq!(csv.lines().count(), 1 + 4 * 4);
    }

    #[test]
    fn markdown_orders_tags() {
        let md = render_markdown(&report());
        assert!(md.contains("| Run | NAT | SOC | LAN | Avg |"));
        assert!(md.contains("| demo | 100.00 | 0.00 | 0.00 | 33.33 |"));
        assert!(md.contains("VisionIQ Analyst"));
    }

    #[test]
    fn delta_formatting() {
        assert_eq!(with_delta(0.8091, 0.0406), "80.91(+4.06)");
        assert_eq!(with_delta(0.5, -0.0186), "50.00(-1.86)");
        assert_eq!(with_delta(0.5, -0.00001), "50.00(+0.00)");
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        for f in ReportFormat::ALL {
            let p = emit_report(&report(), f, dir.path()).unwrap();
            assert!(p.ends_with(format!("report.{}", f.extension())));
        }
    }
}
