//! Detection reports and corpus metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::RuleCatalog;
use crate::rule_engine::{DetectionResult, RuleId, Severity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRef {
    pub original: usize,
    pub formatted: usize,
    pub excerpt: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub problem_number: usize,
    pub rule_id: RuleId,
    pub name: String,
    pub severity: Severity,
    pub line_numbers: Vec<LineRef>,
    pub description: String,
    pub suggestion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub file_path: String,
    pub original_line_count: usize,
    /// Seconds.
    pub detection_time: f64,
    pub total_problem_count: usize,
    /// One per rule in catalog order, empty ones included.
    pub sections: Vec<ReportSection>,
}

impl DetectionReport {
    pub fn from_result(result: &DetectionResult, catalog: &RuleCatalog) -> DetectionReport {
        let sections: Vec<ReportSection> = catalog
            .rules
            .iter()
            .map(|rule| ReportSection {
                problem_number: rule.id.number(),
                rule_id: rule.id,
                name: rule.title.to_string(),
                severity: rule.severity,
                line_numbers: result
                    .for_rule(rule.id)
                    .map(|f| LineRef {
                        original: f.original_line,
                        formatted: f.formatted_line,
                        excerpt: f.excerpt.clone(),
                        message: f.message.clone(),
                    })
                    .collect(),
                description: rule.description.to_string(),
                suggestion: rule.suggestion.to_string(),
            })
            .collect();
        DetectionReport {
            file_path: result.path.clone(),
            original_line_count: result.total_lines,
            detection_time: result.elapsed,
            total_problem_count: sections.iter().map(|s| s.line_numbers.len()).sum(),
            sections,
        }
    }

    /// Sum over sections; equals `total_problem_count` for any report built
    /// by `from_result`.
    pub fn recount(&self) -> usize {
        self.sections.iter().map(|s| s.line_numbers.len()).sum()
    }
}

pub fn render_text(r: &DetectionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Detect Report");
    let _ = writeln!(out, "    Reporting information");
    let _ = writeln!(out, "        Smart contract file path: {}", r.file_path);
    let _ = writeln!(out, "        Number of lines of original contract code: {}", r.original_line_count);
    let _ = writeln!(out, "        Detection time: {:.6} s", r.detection_time);
    let _ = writeln!(out, "        Total number of problematic statements: {}", r.total_problem_count);
    for s in &r.sections {
        let _ = writeln!(out, "    Details of the problem");
        let _ = writeln!(out, "        Problem number: {}", s.problem_number);
        let _ = writeln!(out, "        Problem name: {} ({})", s.name, s.rule_id);
        let _ = writeln!(out, "        Severity: {:?} ({})", s.severity, s.severity.category());
        let lines: Vec<String> = s.line_numbers.iter().map(|l| l.original.to_string()).collect();
        let _ = writeln!(
            out,
            "        Problem code line number: {}",
            if lines.is_empty() { "none".to_string() } else { lines.join(", ") }
        );
        for l in &s.line_numbers {
            let _ = writeln!(out, "            line {} (formatted {}): {}", l.original, l.formatted, l.excerpt);
            if l.message != s.description {
                let _ = writeln!(out, "                {}", l.message);
            }
        }
        let _ = writeln!(out, "        Problem description: {}", s.description);
        let _ = writeln!(out, "        Suggested modifications: {}", s.suggestion);
    }
    out
}

pub const BATCH_SEPARATOR: &str =
    "================================================================================";

/// Reports one after another, each preceded by a separator line.
pub fn render_text_batch(reports: &[DetectionReport]) -> String {
    reports
        .iter()
        .map(|r| format!("{BATCH_SEPARATOR}\n{}", render_text(r)))
        .collect()
}

pub fn render_machine(r: &DetectionReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

pub fn parse_machine(s: &str) -> serde_json::Result<DetectionReport> {
    serde_json::from_str(s)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no detection results to aggregate")]
    EmptyCorpus,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("annotation line {line}: {message}")]
pub struct AnnotationError {
    pub line: usize,
    pub message: String,
}

/// Ground truth: one `<file> <rule_id> <original_line>` record per line.
/// Blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations {
    pub records: BTreeSet<(String, RuleId, usize)>,
}

impl Annotations {
    pub fn parse(text: &str) -> Result<Annotations, AnnotationError> {
        let mut records = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AnnotationError { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [file, rule, ln] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            let rule = RuleId::parse(rule).ok_or_else(|| err(format!("unknown rule id {rule:?}")))?;
            let ln: usize = ln.parse().map_err(|_| err(format!("bad line number {ln:?}")))?;
            records.insert((file.to_string(), rule, ln));
        }
        Ok(Annotations { records })
    }

    /// Lines annotated for `rule` in the file at `path`.
    fn lines_for(&self, path: &str, rule: RuleId) -> BTreeSet<usize> {
        self.records
            .iter()
            .filter(|(f, r, _)| *r == rule && same_file(f, path))
            .map(|(_, _, l)| *l)
            .collect()
    }
}

/// Whether one path is a suffix of the other at a component boundary.
pub fn same_file(a: &str, b: &str) -> bool {
    let (a, b) = (Path::new(a), Path::new(b));
    a.ends_with(b) || b.ends_with(a)
}

/// Standard confusion counts. Some evaluation tables label missed
/// problems "FP" and spurious reports "FN"; `from_table_labels` converts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: usize,
    /// Annotated but not reported.
    pub missed: usize,
    /// Reported but not annotated.
    pub spurious: usize,
}

impl Tally {
    pub fn from_table_labels(tp: usize, fp: usize, fn_: usize) -> Tally {
        Tally { tp, missed: fp, spurious: fn_ }
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.missed)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.spurious)
    }

    fn add(&mut self, o: Tally) {
        self.tp += o.tp;
        self.missed += o.missed;
        self.spurious += o.spurious;
    }
}

fn ratio(n: usize, d: usize) -> Option<f64> {
    (d != 0).then(|| n as f64 / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub contracts: usize,
    pub total_lines: usize,
    pub elapsed: f64,
    /// Lines per second; `None` when no time elapsed.
    pub rps: Option<f64>,
    /// Fraction of files with at least one finding, per rule.
    pub proportion: BTreeMap<RuleId, f64>,
    /// Present when ground truth was supplied.
    pub tallies: Option<BTreeMap<RuleId, Tally>>,
}

impl CorpusMetrics {
    pub fn overall(&self) -> Option<Tally> {
        self.tallies.as_ref().map(|t| {
            t.values().fold(Tally::default(), |mut acc, x| {
                acc.add(*x);
                acc
            })
        })
    }
}

pub fn compute_metrics(
    results: &[DetectionResult],
    total_elapsed: f64,
    annotations: Option<&Annotations>,
) -> Result<CorpusMetrics, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = results.len();
    let total_lines = results.iter().map(|r| r.total_lines).sum();
    let proportion = RuleId::ALL
        .iter()
        .map(|&rule| {
            let hit = results.iter().filter(|r| r.count(rule) > 0).count();
            (rule, hit as f64 / n as f64)
        })
        .collect();
    let tallies = annotations.map(|a| {
        RuleId::ALL
            .iter()
            .map(|&rule| {
                let mut t = Tally::default();
                for r in results {
                    let found: BTreeSet<usize> = r.for_rule(rule).map(|f| f.original_line).collect();
                    let expected = a.lines_for(&r.path, rule);
                    t.add(Tally {
                        tp: found.intersection(&expected).count(),
                        missed: expected.difference(&found).count(),
                        spurious: found.difference(&expected).count(),
                    });
                }
                (rule, t)
            })
            .collect()
    });
    Ok(CorpusMetrics {
        contracts: n,
        total_lines,
        elapsed: total_elapsed,
        rps: (total_elapsed > 0.0).then(|| total_lines as f64 / total_elapsed),
        proportion,
        tallies,
    })
}

/// One decimal place, or N/A when undefined.
pub fn percent(x: Option<f64>) -> String {
    x.map_or_else(|| "N/A".to_string(), |v| format!("{:.1}%", v * 100.0))
}

pub fn render_metrics(m: &CorpusMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Contracts: {}", m.contracts);
    let _ = writeln!(out, "Lines: {}", m.total_lines);
    let _ = writeln!(out, "Elapsed: {:.3} s", m.elapsed);
    let _ = writeln!(
        out,
        "Lines per second: {}",
        m.rps.map_or_else(|| "N/A".to_string(), |v| format!("{v:.0}"))
    );
    let _ = write!(out, "{:<24} {:>10}", "rule", "proportion");
    if m.tallies.is_some() {
        let _ = write!(out, " {:>5} {:>6} {:>8} {:>7} {:>9}", "tp", "missed", "spurious", "recall", "precision");
    }
    out.push('\n');
    for (rule, p) in &m.proportion {
        let _ = write!(out, "{:<24} {:>9.1}%", rule.as_str(), p * 100.0);
        if let Some(t) = m.tallies.as_ref().and_then(|t| t.get(rule)) {
            let _ = write!(
                out,
                " {:>5} {:>6} {:>8} {:>7} {:>9}",
                t.tp,
                t.missed,
                t.spurious,
                percent(t.recall()),
                percent(t.precision())
            );
        }
        out.push('\n');
    }
    if let Some(t) = m.overall() {
        let _ = writeln!(out, "Overall recall: {}, precision: {}", percent(t.recall()), percent(t.precision()));
    }
    out
}
