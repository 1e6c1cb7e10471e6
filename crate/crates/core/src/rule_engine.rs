//! Two-stage detection: a literal keyword prefilter, then regex matching.
//!
//! A rule's keywords must cover every pattern it triggers on: any line a
//! pattern can match contains at least one keyword. That makes the prefilter a
//! pure speed-up, which `ScanContext::prefilter` lets tests switch off.

use std::fmt;
use std::time::{Duration, Instant};

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::detectors::{self, InheritanceIndex, RuleCatalog};
use crate::formatter::FormattedSource;
use crate::loop_analyzer::GasModel;
use crate::structure::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    BalanceEquality,
    MishandledExceptions,
    DosExternalContract,
    TxOriginAuth,
    MissingConstructor,
    LockedMoney,
    UnsafeTypeInference,
    ByteArray,
    CostlyLoop,
    TimestampDependence,
    TokenApiViolation,
    FixedPointType,
    PrivateModifier,
    RedundantRefusal,
    CompilerVersion,
    StyleGuide,
    IntegerDivision,
    ImplicitVisibility,
}

impl RuleId {
    pub const ALL: [RuleId; 18] = [
        RuleId::BalanceEquality,
        RuleId::MishandledExceptions,
        RuleId::DosExternalContract,
        RuleId::TxOriginAuth,
        RuleId::MissingConstructor,
        RuleId::LockedMoney,
        RuleId::UnsafeTypeInference,
        RuleId::ByteArray,
        RuleId::CostlyLoop,
        RuleId::TimestampDependence,
        RuleId::TokenApiViolation,
        RuleId::FixedPointType,
        RuleId::PrivateModifier,
        RuleId::RedundantRefusal,
        RuleId::CompilerVersion,
        RuleId::StyleGuide,
        RuleId::IntegerDivision,
        RuleId::ImplicitVisibility,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::BalanceEquality => "balance-equality",
            RuleId::MishandledExceptions => "mishandled-exceptions",
            RuleId::DosExternalContract => "dos-external-contract",
            RuleId::TxOriginAuth => "tx-origin-auth",
            RuleId::MissingConstructor => "missing-constructor",
            RuleId::LockedMoney => "locked-money",
            RuleId::UnsafeTypeInference => "unsafe-type-inference",
            RuleId::ByteArray => "byte-array",
            RuleId::CostlyLoop => "costly-loop",
            RuleId::TimestampDependence => "timestamp-dependence",
            RuleId::TokenApiViolation => "token-api-violation",
            RuleId::FixedPointType => "fixed-point-type",
            RuleId::PrivateModifier => "private-modifier",
            RuleId::RedundantRefusal => "redundant-refusal",
            RuleId::CompilerVersion => "compiler-version",
            RuleId::StyleGuide => "style-guide",
            RuleId::IntegerDivision => "integer-division",
            RuleId::ImplicitVisibility => "implicit-visibility",
        }
    }

    /// 1-based position in the catalog; the report's problem number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn parse(s: &str) -> Option<RuleId> {
        RuleId::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// High: security problem. Medium: performance problem. Low: hidden coding
/// threat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    High,
    Medium,
    Low,
}

impl Severity {
    pub fn category(self) -> &'static str {
        match self {
            Severity::High => "security",
            Severity::Medium => "performance",
            Severity::Low => "coding threat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Logic {
    PerLine,
    /// Consults several lines or contract scope; run by a dedicated detector.
    Compound,
}

/// A compiled catalog pattern. `ordinal` numbers the 41 catalog patterns;
/// auxiliary patterns a rule needs beyond those carry `None`.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub ordinal: Option<u8>,
    pub name: &'static str,
    pub regex: Regex,
}

impl Pattern {
    pub fn is_match(&self, line: &str) -> bool {
        self.regex.is_match(line)
    }
}

#[derive(Debug, Clone)]
pub struct RuleSpec {
    pub id: RuleId,
    pub title: &'static str,
    pub severity: Severity,
    pub keywords: &'static [&'static str],
    /// A line is a hit if any of these match...
    pub patterns: Vec<Pattern>,
    /// ...and none of these do.
    pub exemptions: Vec<Pattern>,
    /// Extra acceptance test on the first trigger match.
    pub refine: Option<fn(&Captures<'_>) -> bool>,
    pub logic: Logic,
    pub description: &'static str,
    pub suggestion: &'static str,
}

impl RuleSpec {
    pub fn pattern(&self, ordinal: u8) -> &Pattern {
        self.patterns
            .iter()
            .chain(&self.exemptions)
            .find(|p| p.ordinal == Some(ordinal))
            .unwrap_or_else(|| panic!("{} has no pattern {ordinal}", self.id))
    }

    pub fn aux(&self, name: &str) -> &Pattern {
        self.patterns
            .iter()
            .chain(&self.exemptions)
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("{} has no pattern {name}", self.id))
    }

    /// Prefilter gate for this rule.
    pub fn admits(&self, line: &str, prefilter: bool) -> bool {
        !prefilter || keyword_filter(line, self.keywords)
    }

    /// Applies triggers, refinement and exemptions to one line; returns the
    /// matched excerpt on a hit.
    pub fn hit<'l>(&self, line: &'l str, prefilter: bool) -> Option<&'l str> {
        if !self.admits(line, prefilter) {
            return None;
        }
        let m = self.patterns.iter().find_map(|p| {
            let caps = p.regex.captures(line)?;
            if let Some(refine) = self.refine {
                if !refine(&caps) {
                    return None;
                }
            }
            Some(caps.get(0).unwrap().as_str())
        })?;
        if self.exemptions.iter().any(|p| p.is_match(line)) {
            return None;
        }
        Some(m)
    }
}

pub fn keyword_filter(line: &str, keywords: &[&str]) -> bool {
    keywords.iter().any(|k| line.contains(k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: RuleId,
    /// 1-based formatted line.
    pub formatted_line: usize,
    /// 1-based original line where the statement begins.
    pub original_line: usize,
    pub excerpt: String,
    pub message: String,
    pub suggestion: String,
    pub severity: Severity,
}

impl Finding {
    /// Builds a finding at 0-based formatted index `idx` with the rule's
    /// standard message.
    pub fn at(rule: &RuleSpec, fs: &FormattedSource, idx: usize, excerpt: &str) -> Self {
        Finding {
            rule_id: rule.id,
            formatted_line: idx + 1,
            original_line: fs.line_map[idx],
            excerpt: excerpt.trim().to_string(),
            message: rule.description.to_string(),
            suggestion: rule.suggestion.to_string(),
            severity: rule.severity,
        }
    }

    pub fn with_message(mut self, message: impl Into<String>) -> Self {
        self.message = message.into();
        self
    }
}

/// Per-run settings shared by all rules.
#[derive(Debug, Clone, Copy)]
pub struct ScanContext<'a> {
    pub gas: GasModel,
    /// Inheritance across the batch; `None` means this file only.
    pub inheritance: Option<&'a InheritanceIndex>,
    pub prefilter: bool,
}

impl Default for ScanContext<'_> {
    fn default() -> Self {
        ScanContext {
            gas: GasModel::default(),
            inheritance: None,
            prefilter: true,
        }
    }
}

/// Runs a per-line rule. One finding per line, in line order.
pub fn match_rule(rule: &RuleSpec, fs: &FormattedSource, prefilter: bool) -> Vec<Finding> {
    debug_assert_eq!(rule.logic, Logic::PerLine);
    fs.lines
        .iter()
        .enumerate()
        .filter_map(|(i, line)| rule.hit(line, prefilter).map(|m| Finding::at(rule, fs, i, m)))
        .collect()
}

/// Monotonic time source for detection timing; injectable so reports can be
/// pinned in tests.
pub trait Clock: Send + Sync {
    fn elapsed_since(&self, start: Instant) -> Duration;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn elapsed_since(&self, start: Instant) -> Duration {
        start.elapsed()
    }
}

/// Reports the same elapsed time for every measurement.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub Duration);

impl Clock for FixedClock {
    fn elapsed_since(&self, _start: Instant) -> Duration {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub path: String,
    /// Finding count per rule, in catalog order, all 18 present.
    pub counts: Vec<(RuleId, usize)>,
    /// Sorted by rule then formatted line.
    pub findings: Vec<Finding>,
    pub elapsed: f64,
    pub total_lines: usize,
}

impl DetectionResult {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, n)| n).sum()
    }

    pub fn count(&self, rule: RuleId) -> usize {
        self.counts
            .iter()
            .find(|(r, _)| *r == rule)
            .map_or(0, |(_, n)| *n)
    }

    pub fn for_rule(&self, rule: RuleId) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(move |f| f.rule_id == rule)
    }
}

/// Runs one rule of either kind.
pub fn run_rule(
    rule: &RuleSpec,
    fs: &FormattedSource,
    ctx: &ScanContext<'_>,
) -> Result<Vec<Finding>, AnalysisError> {
    match rule.logic {
        Logic::PerLine => Ok(match_rule(rule, fs, ctx.prefilter)),
        Logic::Compound => detectors::run_compound(rule, fs, ctx),
    }
}

/// Runs the full catalog over one formatted file.
pub fn run_all(
    catalog: &RuleCatalog,
    fs: &FormattedSource,
    ctx: &ScanContext<'_>,
    clock: &dyn Clock,
) -> Result<DetectionResult, AnalysisError> {
    let start = Instant::now();
    let mut findings = Vec::new();
    let mut counts = Vec::with_capacity(catalog.rules.len());
    for rule in &catalog.rules {
        let mut hits = run_rule(rule, fs, ctx)?;
        hits.sort_by_key(|f| f.formatted_line);
        hits.dedup_by_key(|f| f.formatted_line);
        counts.push((rule.id, hits.len()));
        findings.extend(hits);
    }
    Ok(DetectionResult {
        path: fs.origin.display().to_string(),
        counts,
        findings,
        elapsed: clock.elapsed_since(start).as_secs_f64(),
        total_lines: fs.original_lines,
    })
}
