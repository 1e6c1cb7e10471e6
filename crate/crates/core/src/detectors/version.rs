use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleSpec};
use crate::structure::{block_end, opens_block, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SolcVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl SolcVersion {
    pub const fn new(major: u32, minor: u32, patch: u32) -> Self {
        SolcVersion { major, minor, patch }
    }
}

impl fmt::Display for SolcVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

fn pragma_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*pragma\s+solidity\s+([^;]*)").unwrap())
}

fn constraint_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(>=|<=|>|<|=|\^|~)?\s*v?(\d+)(?:\.(\d+))?(?:\.(\d+))?").unwrap())
}

/// Lowest bound of a version requirement such as `^0.4.15` or
/// `>=0.5.0 <0.6.0`; upper-bound-only requirements yield `None`.
pub fn lowest_bound(requirement: &str) -> Option<SolcVersion> {
    constraint_re()
        .captures_iter(requirement)
        .filter(|c| !matches!(c.get(1).map(|m| m.as_str()), Some("<") | Some("<=")))
        .filter_map(|c| {
            let part = |i: usize| c.get(i).map_or(Some(0), |m| m.as_str().parse().ok());
            Some(SolcVersion::new(part(2)?, part(3)?, part(4)?))
        })
        .min()
}

/// Version declared by the first `pragma solidity` line, if any.
pub fn declared_version(fs: &FormattedSource) -> Option<SolcVersion> {
    fs.lines
        .iter()
        .find_map(|l| pragma_re().captures(l))
        .and_then(|c| lowest_bound(&c[1]))
}

/// Caret pragmas, open-ended ranges, and a missing `pragma experimental`.
/// Findings on one line are merged into one. Also returns the declared
/// version for version-gated rules.
pub fn detect_compiler_version(
    rule: &RuleSpec,
    fs: &FormattedSource,
    prefilter: bool,
) -> (Vec<Finding>, Option<SolcVersion>) {
    let caret = rule.pattern(27);
    let open_range = rule.pattern(28);
    let experimental = rule.pattern(29);
    let mut out: Vec<Finding> = Vec::new();
    let mut has_experimental = false;
    let mut first_pragma = None;
    for (i, line) in fs.lines.iter().enumerate() {
        if !rule.admits(line, prefilter) {
            continue;
        }
        if first_pragma.is_none() && pragma_re().is_match(line) {
            first_pragma = Some(i);
        }
        has_experimental |= experimental.is_match(line);
        let msg = if caret.is_match(line) {
            "The caret accepts every later compiler release, whose semantics may change."
        } else if open_range.is_match(line) && !line.contains('<') {
            "The version range has no upper bound."
        } else {
            continue;
        };
        out.push(Finding::at(rule, fs, i, line).with_message(msg));
    }
    if !has_experimental && !fs.is_empty() {
        let at = first_pragma.unwrap_or(0);
        let msg = "No pragma experimental statement declares the experimental features in use.";
        match out.iter_mut().find(|f| f.formatted_line == at + 1) {
            Some(f) => f.message = format!("{} {}", f.message, msg),
            None => {
                out.push(Finding::at(rule, fs, at, &fs.lines[at]).with_message(msg));
                out.sort_by_key(|f| f.formatted_line);
            }
        }
    }
    (out, declared_version(fs))
}

const REFUSAL_REDUNDANT_SINCE: SolcVersion = SolcVersion::new(0, 4, 0);

/// Payable parameterless fallbacks whose body only refuses payment. Applies
/// to versions after 0.4.0, or when the version is unknown.
pub fn detect_redundant_refusal(
    rule: &RuleSpec,
    fs: &FormattedSource,
    version: Option<SolcVersion>,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    if version.is_some_and(|v| v <= REFUSAL_REDUNDANT_SINCE) {
        return Ok(Vec::new());
    }
    let fallback = rule.pattern(26);
    let refusal = rule.aux("refusal");
    let mut out = Vec::new();
    for (i, line) in fs.lines.iter().enumerate() {
        if !rule.admits(line, prefilter) || !fallback.is_match(line) || !opens_block(line) {
            continue;
        }
        let end = block_end(fs, i)?;
        if (i + 1..end).any(|j| refusal.is_match(&fs.lines[j])) {
            out.push(Finding::at(rule, fs, i, line));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::RuleCatalog;
    use crate::formatter::format_source;
    use crate::rule_engine::RuleId;

    fn version_findings(src: &str) -> (Vec<(usize, String)>, Option<SolcVersion>) {
        let fs = format_source("t.sol", src).unwrap();
        let rule = RuleCatalog::standard().rule(RuleId::CompilerVersion);
        let (f, v) = detect_compiler_version(rule, &fs, true);
        (f.into_iter().map(|f| (f.original_line, f.message)).collect(), v)
    }

    #[test]
    fn lowest_bound_forms() {
        assert_eq!(lowest_bound("^0.4.15"), Some(SolcVersion::new(0, 4, 15)));
        assert_eq!(lowest_bound(">=0.5.0 <0.6.0"), Some(SolcVersion::new(0, 5, 0)));
        assert_eq!(lowest_bound("0.5.0"), Some(SolcVersion::new(0, 5, 0)));
        assert_eq!(lowest_bound("<0.6.0"), None);
        assert_eq!(lowest_bound("0.4"), Some(SolcVersion::new(0, 4, 0)));
    }

    #[test]
    fn pragma_forms() {
        let exp = "pragma experimental ABIEncoderV2;\n";
        let (f, v) = version_findings(&format!("pragma solidity ^0.5.0;\n{exp}"));
        assert_eq!(f.len(), 1);
        assert!(f[0].1.contains("caret"));
        assert_eq!(v, Some(SolcVersion::new(0, 5, 0)));
        assert!(version_findings(&format!("pragma solidity 0.5.0;\n{exp}")).0.is_empty());
        assert!(version_findings(&format!("pragma solidity >=0.5.0 <0.6.0;\n{exp}")).0.is_empty());
        assert_eq!(version_findings(&format!("pragma solidity >=0.5.0;\n{exp}")).0.len(), 1);
    }

    #[test]
    fn missing_experimental_is_one_finding() {
        let (f, _) = version_findings("pragma solidity 0.5.0;\ncontract A {}");
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].0, 1);
        let (f, v) = version_findings("contract A {}");
        assert_eq!((f.len(), v), (1, None));
        let (f, _) = version_findings("pragma solidity ^0.4.15;\ncontract A {}");
        assert_eq!(f.len(), 1);
        assert!(f[0].1.contains("caret") && f[0].1.contains("experimental"));
        assert!(version_findings("").0.is_empty());
    }

    fn refusal(src: &str) -> usize {
        let fs = format_source("t.sol", src).unwrap();
        let rule = RuleCatalog::standard().rule(RuleId::RedundantRefusal);
        detect_redundant_refusal(rule, &fs, declared_version(&fs), true)
            .unwrap()
            .len()
    }

    #[test]
    fn redundant_refusal_version_gate() {
        let body = "function() external payable{\nrevert();\n}";
        assert_eq!(refusal(body), 1);
        assert_eq!(refusal(&format!("pragma solidity 0.4.24;\n{body}")), 1);
        assert_eq!(refusal(&format!("pragma solidity 0.3.6;\n{body}")), 0);
        assert_eq!(refusal(&format!("pragma solidity 0.4.0;\n{body}")), 0);
        assert_eq!(refusal("function() external payable{\nemit Paid(msg.value);\n}"), 0);
        assert_eq!(refusal("function() payable {\nthrow;\n}"), 1);
    }
}
