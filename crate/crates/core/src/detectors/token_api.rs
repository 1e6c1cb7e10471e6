use std::collections::{BTreeMap, BTreeSet};

use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleId, RuleSpec};
use crate::structure::{contracts, functions, AnalysisError};

use super::RuleCatalog;

/// Contract names, their declared bases and which of them are token-standard
/// roots, gathered over one file or a whole batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InheritanceIndex {
    parents: BTreeMap<String, BTreeSet<String>>,
    roots: BTreeSet<String>,
}

impl InheritanceIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes every contract and interface declared in `fs`.
    pub fn add_source(&mut self, fs: &FormattedSource) -> Result<(), AnalysisError> {
        let root = RuleCatalog::standard()
            .rule(RuleId::TokenApiViolation)
            .pattern(21);
        for c in contracts(fs)? {
            if root.is_match(&fs.lines[c.header]) {
                self.roots.insert(c.name.clone());
            }
            self.parents
                .entry(c.name)
                .or_default()
                .extend(c.parents);
        }
        Ok(())
    }

    pub fn from_sources<'a>(
        sources: impl IntoIterator<Item = &'a FormattedSource>,
    ) -> Result<Self, AnalysisError> {
        let mut idx = Self::new();
        for fs in sources {
            idx.add_source(fs)?;
        }
        Ok(idx)
    }

    pub fn is_root(&self, name: &str) -> bool {
        self.roots.contains(name)
    }

    /// Whether `name` is a root or inherits from one, transitively. Bases
    /// that were never declared in the indexed sources are unknown and do
    /// not count.
    pub fn in_closure(&self, name: &str) -> bool {
        self.in_closure_with(&InheritanceIndex::default(), name)
    }

    /// As `in_closure`, over the union of `self` and `other`.
    pub fn in_closure_with(&self, other: &InheritanceIndex, name: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![name];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if self.roots.contains(n) || other.roots.contains(n) {
                return true;
            }
            for idx in [self, other] {
                if let Some(ps) = idx.parents.get(n) {
                    stack.extend(ps.iter().map(String::as_str));
                }
            }
        }
        false
    }
}

/// Token-standard functions that throw instead of returning false.
pub fn detect_token_api_violation(
    rule: &RuleSpec,
    fs: &FormattedSource,
    batch: Option<&InheritanceIndex>,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let local = InheritanceIndex::from_sources([fs])?;
    let empty = InheritanceIndex::default();
    let batch = batch.unwrap_or(&empty);
    let api = rule.pattern(22);
    let throwing = rule.aux("throwing");
    let mut out = Vec::new();
    for c in contracts(fs)? {
        if !local.in_closure_with(batch, &c.name) {
            continue;
        }
        for f in functions(fs, &c)? {
            let header = &fs.lines[f.header];
            if f.end.is_none() || !rule.admits(header, prefilter) || !api.is_match(header) {
                continue;
            }
            if let Some(i) = f.body().find(|&i| throwing.is_match(&fs.lines[i])) {
                let finding = Finding::at(rule, fs, f.header, header).with_message(format!(
                    "{}.{} throws (line {}) where the token standard expects a false return.",
                    c.name, f.name, fs.line_map[i]
                ));
                out.push(finding);
            }
        }
    }
    Ok(out)
}
