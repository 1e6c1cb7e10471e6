//! Line-insertion rewriting shared by the re-entrancy and overflow guards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::formatter::FormattedSource;
use crate::text::brace_counts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InsertionKind {
    VaccineA,
    VaccineB,
    VaccineC,
    VaccineD,
    DepositTest,
    GuardBefore,
    GuardAfter,
}

impl InsertionKind {
    pub fn label(self) -> &'static str {
        match self {
            InsertionKind::VaccineA => "A",
            InsertionKind::VaccineB => "B",
            InsertionKind::VaccineC => "C",
            InsertionKind::VaccineD => "D",
            InsertionKind::DepositTest => "deposit_test",
            InsertionKind::GuardBefore => "guard-before",
            InsertionKind::GuardAfter => "guard-after",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    /// 1-based line in the rewritten output.
    pub line: usize,
    pub kind: InsertionKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedSource {
    pub lines: Vec<String>,
    /// Ordered by output line.
    pub insertions: Vec<Insertion>,
    pub origin: FormattedSource,
    pub notices: Vec<String>,
}

impl InstrumentedSource {
    pub fn identity(origin: &FormattedSource, notices: Vec<String>) -> Self {
        InstrumentedSource {
            lines: origin.lines.clone(),
            insertions: Vec::new(),
            origin: origin.clone(),
            notices,
        }
    }

    /// The output with every recorded insertion removed.
    pub fn strip_insertions(&self) -> Vec<String> {
        let mut inserted = vec![false; self.lines.len()];
        for ins in &self.insertions {
            inserted[ins.line - 1] = true;
        }
        self.lines
            .iter()
            .zip(inserted)
            .filter(|(_, ins)| !ins)
            .map(|(l, _)| l.clone())
            .collect()
    }

    /// Source text, indented four spaces per block level.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut depth: usize = 0;
        for line in &self.lines {
            let (open, close) = brace_counts(line);
            let leading_close = line.trim_start().starts_with('}');
            let level = if leading_close { depth.saturating_sub(1) } else { depth };
            out.push_str(&"    ".repeat(level));
            out.push_str(line);
            out.push('\n');
            depth = (depth + open).saturating_sub(close);
        }
        out
    }

    /// The output as a formatted source, so another rewrite can run on it.
    /// Inserted lines map to the original line of the statement before them.
    pub fn to_formatted(&self) -> FormattedSource {
        let mut inserted = vec![false; self.lines.len()];
        for ins in &self.insertions {
            inserted[ins.line - 1] = true;
        }
        let mut next_orig = self.origin.line_map.iter();
        let mut last = 1;
        let line_map = inserted
            .iter()
            .map(|&ins| {
                if !ins {
                    last = *next_orig.next().unwrap_or(&last);
                }
                last
            })
            .collect();
        FormattedSource {
            origin: self.origin.origin.clone(),
            lines: self.lines.clone(),
            line_map,
            original_lines: self.origin.original_lines,
        }
    }

    /// Applies `second` (which ran on `self.to_formatted()`) on top of
    /// `self`, keeping both insertion records in the final numbering.
    pub fn compose(self, second: InstrumentedSource) -> InstrumentedSource {
        // Map each line of `self` to its position in `second`'s output.
        let mut added_before = vec![0usize; self.lines.len() + 1];
        let mut shift = 0;
        let mut src = 0;
        let second_ins: std::collections::BTreeSet<usize> =
            second.insertions.iter().map(|i| i.line).collect();
        for out_line in 1..=second.lines.len() {
            if second_ins.contains(&out_line) {
                shift += 1;
            } else {
                added_before[src] = shift;
                src += 1;
            }
        }
        let mut insertions: Vec<Insertion> = self
            .insertions
            .into_iter()
            .map(|mut i| {
                i.line += added_before[i.line - 1];
                i
            })
            .chain(second.insertions)
            .collect();
        insertions.sort_by_key(|i| i.line);
        let mut notices = self.notices;
        notices.extend(second.notices);
        InstrumentedSource {
            lines: second.lines,
            insertions,
            origin: self.origin,
            notices,
        }
    }
}

/// Collects insertions keyed by origin line, then materializes them.
#[derive(Debug, Default)]
pub(crate) struct Plan {
    before: BTreeMap<usize, Vec<(InsertionKind, String)>>,
    after: BTreeMap<usize, Vec<(InsertionKind, String)>>,
}

impl Plan {
    pub(crate) fn before(&mut self, idx: usize, kind: InsertionKind, text: impl Into<String>) {
        self.before.entry(idx).or_default().push((kind, text.into()));
    }

    pub(crate) fn after(&mut self, idx: usize, kind: InsertionKind, text: impl Into<String>) {
        self.after.entry(idx).or_default().push((kind, text.into()));
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.before.is_empty() && self.after.is_empty()
    }

    pub(crate) fn apply(self, origin: &FormattedSource, notices: Vec<String>) -> InstrumentedSource {
        let mut lines = Vec::with_capacity(origin.len());
        let mut insertions = Vec::new();
        let mut emit = |lines: &mut Vec<String>, items: Option<&Vec<(InsertionKind, String)>>| {
            for (kind, text) in items.into_iter().flatten() {
                lines.push(text.clone());
                insertions.push(Insertion {
                    line: lines.len(),
                    kind: *kind,
                    text: text.clone(),
                });
            }
        };
        for (i, line) in origin.lines.iter().enumerate() {
            emit(&mut lines, self.before.get(&i));
            lines.push(line.clone());
            emit(&mut lines, self.after.get(&i));
        }
        InstrumentedSource {
            lines,
            insertions,
            origin: origin.clone(),
            notices,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formatter::format_source;

    #[test]
    fn plan_orders_after_then_before_between_lines() {
        let fs = format_source("t.sol", "a;\nb;").unwrap();
        let mut plan = Plan::default();
        plan.before(1, InsertionKind::VaccineB, "B;");
        plan.after(0, InsertionKind::VaccineC, "C;");
        plan.before(0, InsertionKind::VaccineA, "A;");
        let out = plan.apply(&fs, Vec::new());
        assert_eq!(out.lines, vec!["A;", "a;", "C;", "B;", "b;"]);
        assert_eq!(out.insertions.iter().map(|i| i.line).collect::<Vec<_>>(), vec![1, 3, 4]);
        assert_eq!(out.strip_insertions(), fs.lines);
    }

    #[test]
    fn render_indents_blocks() {
        let fs = format_source("t.sol", "contract A {\nfunction f() {\nx;\n}\n}").unwrap();
        let out = InstrumentedSource::identity(&fs, Vec::new());
        assert_eq!(out.render(), "contract A {\n    function f() {\n        x;\n    }\n}\n");
    }

    #[test]
    fn compose_renumbers_first_insertions() {
        let fs = format_source("t.sol", "a;\nb;\nc;").unwrap();
        let mut p1 = Plan::default();
        p1.after(1, InsertionKind::VaccineC, "x;");
        let first = p1.apply(&fs, Vec::new());
        let mut p2 = Plan::default();
        p2.before(0, InsertionKind::GuardBefore, "g;");
        let second = p2.apply(&first.to_formatted(), Vec::new());
        let both = first.compose(second);
        assert_eq!(both.lines, vec!["g;", "a;", "b;", "x;", "c;"]);
        assert_eq!(both.insertions.iter().map(|i| i.line).collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(both.strip_insertions(), fs.lines);
    }
}
