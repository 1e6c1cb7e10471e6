//! Costly-loop detection: condition shape plus a statement-count gas model.
//!
//! A loop is costly when its condition depends on something other than its
//! own counter and literals, or when its literal bounds make it execute more
//! statements than one affordable transaction can pay for.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleSpec};
use crate::structure::{block_end, AnalysisError};
use crate::text::{code_only, paren_group};

pub const DEFAULT_EXPENSIVE_TX_GAS: u64 = 69301;
pub const DEFAULT_AVE_GAS_PER_STMT: u64 = 2928;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasModel {
    pub expensive_tx_gas: u64,
    pub ave_gas_per_stmt: u64,
    /// Replaces the derived limit when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stmt_limit_override: Option<u64>,
}

impl Default for GasModel {
    fn default() -> Self {
        GasModel {
            expensive_tx_gas: DEFAULT_EXPENSIVE_TX_GAS,
            ave_gas_per_stmt: DEFAULT_AVE_GAS_PER_STMT,
            stmt_limit_override: None,
        }
    }
}

impl GasModel {
    pub fn with_limit(mut self, limit: u64) -> Self {
        self.stmt_limit_override = Some(limit);
        self
    }

    /// Loops executing strictly more statements than this are costly.
    pub fn stmt_limit(&self) -> Result<u64, AnalysisError> {
        match self.stmt_limit_override {
            Some(limit) => Ok(limit),
            None => derive_stmt_limit(self),
        }
    }
}

/// Largest `L` with `ave_gas_per_stmt * L <= expensive_tx_gas`, so a loop
/// is costly exactly when its statements need more gas than the budget.
pub fn derive_stmt_limit(gm: &GasModel) -> Result<u64, AnalysisError> {
    if gm.ave_gas_per_stmt == 0 {
        return Err(AnalysisError::ZeroAverageGas);
    }
    Ok(gm.expensive_tx_gas / gm.ave_gas_per_stmt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopKind {
    For,
    While,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSite {
    /// 0-based line holding the loop condition. For `do ... while` this is
    /// the trailing `while (...);` line.
    pub header_line: usize,
    pub kind: LoopKind,
    pub do_while: bool,
    /// Text inside the header parentheses.
    pub header: String,
    /// Lines whose statements the loop repeats. A braceless loop repeats
    /// the statement on its own header line.
    pub body_span: Range<usize>,
    /// First and last line of the whole construct.
    pub extent: (usize, usize),
    pub literal_trip_count: Option<u64>,
    /// `;`-terminated lines in the body, nested loops included once.
    pub body_stmt_count: u64,
    /// As `body_stmt_count` but without lines belonging to nested loops.
    pub direct_stmt_count: u64,
    /// Indices of directly nested sites.
    pub children: Vec<usize>,
}

impl LoopSite {
    /// Condition clause of the header.
    pub fn condition(&self) -> &str {
        match self.kind {
            LoopKind::While => &self.header,
            LoopKind::For => for_clauses(&self.header).map_or("", |c| c.1),
        }
    }

    /// Variables assigned in the `for` init clause.
    pub fn induction_vars(&self) -> Vec<String> {
        let Some((init, _, _)) = (self.kind == LoopKind::For)
            .then(|| for_clauses(&self.header))
            .flatten()
        else {
            return Vec::new();
        };
        assigned_re()
            .captures_iter(init)
            .map(|c| c[1].to_string())
            .collect()
    }

    /// The header rebuilt in canonical form for the condition patterns.
    pub fn canonical_header(&self) -> String {
        match self.kind {
            LoopKind::While => format!("while ({})", self.header.trim()),
            LoopKind::For => match for_clauses(&self.header) {
                Some((i, c, n)) => format!("for ({};{};{})", i.trim(), c.trim(), n.trim()),
                None => format!("for ({})", self.header.trim()),
            },
        }
    }
}

fn for_clauses(header: &str) -> Option<(&str, &str, &str)> {
    let mut parts = header.splitn(3, ';');
    Some((parts.next()?, parts.next()?, parts.next()?))
}

fn loop_kw_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(for|while)\s*\(").unwrap())
}

fn do_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*do\s*\{\s*$").unwrap())
}

fn assigned_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_$][\w$]*)\s*(?:[-+*/%]?=)(?:[^=]|$)").unwrap())
}

/// Blanks ASCII string-literal contents so keywords inside strings are
/// ignored; byte offsets are preserved.
fn is_statement(line: &str) -> bool {
    line.trim_end().ends_with(';')
}

struct Header {
    kind: LoopKind,
    inner: String,
    rest: String,
}

fn parse_header(line: &str) -> Option<Header> {
    let code = code_only(line);
    let m = loop_kw_re().captures(&code)?;
    let kind = if &m[1] == "for" { LoopKind::For } else { LoopKind::While };
    let open = m.get(0).unwrap().end() - 1;
    let (_, after) = paren_group(&code, open)?;
    Some(Header {
        kind,
        inner: line[open + 1..after - 1].to_string(),
        rest: line[after..].trim().to_string(),
    })
}

/// Every `for`, `while` and `do ... while` loop, with nesting resolved.
pub fn find_loops(fs: &FormattedSource) -> Result<Vec<LoopSite>, AnalysisError> {
    let mut sites = Vec::new();
    let mut do_conditions = std::collections::BTreeSet::new();
    for (i, line) in fs.lines.iter().enumerate() {
        if !do_re().is_match(line) {
            continue;
        }
        let end = block_end(fs, i)?;
        let Some(cond_line) = fs.lines.get(end + 1) else { continue };
        if let Some(h) = parse_header(cond_line).filter(|h| h.kind == LoopKind::While && h.rest == ";") {
            do_conditions.insert(end + 1);
            sites.push(new_site(end + 1, h, true, i + 1..end, (i, end + 1)));
        }
    }
    for (i, line) in fs.lines.iter().enumerate() {
        if do_conditions.contains(&i) {
            continue;
        }
        let Some(h) = parse_header(line) else { continue };
        let (body, extent) = if line.trim_end().ends_with('{') {
            let end = block_end(fs, i)?;
            (i + 1..end, (i, end))
        } else {
            (i..i + 1, (i, i))
        };
        sites.push(new_site(i, h, false, body, extent));
    }
    sites.sort_by_key(|s| (s.extent.0, std::cmp::Reverse(s.extent.1)));
    resolve_nesting(&mut sites, fs);
    Ok(sites)
}

fn new_site(header_line: usize, h: Header, do_while: bool, body_span: Range<usize>, extent: (usize, usize)) -> LoopSite {
    let literal_trip_count = match h.kind {
        LoopKind::For => literal_trip_count(&h.inner),
        LoopKind::While => None,
    };
    LoopSite {
        header_line,
        kind: h.kind,
        do_while,
        header: h.inner,
        body_span,
        extent,
        literal_trip_count,
        body_stmt_count: 0,
        direct_stmt_count: 0,
        children: Vec::new(),
    }
}

fn resolve_nesting(sites: &mut [LoopSite], fs: &FormattedSource) {
    // Sites are sorted by start, outermost first, so an enclosing loop is
    // always on the stack when its nested loops are visited.
    let inside = |outer: &LoopSite, inner: &LoopSite| {
        outer.body_span.contains(&inner.extent.0) && outer.body_span.contains(&inner.extent.1)
    };
    let mut stack: Vec<usize> = Vec::new();
    for c in 0..sites.len() {
        while let Some(&top) = stack.last() {
            if inside(&sites[top], &sites[c]) {
                break;
            }
            stack.pop();
        }
        if let Some(&parent) = stack.last() {
            sites[parent].children.push(c);
        }
        stack.push(c);
    }
    let stmts = |r: Range<usize>| r.filter(|&i| is_statement(&fs.lines[i])).count() as u64;
    for p in 0..sites.len() {
        let total = stmts(sites[p].body_span.clone());
        let nested: u64 = sites[p]
            .children
            .iter()
            .map(|&c| stmts(sites[c].extent.0..sites[c].extent.1 + 1))
            .sum();
        sites[p].body_stmt_count = total;
        sites[p].direct_stmt_count = total - nested;
    }
}

fn trip_re() -> &'static (Regex, Regex, Regex) {
    static RE: OnceLock<(Regex, Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"^\s*(?:[A-Za-z_$][\w$]*\s+)?([A-Za-z_$][\w$]*)\s*=\s*(\d+)\s*$").unwrap(),
            Regex::new(r"^\s*([A-Za-z_$][\w$]*)\s*(<=|<|>=|>)\s*(\d+)\s*$").unwrap(),
            Regex::new(r"^\s*(?:([A-Za-z_$][\w$]*)\s*(\+\+|--)|(\+\+|--)\s*([A-Za-z_$][\w$]*)|([A-Za-z_$][\w$]*)\s*(\+=|-=)\s*(\d+))\s*$")
                .unwrap(),
        )
    })
}

/// Exact iteration count of a canonical counting loop
/// `for (T i = A; i OP B; STEP)` with integer literals; `None` for any
/// other shape or a loop that never terminates.
pub fn literal_trip_count(header: &str) -> Option<u64> {
    let (init, cond, step) = for_clauses(header)?;
    let (init_re, cond_re, step_re) = trip_re();
    let ic = init_re.captures(init)?;
    let var = &ic[1];
    let start: u128 = ic[2].parse().ok()?;
    let cc = cond_re.captures(cond)?;
    if &cc[1] != var {
        return None;
    }
    let bound: u128 = cc[3].parse().ok()?;
    let sc = step_re.captures(step)?;
    let (name, up, k): (&str, bool, u128) = if let Some(v) = sc.get(1) {
        (v.as_str(), &sc[2] == "++", 1)
    } else if let Some(v) = sc.get(4) {
        (v.as_str(), &sc[3] == "++", 1)
    } else {
        (&sc[5], &sc[6] == "+=", sc[7].parse().ok()?)
    };
    if name != var || k == 0 {
        return None;
    }
    let op = &cc[2];
    let holds = match op {
        "<" => start < bound,
        "<=" => start <= bound,
        ">" => start > bound,
        _ => start >= bound,
    };
    if !holds {
        return Some(0);
    }
    let trips = match (op, up) {
        ("<", true) => (bound - start).div_ceil(k),
        ("<=", true) => (bound - start) / k + 1,
        (">", false) => (start - bound).div_ceil(k),
        (">=", false) => (start - bound) / k + 1,
        _ => return None,
    };
    u64::try_from(trips).ok()
}

/// `trip_count × (direct statements + Σ nested maxima)`, when every loop
/// involved has literal bounds.
pub fn max_executed_statements(sites: &[LoopSite], idx: usize) -> Option<u64> {
    let site = &sites[idx];
    let trips = site.literal_trip_count?;
    let mut per_iteration = site.direct_stmt_count;
    for &c in &site.children {
        per_iteration = per_iteration.saturating_add(max_executed_statements(sites, c)?);
    }
    Some(trips.saturating_mul(per_iteration))
}

const NON_VARIABLES: &[&str] = &[
    "true", "false", "wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days",
    "weeks", "years",
];

/// Identifiers in the condition other than the loop's own counters,
/// boolean literals and unit suffixes.
pub fn foreign_identifiers(site: &LoopSite) -> Vec<String> {
    let induction = site.induction_vars();
    let cond = code_only(site.condition());
    let mut out = Vec::new();
    let mut token = String::new();
    for c in cond.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() || c == '_' || c == '$' {
            token.push(c);
            continue;
        }
        let starts_alpha = token.chars().next().is_some_and(|f| !f.is_ascii_digit());
        if starts_alpha
            && !induction.contains(&token)
            && !NON_VARIABLES.contains(&token.as_str())
            && !out.contains(&token)
        {
            out.push(token.clone());
        }
        token.clear();
    }
    out
}

/// Reason a loop's condition is non-constant, if any.
fn shape_reason(rule: &RuleSpec, site: &LoopSite) -> Option<String> {
    let canon = site.canonical_header();
    let (member, ident, call) = match site.kind {
        LoopKind::For => (14, 16, 18),
        LoopKind::While => (15, 17, 19),
    };
    if rule.pattern(call).is_match(&canon) {
        return Some("the loop condition contains a function call".into());
    }
    if rule.pattern(member).is_match(&canon) {
        return Some("the loop condition reads a member".into());
    }
    if rule.pattern(ident).is_match(&canon) {
        let foreign = foreign_identifiers(site);
        if !foreign.is_empty() {
            return Some(format!("the loop condition depends on {}", foreign.join(", ")));
        }
    }
    None
}

pub fn detect_costly_loop(
    rule: &RuleSpec,
    fs: &FormattedSource,
    gas: &GasModel,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let limit = gas.stmt_limit()?;
    let sites = find_loops(fs)?;
    let mut out = Vec::new();
    for (idx, site) in sites.iter().enumerate() {
        let line = &fs.lines[site.header_line];
        if !rule.admits(line, prefilter) {
            continue;
        }
        let reason = shape_reason(rule, site).or_else(|| {
            max_executed_statements(&sites, idx)
                .filter(|&n| n > limit)
                .map(|n| format!("the loop executes up to {n} statements, above the limit of {limit}"))
        });
        if let Some(reason) = reason {
            let msg = format!("Costly loop: {reason}.");
            out.push(Finding::at(rule, fs, site.header_line, line).with_message(msg));
        }
    }
    out.sort_by_key(|f| f.formatted_line);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::RuleCatalog;
    use crate::formatter::format_source;
    use crate::rule_engine::RuleId;

    const TWELVE_ROUNDS: &str = "for (int i = 0; i < 12; i++){\n    my_balance += 1;\n    sender_balance -= 1;\n}";

    fn gm(tx: u64, avg: u64) -> GasModel {
        GasModel {
            expensive_tx_gas: tx,
            ave_gas_per_stmt: avg,
            stmt_limit_override: None,
        }
    }

    #[test]
    fn stmt_limit_derivation() {
        assert_eq!(derive_stmt_limit(&GasModel::default()), Ok(23));
        assert_eq!(derive_stmt_limit(&gm(2928, 2928)), Ok(1));
        assert_eq!(derive_stmt_limit(&gm(70271, 2928)), Ok(23));
        assert_eq!(derive_stmt_limit(&gm(70272, 2928)), Ok(24));
        assert_eq!(derive_stmt_limit(&gm(0, 2928)), Ok(0));
        assert_eq!(derive_stmt_limit(&gm(5, 0)), Err(AnalysisError::ZeroAverageGas));
        assert_eq!(GasModel::default().with_limit(25).stmt_limit(), Ok(25));
    }

    #[test]
    fn trip_counts() {
        assert_eq!(literal_trip_count("int i = 0; i < 12; i++"), Some(12));
        assert_eq!(literal_trip_count("uint i = 0; i <= 12; ++i"), Some(13));
        assert_eq!(literal_trip_count("i = 10; i > 0; i--"), Some(10));
        assert_eq!(literal_trip_count("uint i = 10; i >= 0; i -= 3"), Some(4));
        assert_eq!(literal_trip_count("uint i = 0; i < 10; i += 3"), Some(4));
        assert_eq!(literal_trip_count("uint i = 5; i < 5; i++"), Some(0));
        assert_eq!(literal_trip_count("uint i = 0; i < 5; i--"), None);
        assert_eq!(literal_trip_count("uint i = 0; i < n; i++"), None);
        assert_eq!(literal_trip_count("uint i = 0; j < 5; i++"), None);
        assert_eq!(literal_trip_count("uint i = 0; i < 5; i += 0"), None);
    }

    fn sites(src: &str) -> (FormattedSource, Vec<LoopSite>) {
        let fs = format_source("t.sol", src).unwrap();
        let s = find_loops(&fs).unwrap();
        (fs, s)
    }

    #[test]
    fn twelve_round_site() {
        let (_, s) = sites(TWELVE_ROUNDS);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, LoopKind::For);
        assert_eq!(s[0].literal_trip_count, Some(12));
        assert_eq!(s[0].body_stmt_count, 2);
        assert_eq!(max_executed_statements(&s, 0), Some(24));
    }

    #[test]
    fn while_and_nesting() {
        let (_, s) = sites("while(x){y;}");
        assert_eq!((s[0].kind, s[0].literal_trip_count), (LoopKind::While, None));
        let (_, s) = sites("for(uint i = 0; i < 10; i++){a; for(uint j = 0; j < 2; j++){b;}}");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].children, vec![1]);
        assert_eq!(s[0].body_stmt_count, 2);
        assert_eq!(s[0].direct_stmt_count, 1);
        assert_eq!(max_executed_statements(&s, 0), Some(30));
        let (_, s) = sites("for(uint i = 0; i < 0; i++){a;}");
        assert_eq!(max_executed_statements(&s, 0), Some(0));
        let (_, s) = sites("for(uint i = 0; i < 3; i++){while(k){a;}}");
        assert_eq!(max_executed_statements(&s, 0), None);
    }

    #[test]
    fn braceless_and_do_while() {
        let (_, s) = sites("for (uint i = 0; i < 30; i++) total += i;");
        assert_eq!(s[0].body_stmt_count, 1);
        assert_eq!(max_executed_statements(&s, 0), Some(30));
        let (fs, s) = sites("do {\na;\nb;\n} while (i < n);");
        assert_eq!(s.len(), 1);
        assert!(s[0].do_while);
        assert_eq!(fs.lines[s[0].header_line], "while (i < n);");
        assert_eq!(s[0].body_stmt_count, 2);
    }

    #[test]
    fn loop_keywords_in_strings_ignored() {
        let (_, s) = sites("emit Log(\"for (x)\");");
        assert!(s.is_empty());
    }

    #[test]
    fn induction_variable_is_exempt() {
        let (_, s) = sites("for (uint i = 0; i < n; i++){\n}");
        assert_eq!(foreign_identifiers(&s[0]), vec!["n"]);
        let (_, s) = sites(TWELVE_ROUNDS);
        assert!(foreign_identifiers(&s[0]).is_empty());
        let (_, s) = sites("for (uint i = 0; i < 10 ether; i++){\n}");
        assert!(foreign_identifiers(&s[0]).is_empty());
    }

    fn costly(src: &str, gas: GasModel) -> Vec<usize> {
        let fs = format_source("t.sol", src).unwrap();
        let rule = RuleCatalog::standard().rule(RuleId::CostlyLoop);
        detect_costly_loop(rule, &fs, &gas, true)
            .unwrap()
            .iter()
            .map(|f| f.original_line)
            .collect()
    }

    #[test]
    fn costly_loop_branches() {
        assert_eq!(costly(TWELVE_ROUNDS, GasModel::default()), vec![1]);
        assert!(costly(TWELVE_ROUNDS, GasModel::default().with_limit(25)).is_empty());
        let eleven = "for (uint i = 0; i < 11; i++){ a; b; }";
        assert!(costly(eleven, GasModel::default()).is_empty());
        assert_eq!(costly("while (provider.isCustomer(c)){\nx;\n}", GasModel::default()), vec![1]);
        assert_eq!(costly("for (uint i = 0; i < list.length; i++){\n}", GasModel::default()), vec![1]);
        let big = "for (int i = 0; i < 10000; i++){\nif (msg.sender == receiver1)\nmsg.sender.transfer(1 wei);\n}";
        assert_eq!(costly(big, GasModel::default()), vec![1]);
    }

    #[test]
    fn override_changes_only_gas_branch() {
        let shape = "for (uint i = 0; i < n; i++){\na;\n}";
        assert_eq!(costly(shape, GasModel::default().with_limit(1_000_000)), vec![1]);
        assert_eq!(costly(shape, GasModel::default().with_limit(0)), vec![1]);
    }

    /// Unrolls literal loops one iteration at a time and counts every
    /// executed `;` line.
    fn simulate(fs: &FormattedSource, range: Range<usize>) -> u64 {
        let mut total = 0;
        let mut i = range.start;
        while i < range.end {
            let line = &fs.lines[i];
            if let Some(h) = parse_header(line) {
                let end = if line.ends_with('{') { block_end(fs, i).unwrap() } else { i };
                let body = if line.ends_with('{') { i + 1..end } else { i..i + 1 };
                let (init, cond, step) = for_clauses(&h.inner).unwrap();
                let start: i64 = init.rsplit('=').next().unwrap().trim().parse().unwrap();
                let bound: i64 = cond.split(|c| c == '<' || c == '>' || c == '=').last().unwrap().trim().parse().unwrap();
                let op: String = cond.chars().filter(|c| "<>=".contains(*c)).collect();
                let delta: i64 = if step.contains("++") {
                    1
                } else if step.contains("--") {
                    -1
                } else if step.contains("+=") {
                    step.rsplit('=').next().unwrap().trim().parse().unwrap()
                } else {
                    -step.rsplit('=').next().unwrap().trim().parse::<i64>().unwrap()
                };
                let mut v = start;
                loop {
                    let go = match op.as_str() {
                        "<" => v < bound,
                        "<=" => v <= bound,
                        ">" => v > bound,
                        _ => v >= bound,
                    };
                    if !go {
                        break;
                    }
                    total += if body.start == i { 1 } else { simulate(fs, body.clone()) };
                    v += delta;
                }
                i = end + 1;
            } else {
                total += is_statement(line) as u64;
                i += 1;
            }
        }
        total
    }

    #[test]
    fn gas_branch_agrees_with_unrolling_simulator() {
        let cases = [
            TWELVE_ROUNDS,
            "for (uint i = 0; i < 11; i++){ a; b; }",
            "for(uint i = 0; i < 3; i++){for(uint j = 0; j < 4; j++){a;}}",
            "for(uint i = 0; i < 10; i++){a; for(uint j = 0; j < 2; j++){b;}}",
            "for(uint i = 10; i > 0; i -= 3){a; b; for(uint j = 0; j <= 5; j++){c; for(uint k = 7; k >= 2; k--) d;}}",
            "for (uint i = 0; i < 100; i += 7) x += i;",
        ];
        for src in cases {
            let fs = format_source("t.sol", src).unwrap();
            let s = find_loops(&fs).unwrap();
            let outer = &s[0];
            let expected = simulate(&fs, outer.extent.0..outer.extent.1 + 1);
            assert_eq!(max_executed_statements(&s, 0), Some(expected), "{src}");
        }
    }
}
