//! Bracket matching over formatted lines: contract and function blocks.
//!
//! Formatted lines carry at most one block brace, at the end of the line, plus
//! any number of balanced inline pairs, so block extent is found by a running
//! brace count from a header line.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::formatter::FormattedSource;
use crate::text::{brace_counts, paren_group};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    /// `line` is the 1-based formatted line of the unmatched opener.
    #[error("unbalanced braces: block opened at formatted line {line} (original line {original}) is never closed")]
    UnbalancedBraces { line: usize, original: usize },
    #[error("average gas per statement must be positive")]
    ZeroAverageGas,
}

impl AnalysisError {
    pub(crate) fn unbalanced(fs: &FormattedSource, idx: usize) -> Self {
        AnalysisError::UnbalancedBraces {
            line: idx + 1,
            original: fs.line_map.get(idx).copied().unwrap_or(0),
        }
    }
}

fn net(line: &str) -> isize {
    let (o, c) = brace_counts(line);
    o as isize - c as isize
}

/// Whether the line opens a block (net brace count positive).
pub fn opens_block(line: &str) -> bool {
    net(line) > 0
}

/// Index of the line closing the block opened on `header` (0-based).
pub fn block_end(fs: &FormattedSource, header: usize) -> Result<usize, AnalysisError> {
    let mut depth = net(&fs.lines[header]);
    if depth <= 0 {
        return Err(AnalysisError::unbalanced(fs, header));
    }
    for j in header + 1..fs.len() {
        depth += net(&fs.lines[j]);
        if depth <= 0 {
            return Ok(j);
        }
    }
    Err(AnalysisError::unbalanced(fs, header))
}

/// Brace depth in effect at the start of each line (clamped at zero).
pub fn depths(fs: &FormattedSource) -> Vec<usize> {
    let mut d: isize = 0;
    fs.lines
        .iter()
        .map(|l| {
            let here = d.max(0) as usize;
            d = (d + net(l)).max(0);
            here
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractKind {
    Contract,
    Interface,
    Library,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractInfo {
    pub kind: ContractKind,
    pub name: String,
    /// Base names from the `is` clause, in declaration order.
    pub parents: Vec<String>,
    /// 0-based header line.
    pub header: usize,
    /// 0-based closing-brace line.
    pub end: usize,
}

impl ContractInfo {
    /// 0-based lines strictly inside the body.
    pub fn body(&self) -> std::ops::Range<usize> {
        self.header + 1..self.end
    }
}

fn contract_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:abstract\s+)?(contract|interface|library)\s+([A-Za-z_$][\w$]*)(.*)$")
            .unwrap()
    })
}

/// Every contract, interface and library declared with a body.
pub fn contracts(fs: &FormattedSource) -> Result<Vec<ContractInfo>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in fs.lines.iter().enumerate() {
        let Some(c) = contract_header_re().captures(line) else {
            continue;
        };
        if !opens_block(line) {
            continue;
        }
        let kind = match &c[1] {
            "contract" => ContractKind::Contract,
            "interface" => ContractKind::Interface,
            _ => ContractKind::Library,
        };
        let end = block_end(fs, i)?;
        out.push(ContractInfo {
            kind,
            name: c[2].to_string(),
            parents: parse_parents(&c[3]),
            header: i,
            end,
        });
    }
    Ok(out)
}

fn parse_parents(rest: &str) -> Vec<String> {
    let rest = rest.trim_end().trim_end_matches('{');
    let Some(pos) = find_word(rest, "is") else {
        return Vec::new();
    };
    let list = &rest[pos + 2..];
    let mut parents = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in list.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parents.extend(leading_ident(&list[start..]));
                start = i + 1;
            }
            _ => {}
        }
    }
    parents.extend(leading_ident(&list[start..]));
    parents
}

fn find_word(hay: &str, word: &str) -> Option<usize> {
    let bytes = hay.as_bytes();
    hay.match_indices(word).map(|(i, _)| i).find(|&i| {
        let before = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
        let j = i + word.len();
        let after = j >= bytes.len() || !(bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_');
        before && after
    })
}

fn leading_ident(s: &str) -> Option<String> {
    let s = s.trim_start();
    let ident: String = s
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '$' || *c == '.')
        .collect();
    // `Lib.Base` resolves to its last segment.
    let last = ident.rsplit('.').next().unwrap_or("").to_string();
    (!last.is_empty()).then_some(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    Function,
    Constructor,
    Fallback,
    Receive,
    Modifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
    /// No keyword given; callable externally under pre-0.5 defaults.
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionInfo {
    pub kind: FunctionKind,
    /// Empty for the unnamed fallback.
    pub name: String,
    pub params: String,
    pub visibility: Visibility,
    /// 0-based header line.
    pub header: usize,
    /// 0-based closing line; `None` for a declaration without body.
    pub end: Option<usize>,
}

impl FunctionInfo {
    pub fn externally_callable(&self) -> bool {
        matches!(self.kind, FunctionKind::Function | FunctionKind::Fallback | FunctionKind::Receive)
            && matches!(
                self.visibility,
                Visibility::Public | Visibility::External | Visibility::Default
            )
    }

    pub fn takes_no_arguments(&self) -> bool {
        self.params.trim().is_empty()
    }

    pub fn body(&self) -> std::ops::Range<usize> {
        match self.end {
            Some(end) => self.header + 1..end,
            None => self.header..self.header,
        }
    }
}

fn function_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:(function)\b\s*([A-Za-z_$][\w$]*)?|(constructor)|(fallback)|(receive)|(modifier)\s+([A-Za-z_$][\w$]*))\s*\(",
        )
        .unwrap()
    })
}

fn visibility_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(public|external|internal|private)\b").unwrap())
}

/// Functions, constructors, fallbacks and modifiers declared directly in a
/// contract body.
pub fn functions(
    fs: &FormattedSource,
    contract: &ContractInfo,
) -> Result<Vec<FunctionInfo>, AnalysisError> {
    let mut out = Vec::new();
    let mut i = contract.header + 1;
    while i < contract.end {
        let line = &fs.lines[i];
        if let Some(c) = function_header_re().captures(line) {
            let (kind, name) = if c.get(1).is_some() {
                match c.get(2).map(|m| m.as_str()) {
                    Some(n) => (FunctionKind::Function, n.to_string()),
                    None => (FunctionKind::Fallback, String::new()),
                }
            } else if c.get(3).is_some() {
                (FunctionKind::Constructor, "constructor".to_string())
            } else if c.get(4).is_some() {
                (FunctionKind::Fallback, String::new())
            } else if c.get(5).is_some() {
                (FunctionKind::Receive, "receive".to_string())
            } else {
                (FunctionKind::Modifier, c[7].to_string())
            };
            let open = c.get(0).unwrap().end() - 1;
            let (params, after) = paren_group(line, open).unwrap_or(("", line.len()));
            let visibility = match visibility_re().captures(&line[after..]) {
                Some(v) => match &v[1] {
                    "public" => Visibility::Public,
                    "external" => Visibility::External,
                    "internal" => Visibility::Internal,
                    _ => Visibility::Private,
                },
                None => Visibility::Default,
            };
            let end = if opens_block(line) {
                Some(block_end(fs, i)?)
            } else {
                None
            };
            out.push(FunctionInfo {
                kind,
                name,
                params: params.to_string(),
                visibility,
                header: i,
                end,
            });
            i = end.map_or(i + 1, |e| e + 1);
            continue;
        }
        if opens_block(line) {
            // struct, enum or other nested block: skip it whole.
            i = block_end(fs, i)? + 1;
            continue;
        }
        i += 1;
    }
    Ok(out)
}

/// Inline-assembly line ranges (0-based) within `range`: the body plus the
/// closing line, which may carry the last assembly statement.
pub fn assembly_blocks(
    fs: &FormattedSource,
    range: std::ops::Range<usize>,
) -> Result<Vec<std::ops::Range<usize>>, AnalysisError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"^\s*assembly\b"#).unwrap());
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        if re.is_match(&fs.lines[i]) && opens_block(&fs.lines[i]) {
            let end = block_end(fs, i)?;
            out.push(i + 1..end + 1);
            i = end + 1;
        } else {
            i += 1;
        }
    }
    Ok(out)
}
