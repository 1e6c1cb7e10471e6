//! Source normalization.
//!
//! Every later stage works on a [`FormattedSource`]: comments removed, blank
//! lines dropped, whitespace collapsed, and one complete statement per line.
//! A line ends after each `;`, block `{` and block `}`. Semicolons inside a
//! `for (...)` header do not end a line, and braces of call options or struct
//! literals (`addr.call{value: v}("")`, `S({a: 1})`) stay inline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{classify, is_word, string_end};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("unterminated block comment starting on line {line}")]
    UnterminatedBlockComment { line: usize },
    #[error("formatted line {line} out of range (1..={len})")]
    OutOfRange { line: usize, len: usize },
}

/// Raw file contents split into lines. CRLF is folded to LF on ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSource {
    pub path: PathBuf,
    pub lines: Vec<String>,
    pub trailing_newline: bool,
    pub byte_len: usize,
}

impl RawSource {
    pub fn new(path: impl Into<PathBuf>, text: &str) -> Self {
        let normalized = text.replace("\r\n", "\n");
        let trailing_newline = normalized.ends_with('\n');
        let body = normalized.strip_suffix('\n').unwrap_or(&normalized);
        let lines = if body.is_empty() && !trailing_newline {
            Vec::new()
        } else {
            body.split('\n').map(str::to_owned).collect()
        };
        RawSource {
            path: path.into(),
            lines,
            trailing_newline,
            byte_len: text.len(),
        }
    }

    /// Reassembles the (LF-normalized) text.
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        if self.trailing_newline {
            s.push('\n');
        }
        s
    }
}

/// Normalized one-statement-per-line text with a map back to original lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormattedSource {
    pub origin: PathBuf,
    pub lines: Vec<String>,
    /// 1-based original line on which each formatted statement begins.
    pub line_map: Vec<usize>,
    /// Line count of the original file.
    pub original_lines: usize,
}

impl FormattedSource {
    /// Wraps lines that are already normalized; each maps to itself.
    pub fn from_normalized(origin: impl Into<PathBuf>, lines: Vec<String>) -> Self {
        let n = lines.len();
        FormattedSource {
            origin: origin.into(),
            line_map: (1..=n).collect(),
            lines,
            original_lines: n,
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// 0-based access.
    pub fn line(&self, idx: usize) -> &str {
        &self.lines[idx]
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    pub fn map_line(&self, formatted_line: usize) -> Result<usize, FormatError> {
        map_line(self, formatted_line)
    }
}

/// Blanks out `//` and `/* */` comments with spaces, one per character, so
/// surviving code keeps its columns. Comment markers inside string literals
/// are left alone.
pub fn strip_comments(raw: &RawSource) -> Result<RawSource, FormatError> {
    let mut block_start: Option<usize> = None;
    let mut lines = Vec::with_capacity(raw.lines.len());
    for (idx, line) in raw.lines.iter().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut out = String::with_capacity(line.len());
        let mut i = 0;
        while i < chars.len() {
            if block_start.is_some() {
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    out.push_str("  ");
                    i += 2;
                    block_start = None;
                } else {
                    out.push(' ');
                    i += 1;
                }
                continue;
            }
            let c = chars[i];
            if c == '"' || c == '\'' {
                if let Some(end) = string_end(&chars, i) {
                    out.extend(&chars[i..=end]);
                    i = end + 1;
                    continue;
                }
            }
            if c == '/' && chars.get(i + 1) == Some(&'/') {
                out.extend(std::iter::repeat(' ').take(chars.len() - i));
                break;
            }
            if c == '/' && chars.get(i + 1) == Some(&'*') {
                block_start = Some(idx + 1);
                out.push_str("  ");
                i += 2;
                continue;
            }
            out.push(c);
            i += 1;
        }
        lines.push(out);
    }
    if let Some(line) = block_start {
        return Err(FormatError::UnterminatedBlockComment { line });
    }
    Ok(RawSource {
        path: raw.path.clone(),
        lines,
        trailing_newline: raw.trailing_newline,
        byte_len: raw.byte_len,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Gap {
    None,
    Space,
    LineBreak,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Brace {
    Block,
    Inline,
}

#[derive(Clone, Copy)]
struct Tok {
    c: char,
    in_str: bool,
    line: usize,
}

/// Splits comment-free source into one statement per line.
pub fn normalize_lines(raw: &RawSource) -> FormattedSource {
    // Flatten into a token stream; `None` marks an original line break.
    let mut stream: Vec<Option<Tok>> = Vec::new();
    for (idx, line) in raw.lines.iter().enumerate() {
        stream.extend(classify(line).into_iter().map(|(c, in_str)| {
            Some(Tok {
                c,
                in_str,
                line: idx + 1,
            })
        }));
        stream.push(None);
    }

    let mut b = Builder::default();
    for (pos, tok) in stream.iter().enumerate() {
        let Some(tok) = *tok else {
            if b.lone_quote {
                // Joining would let the quote pair with one on a later line.
                b.flush();
            } else if !b.cur.is_empty() {
                b.gap = Gap::LineBreak;
            }
            continue;
        };
        if !tok.in_str && tok.c.is_whitespace() {
            if !b.cur.is_empty() && b.gap == Gap::None {
                b.gap = Gap::Space;
            }
            continue;
        }
        b.push(tok);
        if tok.in_str {
            continue;
        }
        match tok.c {
            ';' if b.for_groups.is_empty() => b.flush(),
            '{' => {
                if b.paren_depth > 0 || opens_call_options(&stream[pos + 1..]) {
                    b.braces.push(Brace::Inline);
                } else {
                    b.braces.push(Brace::Block);
                    b.reset_parens();
                    b.flush();
                }
            }
            '}' => {
                if b.braces.pop() != Some(Brace::Inline) {
                    b.reset_parens();
                    b.flush();
                }
            }
            _ => {}
        }
    }
    b.flush();

    FormattedSource {
        origin: raw.path.clone(),
        lines: b.lines,
        line_map: b.map,
        original_lines: raw.lines.len(),
    }
}

/// Runs comment stripping and line normalization on file text.
pub fn format_source(path: impl AsRef<Path>, text: &str) -> Result<FormattedSource, FormatError> {
    let raw = RawSource::new(path.as_ref(), text);
    Ok(normalize_lines(&strip_comments(&raw)?))
}

pub fn map_line(fs: &FormattedSource, formatted_line: usize) -> Result<usize, FormatError> {
    if formatted_line == 0 || formatted_line > fs.lines.len() {
        return Err(FormatError::OutOfRange {
            line: formatted_line,
            len: fs.lines.len(),
        });
    }
    Ok(fs.line_map[formatted_line - 1])
}

#[derive(Default)]
struct Builder {
    lines: Vec<String>,
    map: Vec<usize>,
    cur: String,
    cur_line: usize,
    gap: Gap,
    paren_depth: usize,
    /// Paren depths at which a `for (` header group opened.
    for_groups: Vec<usize>,
    braces: Vec<Brace>,
    /// `cur` holds a quote that opens no literal on its original line.
    lone_quote: bool,
}

impl Default for Gap {
    fn default() -> Self {
        Gap::None
    }
}

impl Builder {
    fn push(&mut self, tok: Tok) {
        if self.cur.is_empty() {
            self.cur_line = tok.line;
        } else {
            let last = self.cur.chars().next_back().unwrap_or(' ');
            match self.gap {
                Gap::Space => self.cur.push(' '),
                Gap::LineBreak if joins_with_space(last, tok.c) => self.cur.push(' '),
                _ => {}
            }
        }
        self.gap = Gap::None;
        if !tok.in_str {
            match tok.c {
                '"' | '\'' => self.lone_quote = true,
                '(' => {
                    self.paren_depth += 1;
                    if ends_with_for(&self.cur) {
                        self.for_groups.push(self.paren_depth);
                    }
                }
                ')' => {
                    if self.for_groups.last() == Some(&self.paren_depth) {
                        self.for_groups.pop();
                    }
                    self.paren_depth = self.paren_depth.saturating_sub(1);
                }
                _ => {}
            }
        }
        self.cur.push(tok.c);
    }

    fn reset_parens(&mut self) {
        self.paren_depth = 0;
        self.for_groups.clear();
    }

    fn flush(&mut self) {
        if !self.cur.is_empty() {
            self.lines.push(std::mem::take(&mut self.cur));
            self.map.push(self.cur_line);
        }
        self.gap = Gap::None;
        self.lone_quote = false;
    }
}

fn ends_with_for(cur: &str) -> bool {
    let t = cur.trim_end();
    t.strip_suffix("for")
        .is_some_and(|head| !head.chars().next_back().is_some_and(is_word))
}

fn is_operator(c: char) -> bool {
    "+-*/%=<>!&|^~?:".contains(c)
}

/// Whether two fragments joined across an original line break need a space
/// to keep their tokens apart.
fn joins_with_space(prev: char, next: char) -> bool {
    let quote = |c| c == '"' || c == '\'';
    (is_word(next) && (is_word(prev) || prev == ')' || prev == ']' || quote(prev)))
        || (is_word(prev) && quote(next))
        || (is_operator(prev) && is_operator(next))
        || prev == ';'
        || prev == ','
}

/// A `{` followed by `name:` (but not Yul's `:=`) opens call options or a
/// named-argument list.
fn opens_call_options(rest: &[Option<Tok>]) -> bool {
    let mut it = rest
        .iter()
        .flatten()
        .filter(|t| !(t.c.is_whitespace() && !t.in_str))
        .peekable();
    let mut ident = 0;
    while let Some(t) = it.peek() {
        if t.in_str || !is_word(t.c) {
            break;
        }
        if ident == 0 && t.c.is_ascii_digit() {
            return false;
        }
        ident += 1;
        it.next();
    }
    if ident == 0 {
        return false;
    }
    match (it.next(), it.next()) {
        (Some(colon), next) if colon.c == ':' && !colon.in_str => {
            !next.is_some_and(|n| n.c == '=' || n.c == ':')
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(text: &str) -> FormattedSource {
        format_source("t.sol", text).unwrap()
    }

    #[test]
    fn line_comment_is_blanked_in_place() {
        let raw = RawSource::new("a.sol", "addr.call.value(1 wei); //transfer 1 wei to addr");
        let s = strip_comments(&raw).unwrap();
        assert_eq!(s.lines[0].trim_end(), "addr.call.value(1 wei);");
        assert_eq!(s.lines[0].chars().count(), raw.lines[0].chars().count());
    }

    #[test]
    fn code_without_comment_unchanged() {
        let raw = RawSource::new("a.sol", "uint x = 1;");
        assert_eq!(strip_comments(&raw).unwrap().lines, raw.lines);
    }

    #[test]
    fn comment_markers_inside_strings_survive() {
        for src in [
            r#"string s = "//not a comment";"#,
            r#"string s = "/* nor this */";"#,
            r#"string s = 'it''s // fine';"#,
        ] {
            let raw = RawSource::new("a.sol", src);
            assert_eq!(strip_comments(&raw).unwrap().lines[0], src);
        }
    }

    #[test]
    fn block_comment_spans_lines() {
        let raw = RawSource::new("a.sol", "a; /* x\n y */ b;\n/**/c;");
        let s = strip_comments(&raw).unwrap();
        assert_eq!(s.lines, vec!["a;     ", "      b;", "    c;"]);
    }

    #[test]
    fn unterminated_block_comment_reports_opening_line() {
        let raw = RawSource::new("a.sol", "a;\nb; /* open\nc;");
        assert_eq!(
            strip_comments(&raw),
            Err(FormatError::UnterminatedBlockComment { line: 2 })
        );
    }

    #[test]
    fn crlf_and_trailing_newline_recorded() {
        let raw = RawSource::new("a.sol", "a;\r\nb;\r\n");
        assert_eq!(raw.lines, vec!["a;", "b;"]);
        assert!(raw.trailing_newline);
        assert_eq!(raw.text(), "a;\nb;\n");
        assert!(RawSource::new("e.sol", "").lines.is_empty());
    }

    #[test]
    fn multi_line_header_is_joined() {
        let src = "    function deposit(\n        address to,\n        uint256 amount\n        ){\n        //Receiving address: to,Number: amount\n        userBalance[to] += amount;\n    }\n";
        let fs = fmt(src);
        assert_eq!(
            fs.lines,
            vec![
                "function deposit(address to, uint256 amount){",
                "userBalance[to] += amount;",
                "}"
            ]
        );
        assert_eq!(fs.line_map, vec![1, 6, 7]);
        assert_eq!(map_line(&fs, 2), Ok(6));
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(fmt("").is_empty());
        assert!(fmt("// only\n/* comments */\n\n").is_empty());
    }

    #[test]
    fn lone_quote_ends_the_fragment_at_its_line() {
        let fs = fmt("x = \"(\n\"s;{\"");
        assert_eq!(fs.lines, vec!["x = \"(", "\"s;{\""]);
        assert_eq!(fmt(&fs.text()).lines, fs.lines);
    }

    #[test]
    fn for_header_stays_on_one_line() {
        let fs = fmt("for (int i = 0; i < 12; i++){\n my_balance += 1;\n}");
        assert_eq!(fs.lines[0], "for (int i = 0; i < 12; i++){");
        let fs = fmt("for(;;){x;}");
        assert_eq!(fs.lines, vec!["for(;;){", "x;", "}"]);
        let fs = fmt("for (uint i = 0;\n i < n;\n i++) total += i;");
        assert_eq!(fs.lines, vec!["for (uint i = 0; i < n; i++) total += i;"]);
    }

    #[test]
    fn call_option_braces_stay_inline() {
        let fs = fmt("(bool ok, ) = to.call{value: amount}(\"\");\nrequire(ok);");
        assert_eq!(
            fs.lines,
            vec!["(bool ok, ) = to.call{value: amount}(\"\");", "require(ok);"]
        );
        let fs = fmt("assembly { x := 1 }");
        assert_eq!(fs.lines, vec!["assembly {", "x := 1 }"]);
    }

    #[test]
    fn first_statement_after_comment_header_maps_back() {
        let fs = fmt("// a\n// b\n// c\npragma solidity 0.5.0;\n");
        assert_eq!(map_line(&fs, 1), Ok(4));
        assert!(matches!(map_line(&fs, 2), Err(FormatError::OutOfRange { .. })));
        assert!(matches!(map_line(&fs, 0), Err(FormatError::OutOfRange { .. })));
    }

    #[test]
    fn already_normalized_maps_identically() {
        let src = "contract A{\nuint x;\n}\n";
        let fs = fmt(src);
        assert_eq!(fs.lines, vec!["contract A{", "uint x;", "}"]);
        for i in 1..=3 {
            assert_eq!(map_line(&fs, i), Ok(i));
        }
    }

    #[test]
    fn keyword_lines_keep_token_separation() {
        let fs = fmt("function f(uint a)\n    public\n    payable\n{\n}");
        assert_eq!(fs.lines[0], "function f(uint a) public payable{");
        let fs = fmt("x = a /\n/ b;");
        assert_eq!(fs.lines[0], "x = a / / b;");
    }

    #[test]
    fn strings_keep_inner_whitespace_and_terminators() {
        let fs = fmt("s = \"a;  {b}\";  t = 1;");
        assert_eq!(fs.lines, vec!["s = \"a;  {b}\";", "t = 1;"]);
    }

    #[test]
    fn else_and_closing_brace_split() {
        let fs = fmt("if (a) { b; } else { c; }");
        assert_eq!(fs.lines, vec!["if (a) {", "b;", "}", "else {", "c;", "}"]);
    }
}
