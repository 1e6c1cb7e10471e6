//! Character-level helpers shared by the formatter and the block scanners.
//!
//! Solidity string literals never span lines, so string state is resolved per
//! line: a quote only opens a literal if the same line also closes it. A lone
//! quote is ordinary code text.

/// Returns the index of the quote closing the literal opened at `start`, if
/// the literal terminates on this line.
pub(crate) fn string_end(chars: &[char], start: usize) -> Option<usize> {
    let quote = chars[start];
    let mut j = start + 1;
    while j < chars.len() {
        match chars[j] {
            '\\' => j += 2,
            c if c == quote => return Some(j),
            _ => j += 1,
        }
    }
    None
}

/// Marks every character of `line` as code (`false`) or string-literal
/// content including its quotes (`true`).
pub(crate) fn classify(line: &str) -> Vec<(char, bool)> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' || c == '\'' {
            if let Some(end) = string_end(&chars, i) {
                out.extend(chars[i..=end].iter().map(|&c| (c, true)));
                i = end + 1;
                continue;
            }
        }
        out.push((c, false));
        i += 1;
    }
    out
}

/// Blanks ASCII string-literal content, keeping quotes and byte offsets.
pub(crate) fn code_only(line: &str) -> String {
    classify(line)
        .into_iter()
        .map(|(c, s)| if s && c.is_ascii() && c != '"' && c != '\'' { ' ' } else { c })
        .collect()
}

/// Counts `{` and `}` outside string literals.
pub(crate) fn brace_counts(line: &str) -> (usize, usize) {
    classify(line)
        .into_iter()
        .filter(|&(_, s)| !s)
        .fold((0, 0), |(o, c), (ch, _)| match ch {
            '{' => (o + 1, c),
            '}' => (o, c + 1),
            _ => (o, c),
        })
}

pub(crate) fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Returns the text of the balanced parenthesised group opening at byte
/// offset `open` (which must hold `(`), without the outer parentheses, and
/// the byte offset just past the closing `)`.
pub(crate) fn paren_group(text: &str, open: usize) -> Option<(&str, usize)> {
    let bytes = text.as_bytes();
    if bytes.get(open) != Some(&b'(') {
        return None;
    }
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut i = open;
    while i < bytes.len() {
        let b = bytes[i];
        if let Some(q) = quote {
            if b == b'\\' {
                i += 2;
                continue;
            }
            if b == q {
                quote = None;
            }
        } else {
            match b {
                b'"' | b'\'' => quote = Some(b),
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some((&text[open + 1..i], i + 1));
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}
