//! Integer overflow prevention by guard insertion.
//!
//! Assignment statements of the forms `a = b op c;` and `a op= b;` get a
//! `require` after them that fails whenever unsigned 256-bit wrap-around
//! occurred. `-=` and `*=` overwrite their left operand, so the old value is
//! copied into a temporary first.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::formatter::FormattedSource;
use crate::instrument::{InsertionKind, InstrumentedSource, Plan};
use crate::structure::{block_end, opens_block, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpForm {
    /// `ope1 = ope2 op ope3;`
    Binary,
    /// `ope1 op= ope2;`
    Compound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl Operator {
    fn parse(s: &str) -> Operator {
        match s {
            "+" => Operator::Add,
            "-" => Operator::Sub,
            "*" => Operator::Mul,
            "/" => Operator::Div,
            _ => Operator::Rem,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
            Operator::Div => "/",
            Operator::Rem => "%",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerOpStatement {
    /// 0-based formatted line.
    pub formatted_line: usize,
    pub form: OpForm,
    pub operator: Operator,
    pub ope1: String,
    pub ope2: String,
    /// Absent for compound assignments.
    pub ope3: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardPlan {
    pub target: IntegerOpStatement,
    pub before: Option<String>,
    pub after: String,
    pub temp_name: Option<String>,
}

const OPE: &str = r"[\w()\[\].]+";

fn binary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"^\s*(?:\w+\s+)?({OPE})\s*=\s*({OPE})\s*([+\-*/%])\s*({OPE})\s*;\s*$"
        ))
        .unwrap()
    })
}

fn compound_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(r"^\s*(?:\w+\s+)?({OPE})\s*([+\-*/%])=\s*({OPE})\s*;\s*$")).unwrap()
    })
}

fn excluded_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:require|assert|for|if|while|return)\b").unwrap())
}

fn safe_math_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*function\s+(?:add|sub|mul|div|mod)\s*\(\s*uint\d*\s+\w+\s*,\s*uint\d*\s+\w+\s*\)").unwrap()
    })
}

/// Decomposes one formatted line, if it is an arithmetic assignment.
pub fn parse_integer_op(line: &str) -> Option<IntegerOpStatement> {
    if excluded_re().is_match(line) {
        return None;
    }
    if let Some(c) = binary_re().captures(line) {
        return Some(IntegerOpStatement {
            formatted_line: 0,
            form: OpForm::Binary,
            operator: Operator::parse(&c[3]),
            ope1: c[1].to_string(),
            ope2: c[2].to_string(),
            ope3: Some(c[4].to_string()),
        });
    }
    compound_re().captures(line).map(|c| IntegerOpStatement {
        formatted_line: 0,
        form: OpForm::Compound,
        operator: Operator::parse(&c[2]),
        ope1: c[1].to_string(),
        ope2: c[3].to_string(),
        ope3: None,
    })
}

pub fn find_integer_ops(fs: &FormattedSource) -> Vec<IntegerOpStatement> {
    fs.lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            parse_integer_op(l).map(|mut s| {
                s.formatted_line = i;
                s
            })
        })
        .collect()
}

/// Builds the guard for one statement. `counter` holds the next temp number
/// and advances for every plan that needs a temporary.
pub fn plan_guard(stmt: &IntegerOpStatement, counter: &mut u64) -> GuardPlan {
    let (o1, o2) = (&stmt.ope1, &stmt.ope2);
    let mut before = None;
    let mut temp_name = None;
    let after = match (stmt.form, stmt.operator, stmt.ope3.as_deref()) {
        (OpForm::Binary, op, Some(o3)) => match op {
            Operator::Add => format!("require({o1}>={o2});"),
            Operator::Sub => format!("require({o1}<={o2});"),
            Operator::Mul => format!("require({o2}==0 || {o1}/{o2}=={o3});"),
            Operator::Div => format!("require({o3}>0);"),
            Operator::Rem => format!("require({o3}!=0);"),
        },
        (_, op, _) => match op {
            Operator::Add => format!("require({o1}>={o2});"),
            Operator::Div => format!("require({o2}>0);"),
            Operator::Rem => format!("require({o2}!=0);"),
            Operator::Sub | Operator::Mul => {
                let t = format!("anti_overflow_temp_{counter}");
                *counter += 1;
                before = Some(format!("uint256 {t} = {o1};"));
                let after = if op == Operator::Sub {
                    format!("require({t} >= {o2});")
                } else {
                    format!("require({o2}==0 || {o1}/{o2}=={t});")
                };
                temp_name = Some(t);
                after
            }
        },
    };
    GuardPlan {
        target: stmt.clone(),
        before,
        after,
        temp_name,
    }
}

/// Line ranges of function bodies shaped like SafeMath's arithmetic helpers.
fn safe_math_bodies(fs: &FormattedSource) -> Result<Vec<std::ops::Range<usize>>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in fs.lines.iter().enumerate() {
        if safe_math_re().is_match(line) && opens_block(line) {
            out.push(i + 1..block_end(fs, i)?);
        }
    }
    Ok(out)
}

/// Guards every arithmetic assignment outside SafeMath-shaped helpers.
/// Statements already followed by their exact guard are left alone, so a
/// second run changes nothing.
pub fn instrument(fs: &FormattedSource) -> Result<InstrumentedSource, AnalysisError> {
    let skip = safe_math_bodies(fs)?;
    let mut counter = 1;
    let mut plan = Plan::default();
    for stmt in find_integer_ops(fs) {
        let i = stmt.formatted_line;
        if skip.iter().any(|r| r.contains(&i)) {
            continue;
        }
        let g = plan_guard(&stmt, &mut counter);
        if fs.lines.get(i + 1).is_some_and(|next| next.trim() == g.after) {
            continue;
        }
        if let Some(b) = g.before {
            plan.before(i, InsertionKind::GuardBefore, b);
        }
        plan.after(i, InsertionKind::GuardAfter, g.after);
    }
    let notices = if plan.is_empty() {
        vec!["No unguarded integer arithmetic statement found; the source is unchanged.".to_string()]
    } else {
        Vec::new()
    };
    Ok(plan.apply(fs, notices))
}
