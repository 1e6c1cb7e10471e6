//! The fixed 18-rule catalog and the detectors for rules that need more than
//! one line of context.
//!
//! Catalog patterns are numbered 1 through 41; each number belongs to exactly
//! one rule. Rules may also carry unnumbered auxiliary patterns (for example
//! the call-bearing trigger of `mishandled-exceptions`, whose numbered pattern
//! describes the *checked* form).

mod constructor;
mod locked_money;
mod style;
mod token_api;
mod version;
mod visibility;

use std::sync::OnceLock;

use num_bigint::BigUint;
use regex::{Captures, Regex};
use thiserror::Error;

use crate::formatter::FormattedSource;
use crate::loop_analyzer;
use crate::rule_engine::{Finding, Logic, Pattern, RuleId, RuleSpec, ScanContext, Severity};
use crate::structure::AnalysisError;

pub use constructor::detect_missing_constructor;
pub use locked_money::detect_locked_money;
pub use style::detect_style_guide;
pub use token_api::{detect_token_api_violation, InheritanceIndex};
pub use version::{detect_compiler_version, detect_redundant_refusal, SolcVersion};
pub use visibility::detect_implicit_visibility;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("pattern {pattern} of rule {rule} failed to compile: {message}")]
    PatternCompile {
        rule: RuleId,
        pattern: String,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct RuleCatalog {
    pub rules: Vec<RuleSpec>,
}

struct PatternDef {
    ordinal: Option<u8>,
    name: &'static str,
    source: &'static str,
}

const fn num(ordinal: u8, source: &'static str) -> PatternDef {
    PatternDef {
        ordinal: Some(ordinal),
        name: "",
        source,
    }
}

const fn aux(name: &'static str, source: &'static str) -> PatternDef {
    PatternDef {
        ordinal: None,
        name,
        source,
    }
}

struct RuleDef {
    id: RuleId,
    title: &'static str,
    severity: Severity,
    logic: Logic,
    keywords: &'static [&'static str],
    patterns: &'static [PatternDef],
    exemptions: &'static [PatternDef],
    refine: Option<fn(&Captures<'_>) -> bool>,
    description: &'static str,
    suggestion: &'static str,
}

/// The captured literal is unsigned, so only the upper bound (2^198,
/// exclusive) can reject it.
fn var_literal_in_range(caps: &Captures<'_>) -> bool {
    let Some(m) = caps.get(1) else { return false };
    let Some(v) = BigUint::parse_bytes(m.as_str().as_bytes(), 10) else {
        return false;
    };
    v < (BigUint::from(1u8) << 198u32)
}

static DEFS: &[RuleDef] = &[
    RuleDef {
        id: RuleId::BalanceEquality,
        title: "Balance equality",
        severity: Severity::High,
        logic: Logic::PerLine,
        keywords: &["this.balance"],
        patterns: &[num(
            1,
            r"^\s*(?:if|while|require)\s*\(.*(?:this\.balance\s*==\s*\d+\s*ether|\d+\s*ether\s*==\s*this\.balance).*\).*$",
        )],
        exemptions: &[],
        refine: None,
        description: "Strict equality on the contract balance can be broken by ether forced in through selfdestruct or mining.",
        suggestion: "Compare the balance with >= or <=, or track deposits in a state variable.",
    },
    RuleDef {
        id: RuleId::MishandledExceptions,
        title: "Mishandled exceptions",
        severity: Severity::High,
        logic: Logic::PerLine,
        keywords: &["send", "call"],
        patterns: &[aux(
            "external-call",
            r"\.(?:send|call|delegatecall|callcode)\s*[.({]",
        )],
        exemptions: &[num(
            2,
            r"^\s*(?:if|require)\s*\(.*.(?:send|delegatecall|call|callcode).*\(.*\).*\)",
        )],
        refine: None,
        description: "The return value of a low-level external call is not checked; a failed call goes unnoticed.",
        suggestion: "Wrap the call in require(...) or test its result with if.",
    },
    RuleDef {
        id: RuleId::DosExternalContract,
        title: "DoS by external contract",
        severity: Severity::High,
        logic: Logic::PerLine,
        keywords: &["if", "require", "for"],
        patterns: &[
            num(3, r"\b(?:if|require)\s*\(.*\.\w+\(.*\).*\)"),
            num(4, r"\bfor\s*\(.*;.+\.\w+\(.*\).*;.*\)"),
        ],
        exemptions: &[],
        refine: None,
        description: "A condition depends on a call into another contract, which may be killed or controlled by an attacker.",
        suggestion: "Avoid making control flow depend on external calls, or review the callee carefully.",
    },
    RuleDef {
        id: RuleId::TxOriginAuth,
        title: "Using tx.origin for authentication",
        severity: Severity::High,
        logic: Logic::PerLine,
        keywords: &["tx.origin"],
        patterns: &[num(5, r"^\s*(?:require|if)\s*\(.*tx\.origin.*\)")],
        exemptions: &[],
        refine: None,
        description: "tx.origin is used for authorization; an intermediate contract can act on the victim's behalf.",
        suggestion: "Authenticate with msg.sender instead of tx.origin.",
    },
    RuleDef {
        id: RuleId::MissingConstructor,
        title: "Missing constructor",
        severity: Severity::High,
        logic: Logic::Compound,
        keywords: &["constructor", "function"],
        patterns: &[
            num(6, r"^\s*constructor\s*\("),
            num(7, r"^\s*function\s*([A-Za-z_$][\w$]*)\s*\("),
        ],
        exemptions: &[],
        refine: None,
        description: "The contract declares no constructor; a misspelled constructor name becomes a public function.",
        suggestion: "Declare the constructor with the constructor keyword.",
    },
    RuleDef {
        id: RuleId::LockedMoney,
        title: "Locked money",
        severity: Severity::High,
        logic: Logic::Compound,
        keywords: &["payable", "transfer", "send", "call"],
        patterns: &[
            num(8, r"\bfunction\b.*\).*\spayable(?:\s|\{|;|$)"),
            num(9, r"\.(?:transfer|send)\s*\(.+\)"),
            num(10, r"\.call\.\s*(?:value|gas\(.+\)\.value)\("),
            num(11, r"\b(?:delegatecall|staticcall|callvalue|call)\s*\("),
            aux("call-options-value", r"\.call\s*\{[^}]*\bvalue\s*:"),
        ],
        exemptions: &[],
        refine: None,
        description: "The contract can receive ether but has no statement that sends ether out; funds are locked forever.",
        suggestion: "Add a withdrawal path (transfer, send or call) or remove payable.",
    },
    RuleDef {
        id: RuleId::UnsafeTypeInference,
        title: "Unsafe type inference",
        severity: Severity::High,
        logic: Logic::PerLine,
        keywords: &["var"],
        patterns: &[num(12, r"\bvar\b\s+\w+\s*=\s*(\d+)\b")],
        exemptions: &[],
        refine: Some(var_literal_in_range),
        description: "var infers the smallest integer type holding the initial value, which can overflow (for example uint8 in a loop).",
        suggestion: "Declare the variable with an explicit type such as uint256.",
    },
    RuleDef {
        id: RuleId::ByteArray,
        title: "byte[]",
        severity: Severity::Medium,
        logic: Logic::PerLine,
        keywords: &["byte"],
        patterns: &[num(13, r"\bbyte\s*\[\s*\]\s")],
        exemptions: &[],
        refine: None,
        description: "byte[] pads every element to a full word and wastes storage and gas.",
        suggestion: "Use bytes instead of byte[].",
    },
    RuleDef {
        id: RuleId::CostlyLoop,
        title: "Costly loop",
        severity: Severity::Medium,
        logic: Logic::Compound,
        keywords: &["for", "while"],
        patterns: &[
            num(14, r"\bfor\s*\(.*;.*\..*;.*\)"),
            num(15, r"\bwhile\s*\(.*\..*\)"),
            num(16, r"\bfor\s*\(.*;.*\w+.*;.*\)"),
            num(17, r"\bwhile\s*\(.*\w+.*\)"),
            num(18, r"\bfor\s*\(.*;.*\(.*\).*;.*\)"),
            num(19, r"\bwhile\s*\(.*\(.*\).*\)"),
        ],
        exemptions: &[],
        refine: None,
        description: "The loop may execute too many statements for one transaction to stay affordable.",
        suggestion: "Bound the iteration count with a constant or split the work across transactions.",
    },
    RuleDef {
        id: RuleId::TimestampDependence,
        title: "Timestamp dependence",
        severity: Severity::Low,
        logic: Logic::PerLine,
        keywords: &["now", "block.timestamp"],
        patterns: &[num(20, r"\bnow\b|\bblock\.timestamp\b")],
        exemptions: &[],
        refine: None,
        description: "The result depends on the block timestamp, which miners can influence.",
        suggestion: "Do not use now or block.timestamp for randomness or critical decisions.",
    },
    RuleDef {
        id: RuleId::TokenApiViolation,
        title: "Token API violation",
        severity: Severity::Low,
        logic: Logic::Compound,
        keywords: &["contract", "interface", "function"],
        patterns: &[
            num(
                21,
                r"^\s*(?:abstract\s+)?(?:contract|interface)\s+\w*(?i:erc)(?:20|721|165)\w*(?:\s|\{|;|$)",
            ),
            num(
                22,
                r"^\s*function\s+\b(?:transfer|transferFrom|approve|supportsInterface|isApprovedForAll)\b",
            ),
            aux("throwing", r"\brequire\s*\(|\bassert\s*\(|\bthrow\b|\brevert\s*\("),
        ],
        exemptions: &[],
        refine: None,
        description: "A token-standard function that should report failure by returning false throws instead.",
        suggestion: "Return false on failure instead of require/assert/throw/revert.",
    },
    RuleDef {
        id: RuleId::FixedPointType,
        title: "Using fixed point number type",
        severity: Severity::Low,
        logic: Logic::PerLine,
        keywords: &["fixed"],
        patterns: &[num(23, r"\b(?:ufixed|fixed)(?:\d{1,3}x\d{0,2})?\s+\w+")],
        exemptions: &[],
        refine: None,
        description: "Fixed point variables can be declared but not assigned to or from.",
        suggestion: "Use integer arithmetic with an explicit scale factor.",
    },
    RuleDef {
        id: RuleId::PrivateModifier,
        title: "Private modifier",
        severity: Severity::Low,
        logic: Logic::PerLine,
        keywords: &["private"],
        patterns: &[num(24, r"\bprivate\b")],
        exemptions: &[num(25, r"\bfunction\b")],
        refine: None,
        description: "private does not hide a state variable; anyone can read its value from the chain.",
        suggestion: "Never store secrets on chain, private or not.",
    },
    RuleDef {
        id: RuleId::RedundantRefusal,
        title: "Redundant refusal of payment",
        severity: Severity::Low,
        logic: Logic::Compound,
        keywords: &["function"],
        patterns: &[
            num(26, r"\bfunction\s*\(\s*\).*\spayable\b"),
            aux("refusal", r"\brevert\s*\(|\bthrow\b"),
        ],
        exemptions: &[],
        refine: None,
        description: "Since compiler 0.4.0 contracts without a fallback reject ether already; a payable fallback that reverts is redundant.",
        suggestion: "Remove the fallback function.",
    },
    RuleDef {
        id: RuleId::CompilerVersion,
        title: "Compiler version problem",
        severity: Severity::Low,
        logic: Logic::Compound,
        keywords: &["pragma"],
        patterns: &[
            num(27, r"^\s*pragma\s+solidity\s+\^\d+\.\d+\.\d+\s*;"),
            num(28, r"^\s*pragma\s+solidity\s+>=\s*\d+\.\d+\.\d+"),
            num(29, r"^\s*pragma\s+experimental\s+"),
        ],
        exemptions: &[],
        refine: None,
        description: "The compiler version is not pinned to a bounded range.",
        suggestion: "Pin the version (pragma solidity 0.5.0;) or bound it (pragma solidity >=0.5.0 <0.6.0;).",
    },
    RuleDef {
        id: RuleId::StyleGuide,
        title: "Style guide violation",
        severity: Severity::Low,
        logic: Logic::Compound,
        keywords: &["function", "event", "["],
        patterns: &[
            num(30, r"\bfunction\s+[^a-z]\w+"),
            num(31, r"^\s*event\s+[^A-Z]\w+"),
            num(32, r"\b\w+\s+\[.*\]"),
        ],
        exemptions: &[],
        refine: None,
        description: "Naming or layout differs from the style guide: functions start lowercase, events uppercase, no space before [ in array types.",
        suggestion: "Rename or reformat the declaration to follow the style guide.",
    },
    RuleDef {
        id: RuleId::IntegerDivision,
        title: "Integer division",
        severity: Severity::Low,
        logic: Logic::PerLine,
        keywords: &["/"],
        patterns: &[num(33, r"\d+\s*/\s*\d+")],
        exemptions: &[],
        refine: None,
        description: "Integer division rounds down; amounts computed this way may lose value.",
        suggestion: "Multiply before dividing or keep amounts in the smallest unit.",
    },
    RuleDef {
        id: RuleId::ImplicitVisibility,
        title: "Implicit visibility level",
        severity: Severity::Low,
        logic: Logic::Compound,
        keywords: &["int", "fixed", "bool", "address", "mapping", "byte", "string"],
        patterns: &[
            num(34, r"^\s*(?:uint|int)\d{0,3}\s+\w+"),
            num(35, r"^\s*(?:ufixed|fixed)(?:\d{1,3}x\d{0,2})?\s+\w+"),
            num(36, r"^\s*bool\s+\w+"),
            num(37, r"^\s*address\s+\w+"),
            num(38, r"^\s*mapping\s*\(\s*\w+\s*=>"),
            num(39, r"^\s*(?:bytes\d{0,2}|byte)\s+\w+"),
            num(40, r"^\s*string\s+"),
        ],
        exemptions: &[
            num(41, r"^\s*\w+\s*\[.*\]\s+"),
            aux("explicit", r"\b(?:public|private|internal|external)\b"),
        ],
        refine: None,
        description: "The state variable has no explicit visibility.",
        suggestion: "Declare the visibility (public, internal or private) explicitly.",
    },
];

fn compile(rule: RuleId, defs: &[PatternDef]) -> Result<Vec<Pattern>, CatalogError> {
    defs.iter()
        .map(|d| {
            Regex::new(d.source)
                .map(|regex| Pattern {
                    ordinal: d.ordinal,
                    name: d.name,
                    regex,
                })
                .map_err(|e| CatalogError::PatternCompile {
                    rule,
                    pattern: d.ordinal.map_or_else(|| d.name.to_string(), |o| o.to_string()),
                    message: e.to_string(),
                })
        })
        .collect()
}

impl RuleCatalog {
    /// Compiles every pattern.
    pub fn load() -> Result<Self, CatalogError> {
        let rules = DEFS
            .iter()
            .map(|d| {
                Ok(RuleSpec {
                    id: d.id,
                    title: d.title,
                    severity: d.severity,
                    keywords: d.keywords,
                    patterns: compile(d.id, d.patterns)?,
                    exemptions: compile(d.id, d.exemptions)?,
                    refine: d.refine,
                    logic: d.logic,
                    description: d.description,
                    suggestion: d.suggestion,
                })
            })
            .collect::<Result<Vec<_>, CatalogError>>()?;
        Ok(RuleCatalog { rules })
    }

    /// Process-wide compiled catalog.
    pub fn standard() -> &'static RuleCatalog {
        static CATALOG: OnceLock<RuleCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| RuleCatalog::load().expect("built-in catalog compiles"))
    }

    pub fn rule(&self, id: RuleId) -> &RuleSpec {
        self.rules
            .iter()
            .find(|r| r.id == id)
            .expect("catalog holds every rule id")
    }

    /// Raw pattern sources, for cross-checking against another regex engine.
    pub fn pattern_sources() -> Vec<(RuleId, Option<u8>, &'static str)> {
        DEFS.iter()
            .flat_map(|d| {
                d.patterns
                    .iter()
                    .chain(d.exemptions)
                    .map(move |p| (d.id, p.ordinal, p.source))
            })
            .collect()
    }
}

/// Dispatches a compound rule to its detector.
pub fn run_compound(
    rule: &RuleSpec,
    fs: &FormattedSource,
    ctx: &ScanContext<'_>,
) -> Result<Vec<Finding>, AnalysisError> {
    match rule.id {
        RuleId::MissingConstructor => detect_missing_constructor(rule, fs, ctx.prefilter),
        RuleId::LockedMoney => detect_locked_money(rule, fs, ctx.prefilter),
        RuleId::CostlyLoop => loop_analyzer::detect_costly_loop(rule, fs, &ctx.gas, ctx.prefilter),
        RuleId::TokenApiViolation => detect_token_api_violation(rule, fs, ctx.inheritance, ctx.prefilter),
        RuleId::RedundantRefusal => {
            let version = version::declared_version(fs);
            detect_redundant_refusal(rule, fs, version, ctx.prefilter)
        }
        RuleId::CompilerVersion => Ok(detect_compiler_version(rule, fs, ctx.prefilter).0),
        RuleId::StyleGuide => detect_style_guide(rule, fs, ctx.prefilter),
        RuleId::ImplicitVisibility => detect_implicit_visibility(rule, fs, ctx.prefilter),
        other => unreachable!("{other} is a per-line rule"),
    }
}

/// Convenience for the private-modifier rule, which is pure pattern data.
pub fn detect_private_modifier(rule: &RuleSpec, fs: &FormattedSource, prefilter: bool) -> Vec<Finding> {
    crate::rule_engine::match_rule(rule, fs, prefilter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formatter::format_source;
    use crate::rule_engine::match_rule;
    use std::collections::BTreeMap;

    #[test]
    fn catalog_has_eighteen_rules_in_order() {
        let cat = RuleCatalog::load().unwrap();
        let ids: Vec<_> = cat.rules.iter().map(|r| r.id).collect();
        assert_eq!(ids, RuleId::ALL.to_vec());
    }

    #[test]
    fn pattern_numbers_partition_one_to_forty_one() {
        let cat = RuleCatalog::standard();
        let mut owner: BTreeMap<u8, RuleId> = BTreeMap::new();
        for rule in &cat.rules {
            for p in rule.patterns.iter().chain(&rule.exemptions) {
                if let Some(o) = p.ordinal {
                    assert!(owner.insert(o, rule.id).is_none(), "pattern {o} used twice");
                }
            }
        }
        assert_eq!(owner.keys().copied().collect::<Vec<_>>(), (1..=41).collect::<Vec<u8>>());
    }

    #[test]
    fn per_line_rules_have_keywords() {
        for rule in &RuleCatalog::standard().rules {
            assert!(!rule.keywords.is_empty(), "{}", rule.id);
        }
    }

    #[test]
    fn severities_follow_problem_groups() {
        let cat = RuleCatalog::standard();
        let high = cat.rules.iter().filter(|r| r.severity == Severity::High).count();
        let medium = cat.rules.iter().filter(|r| r.severity == Severity::Medium).count();
        assert_eq!((high, medium), (7, 2));
        assert_eq!(cat.rule(RuleId::CostlyLoop).severity, Severity::Medium);
        assert_eq!(cat.rule(RuleId::ImplicitVisibility).severity, Severity::Low);
    }

    fn hits(id: RuleId, src: &str) -> Vec<usize> {
        let fs = format_source("t.sol", src).unwrap();
        match_rule(RuleCatalog::standard().rule(id), &fs, true)
            .into_iter()
            .map(|f| f.original_line)
            .collect()
    }

    #[test]
    fn private_modifier_skips_functions() {
        assert_eq!(hits(RuleId::PrivateModifier, "bytes32 private password;"), vec![1]);
        assert!(hits(RuleId::PrivateModifier, "function f() private {\n}").is_empty());
        assert!(hits(RuleId::PrivateModifier, "uint public x;").is_empty());
    }

    #[test]
    fn mishandled_exceptions_reports_unchecked_calls() {
        assert_eq!(
            hits(RuleId::MishandledExceptions, "addr.call.value(1 wei); //transfer 1 wei to addr\nbalance[addr] -= 1;"),
            vec![1]
        );
        assert!(hits(RuleId::MishandledExceptions, "if(!(msg.sender.call.value(amount)())){\nthrow;\n}").is_empty());
        assert!(hits(RuleId::MishandledExceptions, "require(to.send(v));").is_empty());
        assert!(hits(RuleId::MishandledExceptions, "msg.sender.transfer(v);").is_empty());
        assert_eq!(hits(RuleId::MishandledExceptions, "to.send(v);"), vec![1]);
        assert!(hits(RuleId::MishandledExceptions, "x.callback(v);").is_empty());
    }

    #[test]
    fn unsafe_type_inference_magnitude_bound() {
        assert_eq!(hits(RuleId::UnsafeTypeInference, "for (var i = 0; i <= 256; i++){\n}"), vec![1]);
        let just_below = (BigUint::from(1u8) << 198u32) - 1u8;
        assert_eq!(hits(RuleId::UnsafeTypeInference, &format!("var x = {just_below};")), vec![1]);
        let at = BigUint::from(1u8) << 198u32;
        assert!(hits(RuleId::UnsafeTypeInference, &format!("var x = {at};")).is_empty());
        assert!(hits(RuleId::UnsafeTypeInference, "var x = 1e5;").is_empty());
        assert!(hits(RuleId::UnsafeTypeInference, "var x = 1_000;").is_empty());
        assert!(hits(RuleId::UnsafeTypeInference, "uint8 x = 1;").is_empty());
    }

    #[test]
    fn simple_pattern_rules() {
        assert_eq!(hits(RuleId::ByteArray, "byte[] data;"), vec![1]);
        assert!(hits(RuleId::ByteArray, "bytes data;").is_empty());
        assert_eq!(hits(RuleId::TimestampDependence, "if (now % 2 == 0) winner = a;"), vec![1]);
        assert_eq!(hits(RuleId::TimestampDependence, "uint t = block.timestamp;"), vec![1]);
        assert!(hits(RuleId::TimestampDependence, "uint nowhere = 1;").is_empty());
        assert_eq!(hits(RuleId::FixedPointType, "fixed128x18 price;"), vec![1]);
        assert_eq!(hits(RuleId::FixedPointType, "ufixed rate;"), vec![1]);
        assert_eq!(hits(RuleId::IntegerDivision, "uint half = 5 / 2;"), vec![1]);
        assert!(hits(RuleId::IntegerDivision, "uint q = a / b;").is_empty());
        assert_eq!(hits(RuleId::TxOriginAuth, "require(tx.origin == owner);"), vec![1]);
        assert_eq!(
            hits(RuleId::DosExternalContract, "if(provider.isCustomer(_customer)){\n}"),
            vec![1]
        );
        assert_eq!(
            hits(RuleId::DosExternalContract, "for (uint i = 0; i < list.size(); i++){\n}"),
            vec![1]
        );
    }
}
