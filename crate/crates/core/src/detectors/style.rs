use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleId, RuleSpec};
use crate::structure::{contracts, AnalysisError};

use super::RuleCatalog;

/// Function names not starting lowercase, event names not starting
/// uppercase, and a space between an array type and `[`. A function named
/// after its contract is a constructor and belongs to missing-constructor.
pub fn detect_style_guide(
    rule: &RuleSpec,
    fs: &FormattedSource,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let named_ctor = RuleCatalog::standard()
        .rule(RuleId::MissingConstructor)
        .pattern(7);
    let fn_name = rule.pattern(30);
    let event_name = rule.pattern(31);
    let array_space = rule.pattern(32);
    let mut owner: Vec<Option<usize>> = vec![None; fs.len()];
    let cs = contracts(fs)?;
    for (n, c) in cs.iter().enumerate() {
        for slot in &mut owner[c.body()] {
            *slot = Some(n);
        }
    }
    let mut out = Vec::new();
    for (i, line) in fs.lines.iter().enumerate() {
        if !rule.admits(line, prefilter) {
            continue;
        }
        let is_ctor = || {
            owner[i].is_some_and(|n| {
                named_ctor
                    .regex
                    .captures(line)
                    .is_some_and(|caps| caps[1] == cs[n].name)
            })
        };
        let msg = if fn_name.is_match(line) && !is_ctor() {
            "Function names should start with a lowercase letter."
        } else if event_name.is_match(line) {
            "Event names should start with an uppercase letter."
        } else if array_space.is_match(line) {
            "Array types should have no space before [."
        } else {
            continue;
        };
        out.push(Finding::at(rule, fs, i, line).with_message(msg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formatter::format_source;

    fn run(src: &str) -> Vec<usize> {
        let fs = format_source("t.sol", src).unwrap();
        let rule = RuleCatalog::standard().rule(RuleId::StyleGuide);
        detect_style_guide(rule, &fs, true)
            .unwrap()
            .iter()
            .map(|f| f.original_line)
            .collect()
    }

    #[test]
    fn confusing_names() {
        let src = "//the nameing of twn functions is confusing\nfunction transfer() public{ /*do something*/}\nfunction _transfer() public{ /*do something*/}";
        assert_eq!(run(src), vec![3]);
        assert_eq!(run("function Transfer() public {}"), vec![1]);
    }

    #[test]
    fn events_and_arrays() {
        assert_eq!(run("event transferred(address a);"), vec![1]);
        assert!(run("event Transferred(address a);").is_empty());
        assert_eq!(run("uint [] values;"), vec![1]);
        assert!(run("uint[] values;").is_empty());
    }

    #[test]
    fn old_style_constructor_not_reported() {
        assert!(run("contract Vault{\nfunction Vault(bytes32 p) public{\n}\n}").is_empty());
        assert_eq!(run("contract Vault{\nfunction Other(bytes32 p) public{\n}\n}"), vec![2]);
    }
}
