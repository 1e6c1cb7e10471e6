use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleSpec};
use crate::structure::{contracts, AnalysisError, ContractKind};

/// One finding per contract (not interface or library) whose body has
/// neither a `constructor(` line nor a function named after the contract.
pub fn detect_missing_constructor(
    rule: &RuleSpec,
    fs: &FormattedSource,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let keyword_ctor = rule.pattern(6);
    let named_ctor = rule.pattern(7);
    let mut out = Vec::new();
    for c in contracts(fs)? {
        if c.kind != ContractKind::Contract {
            continue;
        }
        let has_ctor = fs.lines[c.body()].iter().any(|line| {
            if !rule.admits(line, prefilter) {
                return false;
            }
            keyword_ctor.is_match(line)
                || named_ctor
                    .regex
                    .captures(line)
                    .is_some_and(|caps| caps[1] == c.name)
        });
        if !has_ctor {
            let f = Finding::at(rule, fs, c.header, &fs.lines[c.header]);
            out.push(f.with_message(format!(
                "Contract {} declares no constructor; a misspelled constructor name becomes a public function.",
                c.name
            )));
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

    fn run(src: &str) -> Vec<usize> {
        let fs = format_source("t.sol", src).unwrap();
        let rule = RuleCatalog::standard().rule(RuleId::MissingConstructor);
        detect_missing_constructor(rule, &fs, true)
            .unwrap()
            .iter()
            .map(|f| f.original_line)
            .collect()
    }

    #[test]
    fn misspelled_constructor_is_reported() {
        let src = "pragma solidity 0.5.0;\n\ncontract Foo{\naddress public owner;\nfunction foo() public{\nowner = msg.sender;\n}\n}";
        assert_eq!(run(src), vec![3]);
    }

    #[test]
    fn constructor_keyword_or_matching_name_counts() {
        assert!(run("contract A{\nconstructor (address _owner){\n}\n}").is_empty());
        assert!(run("contract Vault{\nfunction Vault(bytes32 p) public payable{\n}\n}").is_empty());
        assert_eq!(run("contract Vault{\nfunction vault() public{\n}\n}"), vec![1]);
    }

    #[test]
    fn empty_contract_reported_interfaces_and_libraries_exempt() {
        assert_eq!(run("contract E {}"), vec![1]);
        assert!(run("interface I { function f() external; }\nlibrary L { function g() internal {} }").is_empty());
    }

    #[test]
    fn each_contract_checked_separately() {
        let src = "contract A {\nconstructor() public {}\n}\ncontract B {\nfunction A() public {}\n}";
        assert_eq!(run(src), vec![4]);
    }
}
