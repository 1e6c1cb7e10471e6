use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleSpec};
use crate::structure::{contracts, depths, AnalysisError, ContractKind};

/// State variable declarations without a visibility keyword. Only lines
/// directly inside a contract or library body are state declarations; the
/// same type patterns inside functions match local variables.
pub fn detect_implicit_visibility(
    rule: &RuleSpec,
    fs: &FormattedSource,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let depth = depths(fs);
    let mut out = Vec::new();
    for c in contracts(fs)? {
        if c.kind == ContractKind::Interface {
            continue;
        }
        for i in c.body() {
            if depth[i] != 1 {
                continue;
            }
            if let Some(m) = rule.hit(&fs.lines[i], prefilter) {
                out.push(Finding::at(rule, fs, i, m));
            }
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
        let rule = RuleCatalog::standard().rule(RuleId::ImplicitVisibility);
        detect_implicit_visibility(rule, &fs, true)
            .unwrap()
            .iter()
            .map(|f| f.original_line)
            .collect()
    }

    #[test]
    fn state_variables_without_visibility() {
        let src = "contract A {\nmapping (address => uint) userBalance;\nuint256 public total;\naddress owner;\nbool private flag;\nstring name;\nbytes32 h;\nfixed128x18 f;\nint8 s;\n}";
        assert_eq!(run(src), vec![2, 4, 6, 7, 8, 9]);
    }

    #[test]
    fn locals_and_interfaces_ignored() {
        let src = "contract A {\nfunction f() public {\nuint x = 1;\n}\n}\ninterface I {\n}";
        assert!(run(src).is_empty());
    }

    #[test]
    fn spaced_array_type_is_exempt() {
        assert!(run("contract A {\nuint [] xs;\n}").is_empty());
    }
}
