use crate::formatter::FormattedSource;
use crate::rule_engine::{Finding, RuleSpec};
use crate::structure::{assembly_blocks, contracts, AnalysisError, ContractKind};

/// A contract with a payable function but no way to send ether out.
pub fn detect_locked_money(
    rule: &RuleSpec,
    fs: &FormattedSource,
    prefilter: bool,
) -> Result<Vec<Finding>, AnalysisError> {
    let payable = rule.pattern(8);
    let sends = [rule.pattern(9), rule.pattern(10), rule.aux("call-options-value")];
    let asm_call = rule.pattern(11);
    let mut out = Vec::new();
    for c in contracts(fs)? {
        if c.kind != ContractKind::Contract {
            continue;
        }
        let asm = assembly_blocks(fs, c.body())?;
        let in_asm = |i: usize| asm.iter().any(|r| r.contains(&i));
        let mut receives = false;
        let mut pays_out = false;
        for i in c.body() {
            let line = &fs.lines[i];
            if !rule.admits(line, prefilter) {
                continue;
            }
            if in_asm(i) {
                pays_out |= asm_call.is_match(line);
            } else {
                receives |= payable.is_match(line);
                pays_out |= sends.iter().any(|p| p.is_match(line));
            }
        }
        if receives && !pays_out {
            let f = Finding::at(rule, fs, c.header, &fs.lines[c.header]);
            out.push(f.with_message(format!(
                "Contract {} can receive ether but contains no statement that sends it; the balance is locked.",
                c.name
            )));
        }
    }
    Ok(out)
}
