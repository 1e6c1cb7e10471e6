//! Re-entrancy prevention by vaccine insertion.
//!
//! A dangerous statement sends ether with `X.call.value(E)()` (or with an
//! empty-string payload): unrestricted gas, no target function. Every
//! function holding one, and every externally callable function that can
//! reach one through internal calls, is rewritten so the transfer aborts
//! unless the receiver's ledger entry dropped before the call.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::formatter::FormattedSource;
use crate::instrument::{InsertionKind, InstrumentedSource, Plan};
use crate::structure::{contracts, depths, functions, AnalysisError, ContractInfo, FunctionInfo, FunctionKind};
use crate::text::{code_only, is_word, paren_group};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DangerousStatement {
    /// 0-based formatted line.
    pub formatted_line: usize,
    pub receiver_expr: String,
    pub value_expr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallChain {
    /// Head first, tail (the function holding the dangerous statement) last.
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRef {
    /// 0-based formatted line.
    pub declaration_line: usize,
    pub variable_name: String,
}

fn call_value_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\.\s*call\s*\.\s*value\s*\(").unwrap())
}

fn ledger_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*mapping\s*\(\s*address\s*=>\s*uint(?:256)?\s*\)\s*(?:[A-Za-z_$][\w$]*\s+)*([A-Za-z_$][\w$]*)\s*(?:;|=)").unwrap()
    })
}

fn call_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_$][\w$]*)\s*\(").unwrap())
}

/// Byte offset where the receiver expression ending at `end` begins:
/// identifiers, dots and balanced bracket groups.
fn receiver_start(code: &[u8], end: usize) -> usize {
    let mut i = end;
    while i > 0 {
        let c = code[i - 1];
        if c == b')' || c == b']' {
            let (open, close) = if c == b')' { (b'(', b')') } else { (b'[', b']') };
            let mut depth = 0usize;
            let mut j = i;
            while j > 0 {
                j -= 1;
                if code[j] == close {
                    depth += 1;
                } else if code[j] == open {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
            }
            if depth != 0 {
                return i;
            }
            i = j;
        } else if c == b'.' || c.is_ascii_alphanumeric() || c == b'_' || c == b'$' {
            i -= 1;
        } else {
            break;
        }
    }
    i
}

/// The first dangerous call on a line, if any.
pub fn dangerous_call(line: &str) -> Option<DangerousStatement> {
    let code = code_only(line);
    for m in call_value_re().find_iter(&code) {
        let open = m.end() - 1;
        let Some((_, after)) = paren_group(&code, open) else { continue };
        let Some((payload, _)) = paren_group(&code, after + leading_ws(&code[after..])) else {
            continue;
        };
        let payload = payload.trim();
        if !(payload.is_empty() || payload == "\"\"" || payload == "''") {
            continue;
        }
        let start = receiver_start(code.as_bytes(), m.start());
        if start == m.start() {
            continue;
        }
        return Some(DangerousStatement {
            formatted_line: 0,
            receiver_expr: line[start..m.start()].trim().to_string(),
            value_expr: line[open + 1..after - 1].trim().to_string(),
        });
    }
    None
}

fn leading_ws(s: &str) -> usize {
    s.len() - s.trim_start().len()
}

pub fn find_dangerous_statements(fs: &FormattedSource) -> Vec<DangerousStatement> {
    fs.lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.contains("call"))
        .filter_map(|(i, l)| {
            dangerous_call(l).map(|mut d| {
                d.formatted_line = i;
                d
            })
        })
        .collect()
}

/// First `mapping(address => uint|uint256)` declared directly in the body.
pub fn locate_ledger(fs: &FormattedSource, contract: &ContractInfo) -> Option<LedgerRef> {
    let depth = depths(fs);
    contract.body().find_map(|i| {
        if depth[i] != 1 {
            return None;
        }
        ledger_re().captures(&fs.lines[i]).map(|c| LedgerRef {
            declaration_line: i,
            variable_name: c[1].to_string(),
        })
    })
}

/// Call graph of one contract: for each function, the same-contract
/// functions its body invokes.
fn call_graph(fs: &FormattedSource, fns: &[FunctionInfo]) -> Vec<BTreeSet<usize>> {
    let by_name: BTreeMap<&str, Vec<usize>> = fns.iter().enumerate().fold(BTreeMap::new(), |mut m, (i, f)| {
        if f.kind == FunctionKind::Function {
            m.entry(f.name.as_str()).or_default().push(i);
        }
        m
    });
    fns.iter()
        .map(|f| {
            let mut calls = BTreeSet::new();
            for i in f.body() {
                let code = code_only(&fs.lines[i]);
                for c in call_name_re().captures_iter(&code) {
                    let m = c.get(1).unwrap();
                    let prev = code[..m.start()].chars().next_back();
                    if prev.is_some_and(|p| p == '.' || is_word(p)) {
                        continue;
                    }
                    if let Some(targets) = by_name.get(m.as_str()) {
                        calls.extend(targets.iter().copied());
                    }
                }
            }
            calls
        })
        .collect()
}

struct ContractModel {
    fns: Vec<FunctionInfo>,
    /// Dangerous statements per function index.
    dangerous: BTreeMap<usize, Vec<DangerousStatement>>,
    chains: Vec<Vec<usize>>,
}

fn model_contract(fs: &FormattedSource, c: &ContractInfo, all: &[DangerousStatement]) -> Result<ContractModel, AnalysisError> {
    let fns = functions(fs, c)?;
    let mut dangerous: BTreeMap<usize, Vec<DangerousStatement>> = BTreeMap::new();
    for d in all {
        if let Some(fi) = fns.iter().position(|f| f.body().contains(&d.formatted_line)) {
            dangerous.entry(fi).or_default().push(d.clone());
        }
    }
    let graph = call_graph(fs, &fns);
    let mut callers: Vec<Vec<usize>> = vec![Vec::new(); fns.len()];
    for (from, tos) in graph.iter().enumerate() {
        for &to in tos {
            if to != from {
                callers[to].push(from);
            }
        }
    }
    let mut chains = Vec::new();
    for &tail in dangerous.keys() {
        let mut path = vec![tail];
        walk_callers(&fns, &callers, &mut path, &mut chains);
    }
    Ok(ContractModel { fns, dangerous, chains })
}

/// Depth-first over callers; records every acyclic path whose current head
/// is externally callable.
fn walk_callers(fns: &[FunctionInfo], callers: &[Vec<usize>], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let head = *path.last().unwrap();
    if fns[head].externally_callable() {
        out.push(path.iter().rev().copied().collect());
    }
    for &c in &callers[head] {
        if !path.contains(&c) {
            path.push(c);
            walk_callers(fns, callers, path, out);
            path.pop();
        }
    }
}

/// Call chains ending at functions that hold a dangerous statement, across
/// every contract in the file.
pub fn build_call_chains(fs: &FormattedSource) -> Result<Vec<CallChain>, AnalysisError> {
    let all = find_dangerous_statements(fs);
    let mut out = Vec::new();
    for c in contracts(fs)? {
        let m = model_contract(fs, &c, &all)?;
        out.extend(m.chains.iter().map(|chain| CallChain {
            functions: chain.iter().map(|&i| m.fns[i].name.clone()).collect(),
        }));
    }
    Ok(out)
}

fn mentions(fs: &FormattedSource, c: &ContractInfo, word: &str) -> bool {
    let re = Regex::new(&format!(r"\b{}\b", regex::escape(word))).unwrap();
    fs.lines[c.header..=c.end].iter().any(|l| re.is_match(l))
}

/// Inserts vaccines A to D and a `deposit_test` probe into every contract
/// that holds a dangerous statement and declares a ledger.
pub fn insert_vaccines(fs: &FormattedSource) -> Result<InstrumentedSource, AnalysisError> {
    let all = find_dangerous_statements(fs);
    let mut notices = Vec::new();
    if all.is_empty() {
        notices.push("No dangerous call.value statement found; the source is unchanged.".to_string());
        return Ok(InstrumentedSource::identity(fs, notices));
    }
    let mut plan = Plan::default();
    for (ordinal, c) in contracts(fs)?.iter().enumerate() {
        let m = model_contract(fs, c, &all)?;
        if m.dangerous.is_empty() {
            continue;
        }
        let Some(ledger) = locate_ledger(fs, c) else {
            notices.push(format!(
                "Contract {} declares no mapping(address => uint256) ledger; re-entrancy prevention does not apply and it is left unchanged.",
                c.name
            ));
            continue;
        };
        let (aexe, bexe) = if mentions(fs, c, "Aexe") || mentions(fs, c, "Bexe") {
            (format!("Aexe_{}", ordinal + 1), format!("Bexe_{}", ordinal + 1))
        } else {
            ("Aexe".to_string(), "Bexe".to_string())
        };
        let l = &ledger.variable_name;

        plan.after(c.header, InsertionKind::VaccineD, format!("uint256 public {aexe}=0;"));
        plan.after(c.header, InsertionKind::VaccineD, format!("uint256 public {bexe}=0;"));

        // Vaccine A: direct functions use their own first receiver; heads use
        // the receiver of the first chain tail they reach.
        let mut a_receiver: BTreeMap<usize, String> = BTreeMap::new();
        for (&fi, ds) in &m.dangerous {
            a_receiver.insert(fi, ds[0].receiver_expr.clone());
        }
        for chain in &m.chains {
            let tail = *chain.last().unwrap();
            let r = m.dangerous[&tail][0].receiver_expr.clone();
            a_receiver.entry(chain[0]).or_insert(r);
        }
        for (&fi, r) in &a_receiver {
            let first = m.fns[fi].body().start;
            plan.before(first, InsertionKind::VaccineA, format!("if({bexe}==0){{"));
            plan.before(first, InsertionKind::VaccineA, format!("{bexe}={l}[{r}];"));
            plan.before(first, InsertionKind::VaccineA, "}");
        }
        for ds in m.dangerous.values() {
            for d in ds {
                let r = &d.receiver_expr;
                plan.before(d.formatted_line, InsertionKind::VaccineB, format!("{aexe}={l}[{r}];"));
                plan.before(d.formatted_line, InsertionKind::VaccineB, format!("require({aexe}<{bexe});"));
                plan.after(d.formatted_line, InsertionKind::VaccineC, format!("{aexe}=0;"));
                plan.after(d.formatted_line, InsertionKind::VaccineC, format!("{bexe}=0;"));
            }
        }

        let entry_points: BTreeSet<usize> = a_receiver.keys().copied().collect();
        let mut probe = vec![
            "function deposit_test() public payable{".to_string(),
            format!("{l}[msg.sender]+=msg.value;"),
        ];
        let mut skipped = Vec::new();
        for &fi in &entry_points {
            let f = &m.fns[fi];
            if f.kind != FunctionKind::Function {
                continue;
            }
            if f.takes_no_arguments() {
                probe.push(format!("{}();", f.name));
            } else {
                skipped.push(format!("{}({})", f.name, f.params.trim()));
            }
        }
        if !skipped.is_empty() {
            probe.push(format!("// not called, arguments required: {}", skipped.join(", ")));
        }
        probe.push("}".to_string());
        for text in probe {
            plan.before(c.end, InsertionKind::DepositTest, text);
        }
    }
    if plan.is_empty() {
        return Ok(InstrumentedSource::identity(fs, notices));
    }
    Ok(plan.apply(fs, notices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formatter::format_source;

    #[test]
    fn dangerous_forms() {
        let d = dangerous_call("if (msg.sender.call.value(userBalance[msg.sender])()){").unwrap();
        assert_eq!(d.receiver_expr, "msg.sender");
        assert_eq!(d.value_expr, "userBalance[msg.sender]");
        let d = dangerous_call("if(!(msg.sender.call.value(amount)())){").unwrap();
        assert_eq!(d.receiver_expr, "msg.sender");
        assert!(dangerous_call("bool ok = users[i].wallet.call.value(f(1, 2))(\"\");").is_some());
        assert_eq!(
            dangerous_call("bool ok = users[i].wallet.call.value(1)(\"\");").unwrap().receiver_expr,
            "users[i].wallet"
        );
    }

    #[test]
    fn safe_forms_are_not_dangerous() {
        assert!(dangerous_call("msg.sender.transfer(userBalance[msg.sender]);").is_none());
        assert!(dangerous_call("addr.call.value(1).gas(2300)();").is_none());
        assert!(dangerous_call("addr.call.value(1 wei);").is_none());
        assert!(dangerous_call("addr.call.value(1)(bytes4(keccak256(\"f()\")));").is_none());
        assert!(dangerous_call("emit Log(\"a.call.value(1)()\");").is_none());
    }

    const CHAIN_EXAMPLE: &str = "contract example_1{\n    mapping(address => uint256) userBalance;\n\n    function A() public{\n        B();\n    }\n\n    function B() internal{\n        C();\n    }\n\n    function C() internal{\n        msg.sender.call.value(1)();\n        userBalance[msg.sender] -= 1;\n    }\n}\n";

    #[test]
    fn chains_and_ledger() {
        let fs = format_source("chain.sol", CHAIN_EXAMPLE).unwrap();
        let chains = build_call_chains(&fs).unwrap();
        assert_eq!(chains, vec![CallChain { functions: vec!["A".into(), "B".into(), "C".into()] }]);
        let c = &contracts(&fs).unwrap()[0];
        assert_eq!(locate_ledger(&fs, c).unwrap().variable_name, "userBalance");
        let fs = format_source("m.sol", "contract M {\nmapping(address => uint) first;\nmapping(address => uint256) second;\n}").unwrap();
        let c = &contracts(&fs).unwrap()[0];
        assert_eq!(locate_ledger(&fs, c).unwrap().variable_name, "first");
        let fs = format_source("n.sol", "contract N {\nuint x;\n}").unwrap();
        assert!(locate_ledger(&fs, &contracts(&fs).unwrap()[0]).is_none());
    }

    #[test]
    fn cyclic_calls_terminate() {
        let src = "contract C {\nmapping(address => uint) b;\nfunction p() public { q(); }\nfunction q() internal { p(); msg.sender.call.value(1)(); }\n}";
        let fs = format_source("c.sol", src).unwrap();
        let chains = build_call_chains(&fs).unwrap();
        assert_eq!(chains, vec![CallChain { functions: vec!["p".into(), "q".into()] }]);
    }

    #[test]
    fn chain_example_vaccines() {
        let fs = format_source("chain.sol", CHAIN_EXAMPLE).unwrap();
        let out = insert_vaccines(&fs).unwrap();
        assert_eq!(out.strip_insertions(), fs.lines);
        let text = out.lines.join("\n");
        assert!(text.contains("function A() public{\nif(Bexe==0){\nBexe=userBalance[msg.sender];\n}\nB();"));
        assert!(text.contains("function B() internal{\nC();"));
        assert!(text.contains(
            "function C() internal{\nif(Bexe==0){\nBexe=userBalance[msg.sender];\n}\nAexe=userBalance[msg.sender];\nrequire(Aexe<Bexe);\nmsg.sender.call.value(1)();\nAexe=0;\nBexe=0;\nuserBalance[msg.sender] -= 1;"
        ));
        assert!(text.contains("function deposit_test() public payable{\nuserBalance[msg.sender]+=msg.value;\nA();\nC();\n}\n}"));
    }

    #[test]
    fn no_ledger_leaves_source_unchanged() {
        let fs = format_source("x.sol", "contract X {\nfunction w() public {\nmsg.sender.call.value(1)();\n}\n}").unwrap();
        let out = insert_vaccines(&fs).unwrap();
        assert_eq!(out.lines, fs.lines);
        assert!(out.insertions.is_empty());
        assert_eq!(out.notices.len(), 1);
    }

    #[test]
    fn parameterized_entry_points_listed_in_comment() {
        let src = "contract P {\nmapping(address => uint) bal;\nfunction w(uint v) public {\nmsg.sender.call.value(v)();\n}\n}";
        let fs = format_source("p.sol", src).unwrap();
        let out = insert_vaccines(&fs).unwrap();
        let probe: Vec<_> = out
            .insertions
            .iter()
            .filter(|i| i.kind == InsertionKind::DepositTest)
            .map(|i| i.text.as_str())
            .collect();
        assert_eq!(
            probe,
            vec![
                "function deposit_test() public payable{",
                "bal[msg.sender]+=msg.value;",
                "// not called, arguments required: w(uint v)",
                "}"
            ]
        );
    }

    #[test]
    fn name_collision_gets_suffix() {
        let src = "contract Q {\nmapping(address => uint) bal;\nuint Aexe;\nfunction w() public {\nmsg.sender.call.value(1)();\n}\n}";
        let fs = format_source("q.sol", src).unwrap();
        let out = insert_vaccines(&fs).unwrap();
        assert_eq!(out.lines[1], "uint256 public Aexe_1=0;");
    }
}
