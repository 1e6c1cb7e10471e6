use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use soliditycheck_core::rule_engine::run_rule;
use soliditycheck_core::{format_source, InheritanceIndex, RuleCatalog, ScanContext};

/// Extra lines aimed at keyword and pattern edges.
const EXTRA: &[&str] = &[
    "contract Token is ERC20 {",
    "contract ERC20 {",
    "function approve(address s, uint v) public returns (bool) {",
    "function transfer(address to, uint v) public returns (bool) {",
    "throw;",
    "revert();",
    "function () payable {",
    "function() external payable {",
    "assembly {",
    "x := call(gas, a, v, 0, 0, 0, 0)",
    "}",
    "}",
    "pragma solidity >=0.4.22;",
    "pragma solidity ^0.4.24;",
    "pragma experimental ABIEncoderV2;",
    "while (i < list.length) {",
    "for (uint i = 0; i < users.length; i++) {",
    "for (uint8 j = 0; j < 300; j++) {",
    "uint256 public whileAgo = 3;",
    "event transferred(address a);",
    "uint [] values;",
    "ufixed128x18 rate;",
    "uint half = 7 / 2;",
    "bytes32 private seed;",
    "to.send(1);",
    "address(x).delegatecall(data);",
    "if (block.timestamp > deadline) {",
    "var big = 123456789012345678901234567890;",
    "selfdestruct(owner);",
    "msg.sender.call{value: v}(\"\");",
    "constructor() public {",
    "function Token() public {",
    "require(this.balance == 5 ether);",
];

fn corpus_lines() -> Vec<String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut lines: Vec<String> = EXTRA.iter().map(|s| s.to_string()).collect();
    for dir in ["problems", "clean", "instrument"] {
        for entry in std::fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "sol") {
                let text = std::fs::read_to_string(&path).unwrap();
                lines.extend(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string));
            }
        }
    }
    lines
}

#[test]
fn prefilter_never_changes_findings() {
    let lines = corpus_lines();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let catalog = RuleCatalog::standard();
    let permutations = 1_200;
    let mut compared = 0;
    for _ in 0..permutations {
        let n = rng.gen_range(3..40);
        let mut pick: Vec<&String> = lines.choose_multiple(&mut rng, n).collect();
        pick.shuffle(&mut rng);
        let mut text = pick.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n");
        if rng.gen_bool(0.5) {
            text = format!("contract Perm is ERC20 {{\n{text}\n}}");
        }
        let Ok(fs) = format_source("perm.sol", &text) else {
            continue;
        };
        let index = InheritanceIndex::from_sources([&fs]).unwrap_or_default();
        for rule in &catalog.rules {
            let on = ScanContext {
                inheritance: Some(&index),
                ..ScanContext::default()
            };
            let off = ScanContext { prefilter: false, ..on };
            assert_eq!(run_rule(rule, &fs, &on), run_rule(rule, &fs, &off), "{} on:\n{text}", rule.id);
        }
        compared += 1;
    }
    assert!(compared >= 1_000, "only {compared} permutations compared");
}
