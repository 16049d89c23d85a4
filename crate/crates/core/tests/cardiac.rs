//! End-to-end runs on the shipped cardiac arrest knowledge base.

mod common;

use kbmc::check::check_kb;
use kbmc::combining::RuleRegistry;
use kbmc::infer::answer_query;
use kbmc::lang::{parse_kb, pretty_print, KnowledgeBase};
use kbmc::netbuild::{build_net, export_dot};
use kbmc::oracle::oracle_answer;
use kbmc::{Error, CARDIAC_KB};

use common::session;

const VF_CONTEXT: &str = include_str!("../data/vf.context");
const VF_EVIDENCE: &str = include_str!("../data/vf.evidence");
const DROWNING_CONTEXT: &str = include_str!("../data/drowning.context");
const DROWNING_EVIDENCE: &str = include_str!("../data/drowning.evidence");

fn kb() -> KnowledgeBase {
    parse_kb(CARDIAC_KB).unwrap()
}

#[test]
fn shipped_kb_passes_the_checks() {
    let kb = kb();
    for (ctx, ev, b) in [(VF_CONTEXT, VF_EVIDENCE, (0, 3)), (DROWNING_CONTEXT, DROWNING_EVIDENCE, (0, 4)), ("", "", (0, 5))] {
        let s = session(&kb, ctx, ev, None, b).unwrap();
        check_kb(&kb, &s, &RuleRegistry::default()).unwrap();
    }
}

#[test]
fn pretty_print_round_trips() {
    let kb = kb();
    let again = parse_kb(&pretty_print(&kb)).unwrap();
    assert_eq!(pretty_print(&again), pretty_print(&kb));
}

#[test]
fn open_query_answers_every_timestep() {
    let kb = kb();
    let s = session(&kb, DROWNING_CONTEXT, DROWNING_EVIDENCE, Some("cd(john, T, V)"), (0, 4)).unwrap();
    let reg = RuleRegistry::default();
    let ve = answer_query(&kb, &s, &reg).unwrap();
    assert_eq!(ve.instances.len(), 5);
    // evidence at time 0 is reproduced exactly
    assert_eq!(ve.instances[0].posterior.probabilities, vec![1.0, 0.0, 0.0, 0.0]);
    let or = oracle_answer(&kb, &s, &reg, true).unwrap();
    for (a, b) in ve.instances.iter().zip(&or.instances) {
        assert!(a.posterior.max_abs_diff(&b.posterior) <= 1e-9);
    }
}

#[test]
fn damage_never_improves_without_flow() {
    // with asystole throughout, anoxia only accumulates
    let kb = kb();
    let s = session(&kb, DROWNING_CONTEXT, DROWNING_EVIDENCE, Some("cd(john, T, V)"), (0, 4)).unwrap();
    let ans = answer_query(&kb, &s, &RuleRegistry::default()).unwrap();
    let none: Vec<f64> = ans.instances.iter().map(|i| i.posterior.probabilities[0]).collect();
    assert!(none.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", none);
}

#[test]
fn impossible_evidence_is_reported() {
    let kb = kb();
    let s = session(&kb, VF_CONTEXT, "rhythm(john, 1, vf). cbf(john, 1, present).", Some("rhythm(john, 2, V)"), (0, 3)).unwrap();
    assert!(matches!(answer_query(&kb, &s, &RuleRegistry::default()), Err(Error::ImpossibleEvidence)));
}

#[test]
fn evidence_on_an_unrelated_object_needs_a_node() {
    let kb = kb();
    let s = session(&kb, VF_CONTEXT, "cd(john, 2, mild).", Some("rhythm(john, 1, V)"), (0, 3)).unwrap();
    let built = build_net(&kb, &s, &RuleRegistry::default()).unwrap();
    assert!(built.net.nodes.iter().any(|n| n.obj.label() == "cd(john)@2"));
    let a = answer_query(&kb, &s, &RuleRegistry::default()).unwrap();
    let b = oracle_answer(&kb, &s, &RuleRegistry::default(), true).unwrap();
    assert!(a.instances[0].posterior.max_abs_diff(&b.instances[0].posterior) <= 1e-9);
}

#[test]
fn dot_export_names_every_node() {
    let kb = kb();
    let s = session(&kb, VF_CONTEXT, VF_EVIDENCE, Some("cbf(john, 2, V)"), (0, 3)).unwrap();
    let built = build_net(&kb, &s, &RuleRegistry::default()).unwrap();
    let dot = export_dot(&built.net);
    assert!(dot.starts_with("digraph"));
    for n in &built.net.nodes {
        assert!(dot.contains(&n.obj.label()), "{}", n.obj.label());
    }
}
