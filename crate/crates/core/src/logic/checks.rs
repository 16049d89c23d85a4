use std::collections::{BTreeMap, BTreeSet};

use super::ground::GroundedContextProgram;
use crate::error::Result;
use crate::lang::{Atom, Bounds, GroundAtom, KnowledgeBase, Literal, Loc, Name};

/// Finds a directed cycle, returned as the nodes along it in edge order.
pub fn find_cycle<N: Ord + Clone>(graph: &BTreeMap<N, BTreeSet<N>>) -> Option<Vec<N>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<N: Ord + Clone>(
        n: &N,
        graph: &BTreeMap<N, BTreeSet<N>>,
        marks: &mut BTreeMap<N, Mark>,
        stack: &mut Vec<N>,
    ) -> Option<Vec<N>> {
        match marks.get(n) {
            Some(Mark::Done) => return None,
            Some(Mark::Active) => {
                let start = stack.iter().position(|m| m == n).expect("active node is on the stack");
                return Some(stack[start..].to_vec());
            }
            None => {}
        }
        marks.insert(n.clone(), Mark::Active);
        stack.push(n.clone());
        for m in graph.get(n).into_iter().flatten() {
            if let Some(cycle) = visit(m, graph, marks, stack) {
                return Some(cycle);
            }
        }
        stack.pop();
        marks.insert(n.clone(), Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    let mut stack = Vec::new();
    graph.keys().find_map(|n| visit(n, graph, &mut marks, &mut stack))
}

/// Grounds the context base over `bounds` and looks for a dependency cycle
/// among ground c-atoms, following negative body literals too.
pub fn check_acyclic(kb: &KnowledgeBase, bounds: Bounds) -> Result<Option<Vec<GroundAtom>>> {
    let program = GroundedContextProgram::new(kb, &BTreeSet::new(), bounds)?;
    Ok(find_cycle(&program.dependency_graph()))
}

fn positive_vars<'a>(atoms: impl Iterator<Item = &'a Atom>, lits: &'a [Literal]) -> BTreeSet<Name> {
    atoms
        .chain(lits.iter().filter(|l| l.positive).map(|l| &l.atom))
        .flat_map(|a| a.vars().cloned())
        .collect()
}

fn report(out: &mut Vec<String>, loc: Loc, what: &str, vars: BTreeSet<Name>, all: &BTreeMap<Name, crate::lang::DomainRef>) {
    for v in all.keys().filter(|v| !vars.contains(*v)) {
        out.push(format!("{}:{}: variable {} in {} occurs only in negative literals", loc.line, loc.col, v, what));
    }
}

/// Every variable must occur in a positive position: a consequent,
/// antecedent or positive context literal of a sentence, or the head or a
/// positive body literal of a clause. Together with typed positions this
/// makes every sentence finitely groundable and every context goal safe for
/// negation as failure.
pub fn check_allowed(kb: &KnowledgeBase) -> Vec<String> {
    let mut out = Vec::new();
    for s in &kb.pb {
        let vars = positive_vars(std::iter::once(&s.cons).chain(s.ante.iter()), &s.context);
        report(&mut out, s.loc, &format!("sentence for {}", s.cons), vars, &s.var_domains);
    }
    for c in &kb.cb {
        let vars = positive_vars(std::iter::once(&c.head), &c.body);
        report(&mut out, c.loc, &format!("clause for {}", c.head), vars, &c.var_domains);
    }
    out
}
