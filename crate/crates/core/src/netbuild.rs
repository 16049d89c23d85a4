//! Query-driven construction of the supporting Bayesian network.
//!
//! Construction chains backwards from the query instances and the evidence
//! objects through the sentences whose consequent unifies with each object,
//! proving contexts by SLDNF on demand. Support is then settled by a least
//! fixpoint over the explored objects, and the network keeps the supported
//! objects that the targets depend on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::combining::RuleRegistry;
use crate::error::{Error, Result};
use crate::lang::{query_instances, Bounds, KnowledgeBase, Name, Obj, QueryInstance, Session};
use crate::logic::{find_cycle, unify, GroundedContextProgram};
use crate::relevance::{
    applicable_instances, combine_object, missing_cells, no_table, row_sum_violations, CombinedBase, CombinedEntry,
    GroundSentence,
};

/// A random variable of the network with its conditional table. `cpt` has
/// one row per parent assignment, mixed radix with the first parent most
/// significant.
#[derive(Clone, Debug, PartialEq)]
pub struct NetNode {
    pub obj: Obj,
    pub values: Vec<Name>,
    /// Indices into the network's node list, sorted.
    pub parents: Vec<usize>,
    pub cpt: Vec<Vec<f64>>,
}

impl NetNode {
    pub fn card(&self) -> usize {
        self.values.len()
    }

    pub fn cpt_entries(&self) -> usize {
        self.cpt.len() * self.card()
    }
}

/// A directed acyclic network whose nodes are sorted by object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BayesNet {
    pub nodes: Vec<NetNode>,
}

impl BayesNet {
    /// Assembles a network from complete tables. Every parent must have a
    /// table of its own, rows must sum to one, and the graph must be acyclic.
    pub fn from_entries(kb: &KnowledgeBase, entries: Vec<CombinedEntry>) -> Result<BayesNet> {
        let mut entries = entries;
        entries.sort_by(|a, b| a.obj.cmp(&b.obj));
        let index: BTreeMap<Obj, usize> = entries.iter().enumerate().map(|(i, e)| (e.obj.clone(), i)).collect();
        let graph: BTreeMap<Obj, BTreeSet<Obj>> =
            entries.iter().map(|e| (e.obj.clone(), e.parents.iter().cloned().collect())).collect();
        if let Some(cycle) = find_cycle(&graph) {
            return Err(Error::Cycle(cycle.iter().map(Obj::label).collect()));
        }
        let mut nodes = Vec::with_capacity(entries.len());
        for e in entries {
            if let Some(err) = missing_cells(kb, &e).into_iter().chain(row_sum_violations(kb, &e)).next() {
                return Err(err);
            }
            let parents =
                e.parents.iter().map(|p| index.get(p).copied().ok_or_else(|| no_table(p))).collect::<Result<Vec<_>>>()?;
            let cpt = e.table().expect("checked complete");
            nodes.push(NetNode { values: kb.values(&e.obj.pred).to_vec(), obj: e.obj, parents, cpt });
        }
        Ok(BayesNet { nodes })
    }

    /// The full network of a combined relevant base.
    pub fn from_combined(kb: &KnowledgeBase, cb: &CombinedBase) -> Result<BayesNet> {
        BayesNet::from_entries(kb, cb.entries.values().cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, obj: &Obj) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.obj.cmp(obj)).ok()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].parents.is_empty()).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    pub fn cpt_entries(&self) -> usize {
        self.nodes.iter().map(NetNode::cpt_entries).sum()
    }

    /// Row of `node`'s table for a full assignment of the network.
    pub fn row(&self, node: usize, assignment: &[usize]) -> &[f64] {
        let n = &self.nodes[node];
        let r = n.parents.iter().fold(0, |acc, &p| acc * self.nodes[p].card() + assignment[p]);
        &n.cpt[r]
    }

    /// Node indices with every parent before its children; ties broken by
    /// index.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.nodes.iter().map(|n| n.parents.len()).collect();
        let mut children = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &p in &n.parents {
                children[p].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    /// `of` together with all its ancestors.
    pub fn ancestors(&self, of: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = of.into_iter().collect();
        while let Some(i) = stack.pop() {
            if seen.insert(i) {
                stack.extend(&self.nodes[i].parents);
            }
        }
        seen
    }

    /// Whether every timed node lies inside `bounds`.
    pub fn within(&self, bounds: Bounds) -> bool {
        self.nodes.iter().all(|n| bounds.admits(n.obj.time()))
    }
}

/// A supporting network and the query instances it answers.
#[derive(Clone, Debug)]
pub struct SupportingNetwork {
    pub net: BayesNet,
    pub instances: Vec<QueryInstance>,
}

#[derive(Default)]
struct Explored {
    sentences: Vec<GroundSentence>,
    /// Applicable sentences lost because an antecedent is out of bounds.
    dropped: usize,
}

/// Applicable in-bounds sentences with `obj` as consequent.
fn explore(
    kb: &KnowledgeBase,
    program: &GroundedContextProgram,
    bounds: Bounds,
    obj: &Obj,
) -> Result<Explored> {
    let mut found = Explored::default();
    for value in kb.values(&obj.pred) {
        let target = obj.with_value(value).to_atom();
        for s in kb.pb.iter().filter(|s| s.cons.pred == obj.pred) {
            let Some(theta) = unify(&s.cons, &target) else { continue };
            applicable_instances(kb, program, s, &theta, bounds, &mut |g| {
                if g.ante_objs().all(|o| bounds.admits(o.time())) {
                    found.sentences.push(g);
                } else {
                    found.dropped += 1;
                }
                Ok(())
            })?;
        }
    }
    found.sentences.sort_by(|a, b| (&a.cons, &a.ante).cmp(&(&b.cons, &b.ante)).then(a.alpha.total_cmp(&b.alpha)));
    found.sentences.dedup();
    Ok(found)
}

/// Builds the network supporting the session's query instances and
/// evidence. Query instances whose object has no support are left out of
/// the returned instance list; that is the no-answer outcome.
pub fn build_net(kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry) -> Result<SupportingNetwork> {
    let bounds = session.bounds;
    let program = GroundedContextProgram::new(kb, &session.context, bounds)?;
    let evidence = session.evidence_objs();
    let candidates = query_instances(kb, session)?;

    // backward exploration
    let mut explored: BTreeMap<Obj, Explored> = BTreeMap::new();
    let mut stack: Vec<Obj> = candidates.iter().map(|q| q.obj.clone()).chain(evidence.iter().cloned()).collect();
    while let Some(obj) = stack.pop() {
        if explored.contains_key(&obj) {
            continue;
        }
        let found = explore(kb, &program, bounds, &obj)?;
        for s in &found.sentences {
            stack.extend(s.ante_objs().filter(|o| !explored.contains_key(*o)).cloned());
        }
        explored.insert(obj, found);
    }

    for (obj, e) in &explored {
        let has_marginal = e.sentences.iter().any(|s| s.ante.is_empty());
        if e.dropped > 0 && !has_marginal {
            return Err(Error::OutOfBoundsAncestor { object: obj.label(), from: bounds.from, to: bounds.to });
        }
    }

    // support: least fixpoint over the explored objects
    let mut supported: BTreeSet<&Obj> = evidence.iter().collect();
    loop {
        let before = supported.len();
        for (obj, e) in &explored {
            if !supported.contains(obj) && e.sentences.iter().any(|s| s.ante_objs().all(|o| supported.contains(o))) {
                supported.insert(obj);
            }
        }
        if supported.len() == before {
            break;
        }
    }

    let instances: Vec<QueryInstance> = candidates.into_iter().filter(|q| supported.contains(&q.obj)).collect();

    // the supported objects the targets depend on
    let relevant = |obj: &Obj| -> Vec<&GroundSentence> {
        explored[obj].sentences.iter().filter(|s| s.ante_objs().all(|o| supported.contains(o))).collect()
    };
    let mut needed: BTreeSet<Obj> = BTreeSet::new();
    let mut stack: Vec<Obj> = instances.iter().map(|q| q.obj.clone()).chain(evidence.iter().cloned()).collect();
    while let Some(obj) = stack.pop() {
        if needed.insert(obj.clone()) {
            for s in relevant(&obj) {
                stack.extend(s.ante_objs().cloned());
            }
        }
    }

    let mut entries = Vec::with_capacity(needed.len());
    for obj in &needed {
        let sentences = relevant(obj);
        if sentences.is_empty() {
            return Err(no_table(obj));
        }
        entries.push(combine_object(kb, registry, obj, sentences.into_iter())?);
    }
    let net = BayesNet::from_entries(kb, entries)?;
    Ok(SupportingNetwork { net, instances })
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one vertex per node labelled `pred(args)@t`, one edge
/// per parent link.
pub fn export_dot(net: &BayesNet) -> String {
    let mut out = String::from("digraph network {\n");
    for (i, n) in net.nodes.iter().enumerate() {
        let _ = writeln!(out, "  n{} [label=\"{}\"];", i, escape(&n.obj.label()));
    }
    for (i, n) in net.nodes.iter().enumerate() {
        for p in &n.parents {
            let _ = writeln!(out, "  n{} -> n{};", p, i);
        }
    }
    out.push_str("}\n");
    out
}
