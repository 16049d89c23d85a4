use std::collections::{BTreeMap, BTreeSet};

use super::subst::unify;
use super::Substitution;
use crate::error::Result;
use crate::lang::{variable_ranges, Atom, Bounds, Const, GroundAtom, KnowledgeBase, Name};

/// Calls `f` once per assignment of the unbound variables in `ranges`,
/// extending `base`. Variables already bound in `base` are left alone.
pub fn enumerate(
    ranges: &[(Name, Vec<Const>)],
    base: &Substitution,
    f: &mut dyn FnMut(&Substitution) -> Result<()>,
) -> Result<()> {
    match ranges.split_first() {
        None => f(base),
        Some(((var, _), rest)) if base.get(var).is_some() => enumerate(rest, base, f),
        Some(((var, values), rest)) => {
            for c in values {
                enumerate(rest, &base.with_const(var, c), f)?;
            }
            Ok(())
        }
    }
}

/// A ground context literal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundLiteral {
    pub positive: bool,
    pub atom: GroundAtom,
}

/// The context base grounded over a session's bounds, together with the
/// session's context facts.
#[derive(Clone, Debug)]
pub struct GroundedContextProgram {
    /// Ground clause bodies per head.
    pub clauses: BTreeMap<GroundAtom, Vec<Vec<GroundLiteral>>>,
    pub facts: BTreeSet<GroundAtom>,
    /// Every fact and clause head, per predicate, for goal matching.
    heads: BTreeMap<Name, Vec<GroundAtom>>,
    depth_bound: usize,
}

fn atom_time(kb: &KnowledgeBase, atom: &GroundAtom) -> Option<i64> {
    let pos = kb.predicate(&atom.pred)?.time_position?;
    match atom.args.get(pos) {
        Some(Const::Int(t)) => Some(*t),
        _ => None,
    }
}

impl GroundedContextProgram {
    /// Grounds every clause of `kb` whose head falls inside `bounds`.
    pub fn new(kb: &KnowledgeBase, facts: &BTreeSet<GroundAtom>, bounds: Bounds) -> Result<Self> {
        let mut clauses: BTreeMap<GroundAtom, Vec<Vec<GroundLiteral>>> = BTreeMap::new();
        for clause in &kb.cb {
            let ranges = variable_ranges(kb, &clause.var_domains, clause.atoms(), bounds);
            enumerate(&ranges, &Substitution::default(), &mut |s| {
                let ground = |a: &Atom| a.apply(s).to_ground().expect("clause variables are typed");
                let head = ground(&clause.head);
                if !bounds.admits(atom_time(kb, &head)) {
                    return Ok(());
                }
                let body: Vec<GroundLiteral> =
                    clause.body.iter().map(|l| GroundLiteral { positive: l.positive, atom: ground(&l.atom) }).collect();
                let bodies = clauses.entry(head).or_default();
                if !bodies.contains(&body) {
                    bodies.push(body);
                }
                Ok(())
            })?;
        }
        let mut heads: BTreeMap<Name, Vec<GroundAtom>> = BTreeMap::new();
        for g in facts.iter().chain(clauses.keys()) {
            heads.entry(g.pred.clone()).or_default().push(g.clone());
        }
        for list in heads.values_mut() {
            list.sort();
            list.dedup();
        }
        let mut atoms: BTreeSet<&GroundAtom> = facts.iter().collect();
        for (head, bodies) in &clauses {
            atoms.insert(head);
            atoms.extend(bodies.iter().flatten().map(|l| &l.atom));
        }
        let depth_bound = atoms.len() + 1;
        Ok(GroundedContextProgram { clauses, facts: facts.clone(), heads, depth_bound })
    }

    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    /// Overrides the derivation depth bound.
    pub fn with_depth_bound(mut self, bound: usize) -> Self {
        self.depth_bound = bound;
        self
    }

    /// Ground atoms that unify with `atom`, with the unifier.
    pub(crate) fn candidates<'a>(&'a self, atom: &'a Atom) -> impl Iterator<Item = (&'a GroundAtom, Substitution)> + 'a {
        self.heads
            .get(&atom.pred)
            .into_iter()
            .flatten()
            .filter_map(move |g| unify(atom, &g.to_atom()).map(|s| (g, s)))
    }

    /// Head-to-body dependency edges, through negation.
    pub fn dependency_graph(&self) -> BTreeMap<GroundAtom, BTreeSet<GroundAtom>> {
        let mut graph: BTreeMap<GroundAtom, BTreeSet<GroundAtom>> = BTreeMap::new();
        for (head, bodies) in &self.clauses {
            let deps = graph.entry(head.clone()).or_default();
            deps.extend(bodies.iter().flatten().map(|l| l.atom.clone()));
        }
        graph
    }
}
