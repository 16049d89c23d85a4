use std::collections::{BTreeMap, BTreeSet};

use super::{Atom, Const, DomainRef, GroundAtom, KnowledgeBase, Obj, PAtom, Term};
use crate::error::{Error, Result};
use crate::logic::{ground::enumerate, Substitution};

/// The time window `[from, to]` a session is confined to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bounds {
    pub from: i64,
    pub to: i64,
}

impl Bounds {
    pub fn new(from: i64, to: i64) -> Self {
        Bounds { from, to }
    }

    pub fn contains(&self, t: i64) -> bool {
        self.from <= t && t <= self.to
    }

    /// Whether an optional timestamp lies inside; untimed is always inside.
    pub fn admits(&self, t: Option<i64>) -> bool {
        t.is_none_or(|t| self.contains(t))
    }
}

/// Raw session: context facts, evidence atoms, bounds and an optional query.
#[derive(Clone, Debug)]
pub struct SessionInput {
    pub context: Vec<Atom>,
    pub evidence: Vec<Atom>,
    pub bounds: Bounds,
    pub query: Option<Atom>,
}

/// A validated session. Evidence is grounded, deduplicated and coherent.
#[derive(Clone, Debug)]
pub struct Session {
    pub context: BTreeSet<GroundAtom>,
    pub evidence: Vec<PAtom>,
    pub bounds: Bounds,
    pub query: Option<Atom>,
}

impl Session {
    pub fn evidence_objs(&self) -> BTreeSet<Obj> {
        self.evidence.iter().map(|e| e.obj.clone()).collect()
    }
}

fn atom_time(kb: &KnowledgeBase, atom: &GroundAtom) -> Option<i64> {
    let pos = kb.predicate(&atom.pred)?.time_position?;
    match atom.args.get(pos) {
        Some(Const::Int(t)) => Some(*t),
        _ => None,
    }
}

fn time_of_term<'a>(kb: &KnowledgeBase, atom: &'a Atom) -> Option<&'a Term> {
    let pos = kb.predicate(&atom.pred)?.time_position?;
    atom.args.get(pos)
}

/// Candidate values for each variable of `atoms` within `bounds`; time
/// variables are widened by the largest offset so shifted terms can reach
/// every in-bounds time.
pub(crate) fn variable_ranges<'a>(
    kb: &KnowledgeBase,
    domains: &BTreeMap<super::Name, DomainRef>,
    atoms: impl Iterator<Item = &'a Atom>,
    bounds: Bounds,
) -> Vec<(super::Name, Vec<Const>)> {
    let margin = atoms.flat_map(|a| a.args.iter()).map(|t| t.offset().abs()).max().unwrap_or(0);
    domains
        .iter()
        .map(|(v, d)| {
            let values = match d {
                DomainRef::Time => ((bounds.from - margin)..=(bounds.to + margin)).map(Const::Int).collect(),
                named => kb.members(named, bounds),
            };
            (v.clone(), values)
        })
        .collect()
}

fn var_domains(kb: &KnowledgeBase, atom: &Atom) -> BTreeMap<super::Name, DomainRef> {
    let decl = kb.predicate(&atom.pred).expect("resolved atom");
    atom.args
        .iter()
        .zip(decl.attributes.iter())
        .filter_map(|(t, d)| t.var().map(|v| (v.clone(), d.clone())))
        .collect()
}

/// Checks bounds, time confinement, evidence coherence and query shape.
pub fn validate_session(kb: &KnowledgeBase, input: &SessionInput) -> Result<Session> {
    let bounds = input.bounds;
    if bounds.from > bounds.to {
        return Err(Error::InvalidBounds { from: bounds.from, to: bounds.to });
    }
    let out_of_bounds = |atom: String| Error::OutOfBounds { atom, from: bounds.from, to: bounds.to };

    let mut context = BTreeSet::new();
    for atom in &input.context {
        let g = atom.to_ground().ok_or_else(|| Error::Invalid(format!("context atom {} is not ground", atom)))?;
        if !bounds.admits(atom_time(kb, &g)) {
            return Err(out_of_bounds(g.to_string()));
        }
        context.insert(g);
    }

    let mut evidence: BTreeMap<Obj, (usize, GroundAtom)> = BTreeMap::new();
    for atom in &input.evidence {
        if let Some(Term::Int(t)) = time_of_term(kb, atom) {
            if !bounds.contains(*t) {
                return Err(out_of_bounds(atom.to_string()));
            }
        }
        let ranges = variable_ranges(kb, &var_domains(kb, atom), std::iter::once(atom), bounds);
        let mut grounded = Vec::new();
        enumerate(&ranges, &Substitution::default(), &mut |s| {
            if let Some(g) = atom.apply(s).to_ground() {
                if bounds.admits(atom_time(kb, &g)) {
                    grounded.push(g);
                }
            }
            Ok(())
        })?;
        for g in grounded {
            let p = kb.split(&g).ok_or_else(|| Error::Invalid(format!("{} is not a p-atom", g)))?;
            match evidence.get(&p.obj) {
                Some((v, first)) if *v != p.value => {
                    return Err(Error::IncoherentEvidence {
                        object: p.obj.to_string(),
                        first: first.to_string(),
                        second: g.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    evidence.insert(p.obj.clone(), (p.value, g));
                }
            }
        }
    }

    if let Some(q) = &input.query {
        let decl = kb.predicate(&q.pred).ok_or_else(|| Error::Invalid(format!("unknown predicate in {}", q)))?;
        if !decl.is_prob() {
            return Err(Error::Invalid(format!("query {} is not a p-atom", q)));
        }
        let value_var = match q.args.last() {
            Some(Term::Var(v)) => v,
            _ => return Err(Error::IncompleteQuery(q.to_string())),
        };
        if q.args[..q.args.len() - 1].iter().any(|t| t.var() == Some(value_var)) {
            return Err(Error::IncompleteQuery(q.to_string()));
        }
        if let Some(Term::Int(t)) = time_of_term(kb, q) {
            if !bounds.contains(*t) {
                return Err(out_of_bounds(q.to_string()));
            }
        }
    }

    Ok(Session {
        context,
        evidence: evidence.into_iter().map(|(obj, (value, _))| PAtom { obj, value }).collect(),
        bounds,
        query: input.query.clone(),
    })
}

/// One ground instance of a (possibly non-ground) complete query.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct QueryInstance {
    /// Bindings of the query's non-value variables.
    pub bindings: Substitution,
    pub obj: Obj,
}

/// Every in-bounds grounding of the query's non-value variables, sorted by
/// object.
pub fn query_instances(kb: &KnowledgeBase, session: &Session) -> Result<Vec<QueryInstance>> {
    let Some(q) = &session.query else { return Ok(Vec::new()) };
    let decl = kb.predicate(&q.pred).ok_or_else(|| Error::Invalid(format!("unknown predicate in {}", q)))?;
    let head = Atom { pred: q.pred.clone(), args: q.args[..q.args.len() - 1].to_vec() };
    let domains: BTreeMap<_, _> = head
        .args
        .iter()
        .zip(decl.attributes.iter())
        .filter_map(|(t, d)| t.var().map(|v| (v.clone(), d.clone())))
        .collect();
    let ranges = variable_ranges(kb, &domains, std::iter::once(&head), session.bounds);
    let mut out = Vec::new();
    enumerate(&ranges, &Substitution::default(), &mut |s| {
        let args = head.apply(s).to_ground().expect("all variables bound").args;
        let obj = Obj { pred: q.pred.clone(), args, time_pos: decl.time_position };
        if session.bounds.admits(obj.time()) {
            out.push(QueryInstance { bindings: s.clone(), obj });
        }
        Ok(())
    })?;
    out.sort_by(|a, b| a.obj.cmp(&b.obj));
    out.dedup_by(|a, b| a.obj == b.obj);
    Ok(out)
}
