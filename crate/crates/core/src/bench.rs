//! Context indexing versus actions-as-nodes.
//!
//! `actions_as_nodes` rewrites a KB so that every action c-predicate
//! becomes a binary p-predicate feeding the variables whose sentences it
//! guards. Action priors are degenerate at the plan, so both encodings
//! describe the same process and their posteriors must agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::time::Instant;

use crate::combining::RuleRegistry;
use crate::error::{Error, Result};
use crate::infer::{answer_on, QueryAnswer};
use crate::lang::{
    parse_kb, pretty_print, Atom, Bounds, Const, GroundAtom, KnowledgeBase, Literal, Name, PredKind, Session, Term,
};
use crate::netbuild::{build_net, BayesNet};

/// Values of a compiled action node.
pub const ACTION_VALUES: [&str; 2] = ["no", "yes"];

/// The same process under both encodings.
#[derive(Clone, Debug)]
pub struct EncodingPair {
    pub context_kb: KnowledgeBase,
    pub action_node_kb: KnowledgeBase,
    pub horizon: Bounds,
}

impl EncodingPair {
    /// Compiles the action-node side from `kb`.
    pub fn derive(kb: &KnowledgeBase, actions: &[Name], plan: &[GroundAtom], horizon: Bounds) -> Result<EncodingPair> {
        Ok(EncodingPair { context_kb: kb.clone(), action_node_kb: actions_as_nodes(kb, actions, plan, horizon)?, horizon })
    }
}

/// Shifts a time term by `k`.
fn shift(t: &Term, k: i64) -> Term {
    match t {
        Term::Var(v) | Term::Offset(v, _) => Term::shifted_var(v.clone(), t.offset() + k),
        Term::Int(i) => Term::Int(i + k),
        Term::Sym(_) => t.clone(),
    }
}

/// Matches a clause head against a guard atom, binding every head
/// variable to a guard term. `Ok(None)` means the head cannot apply.
fn match_head(head: &Atom, atom: &Atom) -> Result<Option<BTreeMap<Name, Term>>> {
    let mut m: BTreeMap<Name, Term> = BTreeMap::new();
    for (h, a) in head.args.iter().zip(&atom.args) {
        match h {
            Term::Var(v) | Term::Offset(v, _) => {
                let bound = shift(a, -h.offset());
                match m.get(v) {
                    Some(prev) if *prev != bound => {
                        if prev.is_ground() && bound.is_ground() {
                            return Ok(None);
                        }
                        return Err(Error::Invalid(format!("cannot unfold {} through {}", atom, head)));
                    }
                    _ => {
                        m.insert(v.clone(), bound);
                    }
                }
            }
            _ if a.is_ground() => {
                if h != a {
                    return Ok(None);
                }
            }
            _ => return Err(Error::Invalid(format!("cannot unfold {} through {}", atom, head))),
        }
    }
    Ok(Some(m))
}

fn instantiate(atom: &Atom, m: &BTreeMap<Name, Term>) -> Result<Atom> {
    let args = atom
        .args
        .iter()
        .map(|t| match t.var() {
            Some(v) => m
                .get(v)
                .map(|b| shift(b, t.offset()))
                .ok_or_else(|| Error::Invalid(format!("variable {} of {} does not occur in the clause head", v, atom))),
            None => Ok(t.clone()),
        })
        .collect::<Result<_>>()?;
    Ok(Atom { pred: atom.pred.clone(), args })
}

/// Unfolds guards through the context base down to action atoms.
struct Unfolder<'a> {
    kb: &'a KnowledgeBase,
    actions: &'a BTreeSet<Name>,
}

impl Unfolder<'_> {
    fn clauses(&self, atom: &Atom) -> Result<Vec<Vec<Literal>>> {
        let mut out = Vec::new();
        for c in self.kb.cb.iter().filter(|c| c.head.pred == atom.pred) {
            if let Some(m) = match_head(&c.head, atom)? {
                let body = c
                    .body
                    .iter()
                    .map(|l| Ok(Literal { positive: l.positive, atom: instantiate(&l.atom, &m)? }))
                    .collect::<Result<Vec<_>>>()?;
                out.push(body);
            }
        }
        Ok(out)
    }

    fn collect(&self, lit: &Literal, depth: usize, out: &mut BTreeSet<Atom>) -> Result<()> {
        if depth > self.kb.cb.len() + 1 {
            return Err(Error::Invalid(format!("context {} unfolds without end", lit.atom)));
        }
        if self.actions.contains(&lit.atom.pred) {
            out.insert(lit.atom.clone());
            return Ok(());
        }
        if !self.kb.cb.iter().any(|c| c.head.pred == lit.atom.pred) {
            return Err(Error::Invalid(format!("{} is neither an action nor derived from actions", lit.atom.pred)));
        }
        for body in self.clauses(&lit.atom)? {
            for l in &body {
                self.collect(l, depth + 1, out)?;
            }
        }
        Ok(())
    }

    /// Truth of a guard literal when exactly the `performed` actions hold.
    fn holds(&self, lit: &Literal, performed: &BTreeSet<&Atom>) -> Result<bool> {
        let value = if self.actions.contains(&lit.atom.pred) {
            performed.contains(&lit.atom)
        } else {
            let mut any = false;
            for body in self.clauses(&lit.atom)? {
                let mut all = true;
                for l in &body {
                    if !self.holds(l, performed)? {
                        all = false;
                        break;
                    }
                }
                if all {
                    any = true;
                    break;
                }
            }
            any
        };
        Ok(value == lit.positive)
    }
}

/// Renames the consequent's variables to positional names so templates
/// from different sentences of one predicate line up.
fn canonical(cons: &Atom) -> (BTreeMap<Name, Name>, BTreeMap<Name, Name>) {
    let mut to = BTreeMap::new();
    let mut from = BTreeMap::new();
    for (i, t) in cons.args[..cons.args.len() - 1].iter().enumerate() {
        if let Term::Var(v) = t {
            let c: Name = format!("_{}", i).into();
            to.insert(v.clone(), c.clone());
            from.insert(c, v.clone());
        }
    }
    (to, from)
}

fn rename(atom: &Atom, map: &BTreeMap<Name, Name>) -> Result<Atom> {
    let args = atom
        .args
        .iter()
        .map(|t| match t.var() {
            Some(v) => map
                .get(v)
                .map(|n| Term::shifted_var(n.clone(), t.offset()))
                .ok_or_else(|| Error::Invalid(format!("action atom {} uses a variable outside the consequent", atom))),
            None => Ok(t.clone()),
        })
        .collect::<Result<_>>()?;
    Ok(Atom { pred: atom.pred.clone(), args })
}

fn with_value(atom: &Atom, value: &str) -> Atom {
    let mut args = atom.args.clone();
    args.push(Term::Sym(value.into()));
    Atom { pred: atom.pred.clone(), args }
}

/// Rewrites `kb` with every action c-predicate turned into a p-predicate
/// over `{no, yes}`. Each guarded sentence is replaced by one sentence per
/// assignment of the action atoms its predicate's guards depend on under
/// which the guard holds, with those atoms as extra antecedents. Action
/// priors put all mass on `yes` exactly for the atoms in `plan`.
pub fn actions_as_nodes(kb: &KnowledgeBase, actions: &[Name], plan: &[GroundAtom], horizon: Bounds) -> Result<KnowledgeBase> {
    let actions: BTreeSet<Name> = actions.iter().cloned().collect();
    for a in &actions {
        match kb.predicate(a) {
            Some(d) if d.kind == PredKind::Context => {}
            _ => return Err(Error::Invalid(format!("{} is not a context predicate", a))),
        }
        if kb.domains.contains_key(a) {
            return Err(Error::Invalid(format!("domain {} would clash with the action's values", a)));
        }
    }
    let unfolder = Unfolder { kb, actions: &actions };

    // action templates per consequent predicate, in positional names
    let mut templates: BTreeMap<Name, BTreeSet<Atom>> = BTreeMap::new();
    for s in kb.pb.iter().filter(|s| !s.context.is_empty()) {
        let mut found = BTreeSet::new();
        for l in &s.context {
            unfolder.collect(l, 0, &mut found)?;
        }
        let (to, _) = canonical(&s.cons);
        let slot = templates.entry(s.cons.pred.clone()).or_default();
        for a in found {
            slot.insert(rename(&a, &to)?);
        }
    }

    let out = KnowledgeBase {
        domains: kb.domains.clone(),
        predicates: kb.predicates.iter().filter(|(_, p)| p.kind == PredKind::Prob).map(|(k, v)| (k.clone(), v.clone())).collect(),
        pb: Vec::new(),
        cb: Vec::new(),
        cr: kb.cr.clone(),
    };
    let mut text = pretty_print(&out);
    for a in &actions {
        let d = &kb.predicates[a];
        let attrs: Vec<String> = d.attributes.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(text, "value {} = {{ {} }}.", a, ACTION_VALUES.join(", "));
        if attrs.is_empty() {
            let _ = writeln!(text, "pred {}.", a);
        } else {
            let _ = writeln!(text, "pred {}({}).", a, attrs.join(", "));
        }
    }

    let planned: BTreeSet<&GroundAtom> = plan.iter().collect();
    for a in &actions {
        let d = &kb.predicates[a];
        let mut instances: Vec<Vec<Const>> = vec![Vec::new()];
        for dom in &d.attributes {
            let members = kb.members(dom, horizon);
            instances = instances
                .into_iter()
                .flat_map(|prefix| members.iter().map(move |m| [prefix.clone(), vec![m.clone()]].concat()))
                .collect();
        }
        for args in instances {
            let ground = GroundAtom { pred: a.clone(), args };
            let yes = planned.contains(&ground);
            for (v, p) in ACTION_VALUES.iter().zip(if yes { [0, 1] } else { [1, 0] }) {
                let _ = writeln!(text, "prob {} = {}.", with_value(&ground.to_atom(), v), p);
            }
        }
    }

    for s in &kb.pb {
        if s.context.is_empty() {
            let mut one = KnowledgeBase::default();
            one.pb.push(s.clone());
            text.push_str(&pretty_print(&one));
            continue;
        }
        let (_, from) = canonical(&s.cons);
        let atoms: Vec<Atom> =
            templates[&s.cons.pred].iter().map(|t| rename(t, &from)).collect::<Result<_>>()?;
        for mask in 0..(1u64 << atoms.len()) {
            let performed: BTreeSet<&Atom> = atoms.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, a)| a).collect();
            let mut ok = true;
            for l in &s.context {
                if !unfolder.holds(l, &performed)? {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let mut ante: Vec<String> = s.ante.iter().map(|a| a.to_string()).collect();
            for (i, a) in atoms.iter().enumerate() {
                ante.push(with_value(a, ACTION_VALUES[(mask >> i & 1) as usize]).to_string());
            }
            let _ = writeln!(text, "prob {} | {} = {}.", s.cons, ante.join(", "), s.alpha);
        }
    }
    parse_kb(&text)
}

/// Size and timing of one encoding on one query.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingMetrics {
    pub encoding: String,
    pub nodes: usize,
    pub cpt_entries: usize,
    pub build_ms: f64,
    pub infer_ms: f64,
}

/// Both sides of a comparison with their networks and answers.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub context: EncodingMetrics,
    pub action_node: EncodingMetrics,
    pub context_net: BayesNet,
    pub action_node_net: BayesNet,
    pub context_answer: QueryAnswer,
    pub action_node_answer: QueryAnswer,
    pub max_delta: f64,
}

fn measure(label: &str, kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry) -> Result<(EncodingMetrics, BayesNet, QueryAnswer)> {
    let start = Instant::now();
    let built = build_net(kb, session, registry)?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let answer = answer_on(&built.net, &session.evidence, &built.instances)?;
    let infer_ms = start.elapsed().as_secs_f64() * 1e3;
    let m = EncodingMetrics {
        encoding: label.into(),
        nodes: built.net.len(),
        cpt_entries: built.net.cpt_entries(),
        build_ms,
        infer_ms,
    };
    Ok((m, built.net, answer))
}

/// Answers the same query on both encodings. `context_session` carries the
/// plan as context; the action-node session is the same minus context.
/// Posteriors must agree within `tolerance`.
pub fn compare_encodings(pair: &EncodingPair, context_session: &Session, registry: &RuleRegistry, tolerance: f64) -> Result<Comparison> {
    let plain = Session { context: BTreeSet::new(), ..context_session.clone() };
    let (cm, cnet, ca) = measure("context", &pair.context_kb, context_session, registry)?;
    let (am, anet, aa) = measure("action_node", &pair.action_node_kb, &plain, registry)?;
    if ca.instances.len() != aa.instances.len() {
        return Err(Error::PosteriorMismatch { delta: f64::INFINITY });
    }
    let mut delta: f64 = 0.0;
    for (x, y) in ca.instances.iter().zip(&aa.instances) {
        if x.posterior.obj != y.posterior.obj {
            return Err(Error::PosteriorMismatch { delta: f64::INFINITY });
        }
        delta = delta.max(x.posterior.max_abs_diff(&y.posterior));
    }
    if delta > tolerance {
        return Err(Error::PosteriorMismatch { delta });
    }
    Ok(Comparison {
        context: cm,
        action_node: am,
        context_net: cnet,
        action_node_net: anet,
        context_answer: ca,
        action_node_answer: aa,
        max_delta: delta,
    })
}

/// CSV with a header row: encoding, nodes, cpt_entries, build_ms, infer_ms.
pub fn to_csv(rows: &[EncodingMetrics]) -> String {
    let mut out = String::from("encoding,nodes,cpt_entries,build_ms,infer_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.3},{:.3}", r.encoding, r.nodes, r.cpt_entries, r.build_ms, r.infer_ms);
    }
    out
}
