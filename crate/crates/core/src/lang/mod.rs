//! Abstract syntax for knowledge bases, context sets, evidence and queries.
//!
//! A knowledge base declares finite attribute domains, probabilistic
//! predicates (whose last attribute is the value of a random variable),
//! deterministic context predicates, context-guarded probabilistic sentences,
//! an acyclic normal logic program over the context predicates, and one
//! combining rule per probabilistic predicate.

mod lexer;
mod parser;
mod pretty;
mod session;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use parser::{parse_atoms, parse_kb, parse_query, AtomKind};
pub use pretty::pretty_print;
pub use session::{query_instances, validate_session, Bounds, QueryInstance, Session, SessionInput};
pub(crate) use session::variable_ranges;

use crate::logic::Substitution;

/// Interned-ish identifier. Cheap to clone.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// A ground argument value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Const {
    Sym(Name),
    Int(i64),
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Sym(s) => f.write_str(s),
            Const::Int(i) => write!(f, "{}", i),
        }
    }
}

/// An argument term. Offsets only appear in time positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Sym(Name),
    Int(i64),
    Var(Name),
    /// `var + k` for a nonzero `k`.
    Offset(Name, i64),
}

impl Term {
    pub fn from_const(c: &Const) -> Term {
        match c {
            Const::Sym(s) => Term::Sym(s.clone()),
            Const::Int(i) => Term::Int(*i),
        }
    }

    pub fn as_const(&self) -> Option<Const> {
        match self {
            Term::Sym(s) => Some(Const::Sym(s.clone())),
            Term::Int(i) => Some(Const::Int(*i)),
            Term::Var(_) | Term::Offset(..) => None,
        }
    }

    pub fn var(&self) -> Option<&Name> {
        match self {
            Term::Var(v) | Term::Offset(v, _) => Some(v),
            _ => None,
        }
    }

    pub fn offset(&self) -> i64 {
        match self {
            Term::Offset(_, k) => *k,
            _ => 0,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.var().is_none()
    }

    /// Builds `var + k`, collapsing a zero offset to a plain variable.
    pub fn shifted_var(var: Name, k: i64) -> Term {
        if k == 0 {
            Term::Var(var)
        } else {
            Term::Offset(var, k)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Sym(s) => f.write_str(s),
            Term::Int(i) => write!(f, "{}", i),
            Term::Var(v) => f.write_str(v),
            Term::Offset(v, k) if *k < 0 => write!(f, "{}-{}", v, -k),
            Term::Offset(v, k) => write!(f, "{}+{}", v, k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub pred: Name,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Self {
        Atom { pred: name(pred), args }
    }

    pub fn vars(&self) -> impl Iterator<Item = &Name> {
        self.args.iter().filter_map(Term::var)
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn to_ground(&self) -> Option<GroundAtom> {
        let args = self.args.iter().map(Term::as_const).collect::<Option<Vec<_>>>()?;
        Some(GroundAtom { pred: self.pred.clone(), args })
    }

    pub fn apply(&self, s: &Substitution) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(|t| s.apply_term(t)).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", a)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A context literal: a c-atom or its negation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub positive: bool,
    pub atom: Atom,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal { positive: true, atom }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal { positive: false, atom }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("not ")?;
        }
        write!(f, "{}", self.atom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub pred: Name,
    pub args: Vec<Const>,
}

impl GroundAtom {
    pub fn to_atom(&self) -> Atom {
        Atom { pred: self.pred.clone(), args: self.args.iter().map(Term::from_const).collect() }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", a)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A random variable: a p-predicate with all but its value argument.
///
/// Ordering is by predicate, then the untimed arguments, then the timestamp,
/// so that a family of temporal variables sorts chronologically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Obj {
    pub pred: Name,
    pub args: Vec<Const>,
    pub time_pos: Option<usize>,
}

impl Obj {
    pub fn time(&self) -> Option<i64> {
        match self.time_pos.map(|i| &self.args[i]) {
            Some(Const::Int(t)) => Some(*t),
            _ => None,
        }
    }

    fn untimed_args(&self) -> impl Iterator<Item = &Const> {
        self.args.iter().enumerate().filter(move |(i, _)| Some(*i) != self.time_pos).map(|(_, a)| a)
    }

    /// Graph label, `pred(args)@t` for timed variables.
    pub fn label(&self) -> String {
        let args: Vec<String> = self.untimed_args().map(|a| a.to_string()).collect();
        let mut s = if args.is_empty() {
            self.pred.to_string()
        } else {
            format!("{}({})", self.pred, args.join(","))
        };
        if let Some(t) = self.time() {
            s.push_str(&format!("@{}", t));
        }
        s
    }

    pub fn with_value(&self, value: &Name) -> GroundAtom {
        let mut args = self.args.clone();
        args.push(Const::Sym(value.clone()));
        GroundAtom { pred: self.pred.clone(), args }
    }
}

impl Ord for Obj {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.pred
            .cmp(&other.pred)
            .then_with(|| self.untimed_args().cmp(other.untimed_args()))
            .then_with(|| self.time().cmp(&other.time()))
            .then_with(|| self.args.cmp(&other.args))
    }
}

impl PartialOrd for Obj {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Obj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", a)?;
        }
        f.write_str(")")
    }
}

/// A ground p-atom: a variable together with the index of its value in VAL.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PAtom {
    pub obj: Obj,
    pub value: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainRef {
    Time,
    Named(Name),
}

impl fmt::Display for DomainRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainRef::Time => f.write_str("time"),
            DomainRef::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeDomain {
    pub name: Name,
    pub members: Vec<Name>,
}

impl AttributeDomain {
    pub fn index_of(&self, member: &str) -> Option<usize> {
        self.members.iter().position(|m| &**m == member)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredKind {
    Prob,
    Context,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: Name,
    pub kind: PredKind,
    /// Every attribute, including the trailing value attribute of a p-predicate.
    pub attributes: Vec<DomainRef>,
    pub time_position: Option<usize>,
    /// Name of the VAL domain (p-predicates only).
    pub value_domain: Option<Name>,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_prob(&self) -> bool {
        self.kind == PredKind::Prob
    }
}

/// Source position of a statement. Positions never take part in equality,
/// so a re-parsed pretty print compares equal to the original.
#[derive(Clone, Copy, Debug, Default)]
pub struct Loc {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Loc {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbSentence {
    pub cons: Atom,
    pub ante: Vec<Atom>,
    pub alpha: f64,
    pub context: Vec<Literal>,
    /// Domain of every variable in the sentence, inferred from its positions.
    pub var_domains: BTreeMap<Name, DomainRef>,
    pub loc: Loc,
}

impl ProbSentence {
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.cons).chain(self.ante.iter()).chain(self.context.iter().map(|l| &l.atom))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextClause {
    pub head: Atom,
    pub body: Vec<Literal>,
    pub var_domains: BTreeMap<Name, DomainRef>,
    pub loc: Loc,
}

impl ContextClause {
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.head).chain(self.body.iter().map(|l| &l.atom))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Ident(Name),
    Number(f64),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Ident(n) => f.write_str(n),
            ParamValue::Number(x) => write!(f, "{}", x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombineDecl {
    pub rule: Name,
    pub params: Vec<(Name, ParamValue)>,
}

impl CombineDecl {
    pub fn param(&self, key: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(k, _)| &**k == key).map(|(_, v)| v)
    }
}

/// Name of the rule attached to p-predicates without a `combine` line.
pub const DEFAULT_RULE: &str = "noisy_max";

/// The four-part knowledge base plus its declared domains.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    pub domains: BTreeMap<Name, AttributeDomain>,
    pub predicates: BTreeMap<Name, PredicateDecl>,
    pub pb: Vec<ProbSentence>,
    pub cb: Vec<ContextClause>,
    pub cr: BTreeMap<Name, CombineDecl>,
}

impl KnowledgeBase {
    pub fn predicate(&self, pred: &str) -> Option<&PredicateDecl> {
        self.predicates.get(pred)
    }

    /// VAL(p) in declaration order. Empty for unknown or context predicates.
    pub fn values(&self, pred: &str) -> &[Name] {
        self.predicate(pred)
            .and_then(|p| p.value_domain.as_ref())
            .and_then(|d| self.domains.get(d))
            .map(|d| d.members.as_slice())
            .unwrap_or(&[])
    }

    pub fn value_index(&self, pred: &str, value: &str) -> Option<usize> {
        self.values(pred).iter().position(|v| &**v == value)
    }

    /// Members of a domain; the time domain ranges over `bounds`.
    pub fn members(&self, domain: &DomainRef, bounds: Bounds) -> Vec<Const> {
        match domain {
            DomainRef::Time => (bounds.from..=bounds.to).map(Const::Int).collect(),
            DomainRef::Named(n) => self
                .domains
                .get(n)
                .map(|d| d.members.iter().map(|m| Const::Sym(m.clone())).collect())
                .unwrap_or_default(),
        }
    }

    pub fn combine_decl(&self, pred: &str) -> CombineDecl {
        self.cr
            .get(pred)
            .cloned()
            .unwrap_or_else(|| CombineDecl { rule: name(DEFAULT_RULE), params: Vec::new() })
    }

    /// Splits a ground p-atom into its variable and value index.
    pub fn split(&self, atom: &GroundAtom) -> Option<PAtom> {
        let decl = self.predicate(&atom.pred)?;
        if !decl.is_prob() || atom.args.len() != decl.arity() {
            return None;
        }
        let (last, rest) = atom.args.split_last()?;
        let value = match last {
            Const::Sym(v) => self.value_index(&atom.pred, v)?,
            Const::Int(_) => return None,
        };
        Some(PAtom { obj: Obj { pred: atom.pred.clone(), args: rest.to_vec(), time_pos: decl.time_position }, value })
    }

    /// The extension of a ground p-atom: its variable with every value in VAL.
    pub fn ext(&self, atom: &PAtom) -> Vec<PAtom> {
        (0..self.values(&atom.obj.pred).len()).map(|value| PAtom { obj: atom.obj.clone(), value }).collect()
    }

    pub fn value_name(&self, obj: &Obj, value: usize) -> Name {
        self.values(&obj.pred).get(value).cloned().unwrap_or_else(|| name("?"))
    }

    pub fn render(&self, atom: &PAtom) -> String {
        self.to_ground(atom).to_string()
    }

    pub fn to_ground(&self, atom: &PAtom) -> GroundAtom {
        atom.obj.with_value(&self.value_name(&atom.obj, atom.value))
    }

    pub fn card(&self, obj: &Obj) -> usize {
        self.values(&obj.pred).len()
    }
}
