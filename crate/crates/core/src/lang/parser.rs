//! Recursive-descent parser for the `.ckb` rule language.
//!
//! ```text
//! domain person = { john, mary }.
//! value rhythm = { nsr, vf, vt, af, svt, b, a }.
//! pred rhythm(person, time).
//! cpred epi(person, time).
//! ctx no_med(X, t) <- not epi(X, t).
//! prob rhythm(X, t, nsr) | rhythm(X, t-1, vf) = 0.01 <- no_med(X, t-1).
//! combine rhythm with noisy_max(distinguished = nsr).
//! ```
//!
//! Parsing happens in two passes: statements are read into a raw syntax tree
//! (recovering at `.` after an error), then declarations are resolved so that
//! statements may appear in any order.

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::{
    name, Atom, AttributeDomain, CombineDecl, ContextClause, DomainRef, KnowledgeBase, Literal, Loc, Name,
    ParamValue, PredKind, PredicateDecl, ProbSentence, Term,
};
use crate::error::{Diagnostic, Error, Result};

#[derive(Clone, Debug)]
enum RawTermKind {
    Ident(String),
    Int(i64),
    Shift(String, i64),
}

#[derive(Clone, Debug)]
struct RawTerm {
    kind: RawTermKind,
    loc: Loc,
}

#[derive(Clone, Debug)]
struct RawAtom {
    pred: String,
    args: Vec<RawTerm>,
    loc: Loc,
}

#[derive(Clone, Debug)]
struct RawLit {
    positive: bool,
    atom: RawAtom,
}

#[derive(Clone, Debug)]
enum Stmt {
    Domain { name: String, members: Vec<(String, Loc)>, loc: Loc },
    Value { pred: String, members: Vec<(String, Loc)>, loc: Loc },
    Pred { name: String, kind: PredKind, attrs: Vec<(String, Loc)>, loc: Loc },
    Prob { cons: RawAtom, ante: Vec<RawAtom>, alpha: (f64, Loc), context: Vec<RawLit>, loc: Loc },
    Ctx { head: RawAtom, body: Vec<RawLit>, loc: Loc },
    Combine { pred: String, rule: String, params: Vec<(String, ParamValue)>, loc: Loc },
    Fact { atom: RawAtom },
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = std::result::Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn loc(&self) -> Loc {
        let t = &self.toks[self.pos];
        Loc { line: t.line, col: t.col }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let loc = self.loc();
        Err(Diagnostic::error(loc.line, loc.col, msg))
    }

    fn expect(&mut self, want: Tok) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {}, found {}", want.describe(), self.peek().describe()))
        }
    }

    fn ident(&mut self) -> PResult<(String, Loc)> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, loc))
            }
            other => self.err(format!("expected identifier, found {}", other.describe())),
        }
    }

    /// Skips past the next `.`, for recovery after an error.
    fn recover(&mut self) {
        loop {
            match self.bump() {
                Tok::Dot | Tok::Eof => break,
                _ => {}
            }
        }
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn term(&mut self) -> PResult<RawTerm> {
        let loc = self.loc();
        let kind = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                match self.peek() {
                    Tok::Plus | Tok::Minus => {
                        let sign = if self.bump() == Tok::Minus { -1 } else { 1 };
                        match self.bump() {
                            Tok::Int(k) => RawTermKind::Shift(s, sign * k),
                            other => return self.err(format!("expected integer offset, found {}", other.describe())),
                        }
                    }
                    _ => RawTermKind::Ident(s),
                }
            }
            Tok::Int(i) => {
                self.bump();
                RawTermKind::Int(i)
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => RawTermKind::Int(-i),
                    other => return self.err(format!("expected integer, found {}", other.describe())),
                }
            }
            other => return self.err(format!("expected term, found {}", other.describe())),
        };
        Ok(RawTerm { kind, loc })
    }

    fn atom(&mut self) -> PResult<RawAtom> {
        let (pred, loc) = self.ident()?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.term()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(RawAtom { pred, args, loc })
    }

    fn literal(&mut self) -> PResult<RawLit> {
        if matches!(self.peek(), Tok::Ident(s) if s == "not") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            return Ok(RawLit { positive: false, atom: self.atom()? });
        }
        Ok(RawLit { positive: true, atom: self.atom()? })
    }

    fn literals(&mut self) -> PResult<Vec<RawLit>> {
        let mut out = vec![self.literal()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.literal()?);
        }
        Ok(out)
    }

    fn number(&mut self) -> PResult<f64> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let x = match self.peek().clone() {
            Tok::Int(i) => i as f64,
            Tok::Float(x) => x,
            other => return self.err(format!("expected probability, found {}", other.describe())),
        };
        self.bump();
        Ok(if negative { -x } else { x })
    }

    fn member_list(&mut self) -> PResult<Vec<(String, Loc)>> {
        self.expect(Tok::LBrace)?;
        let mut members = Vec::new();
        if *self.peek() != Tok::RBrace {
            loop {
                let loc = self.loc();
                match self.bump() {
                    Tok::Ident(s) => members.push((s, loc)),
                    Tok::Int(i) => members.push((i.to_string(), loc)),
                    other => {
                        return Err(Diagnostic::error(
                            loc.line,
                            loc.col,
                            format!("expected domain member, found {}", other.describe()),
                        ))
                    }
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(members)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let keyword = match self.peek() {
            Tok::Ident(s) => s.clone(),
            other => return self.err(format!("expected a statement, found {}", other.describe())),
        };
        let stmt = match keyword.as_str() {
            "domain" | "value" => {
                self.bump();
                let (n, _) = self.ident()?;
                self.expect(Tok::Eq)?;
                let members = self.member_list()?;
                if keyword == "domain" {
                    Stmt::Domain { name: n, members, loc }
                } else {
                    Stmt::Value { pred: n, members, loc }
                }
            }
            "pred" | "cpred" => {
                self.bump();
                let (n, _) = self.ident()?;
                let mut attrs = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        loop {
                            attrs.push(self.ident()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                let kind = if keyword == "pred" { PredKind::Prob } else { PredKind::Context };
                Stmt::Pred { name: n, kind, attrs, loc }
            }
            "prob" => {
                self.bump();
                let cons = self.atom()?;
                let mut ante = Vec::new();
                if *self.peek() == Tok::Bar {
                    self.bump();
                    ante.push(self.atom()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        ante.push(self.atom()?);
                    }
                }
                self.expect(Tok::Eq)?;
                let aloc = self.loc();
                let alpha = self.number()?;
                let context = if *self.peek() == Tok::Arrow {
                    self.bump();
                    self.literals()?
                } else {
                    Vec::new()
                };
                Stmt::Prob { cons, ante, alpha: (alpha, aloc), context, loc }
            }
            "ctx" => {
                self.bump();
                let head = self.atom()?;
                let body = if *self.peek() == Tok::Arrow {
                    self.bump();
                    self.literals()?
                } else {
                    Vec::new()
                };
                Stmt::Ctx { head, body, loc }
            }
            "combine" => {
                self.bump();
                let (pred, _) = self.ident()?;
                match self.ident()? {
                    (w, _) if w == "with" => {}
                    (w, l) => return Err(Diagnostic::error(l.line, l.col, format!("expected `with`, found `{}`", w))),
                }
                let (rule, _) = self.ident()?;
                let mut params = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        loop {
                            let (k, _) = self.ident()?;
                            self.expect(Tok::Eq)?;
                            let v = match self.peek().clone() {
                                Tok::Ident(s) => {
                                    self.bump();
                                    ParamValue::Ident(name(&s.to_lowercase()))
                                }
                                _ => ParamValue::Number(self.number()?),
                            };
                            params.push((k.to_lowercase(), v));
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                Stmt::Combine { pred, rule, params, loc }
            }
            _ => {
                return self.err(format!(
                    "unknown statement `{}` (expected domain, value, pred, cpred, prob, ctx or combine)",
                    keyword
                ))
            }
        };
        self.expect(Tok::Dot)?;
        Ok(stmt)
    }

    fn fact(&mut self) -> PResult<Stmt> {
        let atom = self.atom()?;
        self.expect(Tok::Dot)?;
        Ok(Stmt::Fact { atom })
    }

    fn parse_all(&mut self, fact_mode: bool, diags: &mut Vec<Diagnostic>) -> Vec<Stmt> {
        let mut out = Vec::new();
        while !self.at_eof() {
            let r = if fact_mode { self.fact() } else { self.statement() };
            match r {
                Ok(s) => out.push(s),
                Err(d) => {
                    diags.push(d);
                    self.recover();
                }
            }
        }
        out
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    tokenize(text).map_err(Error::Syntax)
}

fn is_variable(s: &str) -> bool {
    s.starts_with(|c: char| c.is_uppercase() || c == '_')
}

/// Which predicate kind an atom position requires.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomKind {
    Prob,
    Context,
}

struct Resolver<'a> {
    kb: &'a KnowledgeBase,
    diags: Vec<Diagnostic>,
}

impl Resolver<'_> {
    fn error(&mut self, loc: Loc, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(loc.line, loc.col, msg));
    }

    fn atom(&mut self, raw: &RawAtom, kind: AtomKind, vars: &mut BTreeMap<Name, DomainRef>) -> Option<Atom> {
        let pred = raw.pred.to_lowercase();
        let Some(decl) = self.kb.predicate(&pred) else {
            self.error(raw.loc, format!("undeclared predicate `{}`", pred));
            return None;
        };
        let want = match kind {
            AtomKind::Prob => PredKind::Prob,
            AtomKind::Context => PredKind::Context,
        };
        if decl.kind != want {
            let (is, expected) = match want {
                PredKind::Prob => ("context", "probabilistic"),
                PredKind::Context => ("probabilistic", "context"),
            };
            self.error(raw.loc, format!("`{}` is a {} predicate; a {} atom is required here", pred, is, expected));
            return None;
        }
        if raw.args.len() != decl.arity() {
            self.error(
                raw.loc,
                format!("arity mismatch: `{}` takes {} arguments, found {}", pred, decl.arity(), raw.args.len()),
            );
            return None;
        }
        let mut args = Vec::with_capacity(raw.args.len());
        let mut ok = true;
        for (pos, (arg, dom)) in raw.args.iter().zip(decl.attributes.iter()).enumerate() {
            let is_value = decl.is_prob() && pos + 1 == decl.arity();
            match self.term(arg, dom, &pred, is_value, vars) {
                Some(t) => args.push(t),
                None => ok = false,
            }
        }
        ok.then(|| Atom { pred: name(&pred), args })
    }

    fn bind_var(&mut self, v: &str, dom: &DomainRef, loc: Loc, vars: &mut BTreeMap<Name, DomainRef>) -> bool {
        match vars.get(v) {
            Some(existing) if existing != dom => {
                self.error(loc, format!("variable `{}` used with domain `{}` and `{}`", v, existing, dom));
                false
            }
            Some(_) => true,
            None => {
                vars.insert(name(v), dom.clone());
                true
            }
        }
    }

    fn term(
        &mut self,
        raw: &RawTerm,
        dom: &DomainRef,
        pred: &str,
        is_value: bool,
        vars: &mut BTreeMap<Name, DomainRef>,
    ) -> Option<Term> {
        match (dom, &raw.kind) {
            (DomainRef::Time, RawTermKind::Ident(v)) => {
                self.bind_var(v, dom, raw.loc, vars).then(|| Term::Var(name(v)))
            }
            (DomainRef::Time, RawTermKind::Int(i)) => Some(Term::Int(*i)),
            (DomainRef::Time, RawTermKind::Shift(v, k)) => {
                self.bind_var(v, dom, raw.loc, vars).then(|| Term::shifted_var(name(v), *k))
            }
            (DomainRef::Named(_), RawTermKind::Shift(..)) => {
                self.error(raw.loc, "time offsets are only allowed in time positions");
                None
            }
            (DomainRef::Named(_), RawTermKind::Ident(v)) if is_variable(v) => {
                self.bind_var(v, dom, raw.loc, vars).then(|| Term::Var(name(v)))
            }
            (DomainRef::Named(d), RawTermKind::Ident(_) | RawTermKind::Int(_)) => {
                let c = match &raw.kind {
                    RawTermKind::Ident(s) => s.to_lowercase(),
                    RawTermKind::Int(i) => i.to_string(),
                    RawTermKind::Shift(..) => unreachable!(),
                };
                let member = self.kb.domains.get(d).map(|dd| dd.index_of(&c).is_some()).unwrap_or(false);
                if !member {
                    if is_value {
                        self.error(raw.loc, format!("value `{}` is not in VAL({})", c, pred));
                    } else {
                        self.error(raw.loc, format!("constant `{}` is not in domain `{}`", c, d));
                    }
                    return None;
                }
                Some(Term::Sym(name(&c)))
            }
        }
    }

    fn literal(&mut self, raw: &RawLit, vars: &mut BTreeMap<Name, DomainRef>) -> Option<Literal> {
        let atom = self.atom(&raw.atom, AtomKind::Context, vars)?;
        Some(Literal { positive: raw.positive, atom })
    }
}

fn declare(stmts: &[Stmt], kb: &mut KnowledgeBase, diags: &mut Vec<Diagnostic>) {
    let mut err = |loc: Loc, msg: String| diags.push(Diagnostic::error(loc.line, loc.col, msg));

    for stmt in stmts {
        let (n, members, loc) = match stmt {
            Stmt::Domain { name, members, loc } => (name, members, loc),
            Stmt::Value { pred, members, loc } => (pred, members, loc),
            _ => continue,
        };
        let n = n.to_lowercase();
        if n == "time" {
            err(*loc, "`time` is a reserved domain name".into());
            continue;
        }
        if kb.domains.contains_key(n.as_str()) {
            err(*loc, format!("duplicate declaration of domain `{}`", n));
            continue;
        }
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for (m, mloc) in members {
            let m = m.to_lowercase();
            if is_variable(&m) || m == "not" {
                err(*mloc, format!("`{}` cannot be a domain member", m));
            } else if !seen.insert(m.clone()) {
                err(*mloc, format!("duplicate member `{}` in domain `{}`", m, n));
            } else {
                list.push(name(&m));
            }
        }
        if list.is_empty() {
            err(*loc, format!("domain `{}` has no members", n));
            continue;
        }
        kb.domains.insert(name(&n), AttributeDomain { name: name(&n), members: list });
    }

    let value_decls: BTreeSet<String> = stmts
        .iter()
        .filter_map(|s| match s {
            Stmt::Value { pred, .. } => Some(pred.to_lowercase()),
            _ => None,
        })
        .collect();

    for stmt in stmts {
        let Stmt::Pred { name: n, kind, attrs, loc } = stmt else { continue };
        let n = n.to_lowercase();
        if n == "not" {
            err(*loc, "`not` cannot name a predicate".into());
            continue;
        }
        if kb.predicates.contains_key(n.as_str()) {
            err(*loc, format!("duplicate declaration of predicate `{}`", n));
            continue;
        }
        let mut attributes = Vec::new();
        let mut ok = true;
        for (a, aloc) in attrs {
            let a = a.to_lowercase();
            if a == "time" {
                attributes.push(DomainRef::Time);
            } else if kb.domains.contains_key(a.as_str()) {
                attributes.push(DomainRef::Named(name(&a)));
            } else {
                err(*aloc, format!("undeclared domain `{}`", a));
                ok = false;
            }
        }
        let times: Vec<usize> =
            attributes.iter().enumerate().filter(|(_, d)| **d == DomainRef::Time).map(|(i, _)| i).collect();
        if times.len() > 1 {
            err(*loc, format!("predicate `{}` has more than one time attribute", n));
            ok = false;
        }
        let mut value_domain = None;
        if *kind == PredKind::Prob {
            if value_decls.contains(&n) && kb.domains.contains_key(n.as_str()) {
                attributes.push(DomainRef::Named(name(&n)));
                value_domain = Some(name(&n));
            } else if !value_decls.contains(&n) {
                err(*loc, format!("p-predicate `{}` has no `value {} = {{...}}` declaration", n, n));
                ok = false;
            } else {
                ok = false;
            }
        }
        if ok {
            kb.predicates.insert(
                name(&n),
                PredicateDecl { name: name(&n), kind: *kind, attributes, time_position: times.first().copied(), value_domain },
            );
        }
    }

    for stmt in stmts {
        if let Stmt::Value { pred, loc, .. } = stmt {
            let p = pred.to_lowercase();
            match stmts.iter().find_map(|s| match s {
                Stmt::Pred { name, kind, .. } if name.to_lowercase() == p => Some(*kind),
                _ => None,
            }) {
                Some(PredKind::Prob) => {}
                Some(PredKind::Context) => err(*loc, format!("`value` declared for context predicate `{}`", p)),
                None => err(*loc, format!("`value` declared for undeclared predicate `{}`", p)),
            }
        }
    }

    for stmt in stmts {
        let Stmt::Combine { pred, rule, params, loc } = stmt else { continue };
        let p = pred.to_lowercase();
        match kb.predicates.get(p.as_str()) {
            Some(d) if d.is_prob() => {}
            Some(_) => {
                err(*loc, format!("combining rule declared for context predicate `{}`", p));
                continue;
            }
            None => {
                err(*loc, format!("combining rule declared for undeclared predicate `{}`", p));
                continue;
            }
        }
        if kb.cr.contains_key(p.as_str()) {
            err(*loc, format!("duplicate combining rule for `{}`", p));
            continue;
        }
        if let Some((_, v)) = params.iter().find(|(k, _)| k == "distinguished") {
            let known = match v {
                ParamValue::Ident(v) => kb.value_index(&p, v).is_some(),
                ParamValue::Number(_) => false,
            };
            if !known {
                err(*loc, format!("distinguished value `{}` is not in VAL({})", v, p));
                continue;
            }
        }
        kb.cr.insert(
            name(&p),
            CombineDecl {
                rule: name(&rule.to_lowercase()),
                params: params.iter().map(|(k, v)| (name(k), v.clone())).collect(),
            },
        );
    }
}

/// Parses and validates a knowledge base.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase> {
    let toks = lex(text)?;
    let mut diags = Vec::new();
    let stmts = Parser { toks, pos: 0 }.parse_all(false, &mut diags);

    let mut kb = KnowledgeBase::default();
    declare(&stmts, &mut kb, &mut diags);

    let mut r = Resolver { kb: &kb, diags: Vec::new() };
    let mut pb = Vec::new();
    let mut cb = Vec::new();
    for stmt in &stmts {
        match stmt {
            Stmt::Prob { cons, ante, alpha: (alpha, aloc), context, loc } => {
                let mut vars = BTreeMap::new();
                let c = r.atom(cons, AtomKind::Prob, &mut vars);
                let a: Vec<Option<Atom>> = ante.iter().map(|x| r.atom(x, AtomKind::Prob, &mut vars)).collect();
                let ctx: Vec<Option<Literal>> = context.iter().map(|l| r.literal(l, &mut vars)).collect();
                if !(0.0..=1.0).contains(alpha) {
                    r.error(*aloc, format!("probability {} is out of range [0, 1]", alpha));
                    continue;
                }
                if let (Some(cons), Some(ante), Some(context)) =
                    (c, a.into_iter().collect::<Option<Vec<_>>>(), ctx.into_iter().collect::<Option<Vec<_>>>())
                {
                    pb.push(ProbSentence { cons, ante, alpha: *alpha, context, var_domains: vars, loc: *loc });
                }
            }
            Stmt::Ctx { head, body, loc } => {
                let mut vars = BTreeMap::new();
                let h = r.atom(head, AtomKind::Context, &mut vars);
                let b: Vec<Option<Literal>> = body.iter().map(|l| r.literal(l, &mut vars)).collect();
                if let (Some(head), Some(body)) = (h, b.into_iter().collect::<Option<Vec<_>>>()) {
                    cb.push(ContextClause { head, body, var_domains: vars, loc: *loc });
                }
            }
            _ => {}
        }
    }
    diags.extend(r.diags);
    if !diags.is_empty() {
        diags.sort_by_key(|d| (d.line, d.col));
        return Err(Error::Syntax(diags));
    }
    kb.pb = pb;
    kb.cb = cb;
    Ok(kb)
}

/// Parses a file of `atom.` facts (context or evidence) against `kb`.
pub fn parse_atoms(text: &str, kb: &KnowledgeBase, kind: AtomKind) -> Result<Vec<Atom>> {
    let toks = lex(text)?;
    let mut diags = Vec::new();
    let stmts = Parser { toks, pos: 0 }.parse_all(true, &mut diags);
    let mut r = Resolver { kb, diags: Vec::new() };
    let mut out = Vec::new();
    for stmt in &stmts {
        if let Stmt::Fact { atom } = stmt {
            if let Some(a) = r.atom(atom, kind, &mut BTreeMap::new()) {
                out.push(a);
            }
        }
    }
    diags.extend(r.diags);
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(Error::Syntax(diags))
    }
}

/// Parses a single p-atom, optionally terminated by `.`.
pub fn parse_query(text: &str, kb: &KnowledgeBase) -> Result<Atom> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let raw = p.atom().map_err(|d| Error::Syntax(vec![d]))?;
    if *p.peek() == Tok::Dot {
        p.bump();
    }
    if !p.at_eof() {
        return Err(Error::Syntax(vec![p.err::<()>("trailing input after query").unwrap_err()]));
    }
    let mut r = Resolver { kb, diags: Vec::new() };
    match r.atom(&raw, AtomKind::Prob, &mut BTreeMap::new()) {
        Some(a) if r.diags.is_empty() => Ok(a),
        _ => Err(Error::Syntax(r.diags)),
    }
}
