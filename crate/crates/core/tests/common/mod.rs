//! Seeded generator of small acyclic knowledge bases with contexts, and
//! session helpers shared by the integration tests.

#![allow(dead_code)]

use std::fmt::Write;

use kbmc::lang::{parse_atoms, parse_kb, parse_query, validate_session, AtomKind, Bounds, KnowledgeBase, Session, SessionInput};
use rand::seq::SliceRandom;
use rand::Rng;

/// One generated problem: KB text plus session inputs.
#[derive(Clone, Debug)]
pub struct Case {
    pub kb: String,
    pub context: String,
    pub evidence: String,
    pub ground_query: String,
    pub open_query: String,
    pub bounds: (i64, i64),
}

pub fn session(kb: &KnowledgeBase, context: &str, evidence: &str, query: Option<&str>, bounds: (i64, i64)) -> kbmc::Result<Session> {
    validate_session(
        kb,
        &SessionInput {
            context: parse_atoms(context, kb, AtomKind::Context)?,
            evidence: parse_atoms(evidence, kb, AtomKind::Prob)?,
            bounds: Bounds::new(bounds.0, bounds.1),
            query: query.map(|q| parse_query(q, kb)).transpose()?,
        },
    )
}

impl Case {
    pub fn parse(&self) -> KnowledgeBase {
        parse_kb(&self.kb).unwrap_or_else(|e| panic!("{}\n{}", e, self.kb))
    }

    pub fn session(&self, kb: &KnowledgeBase, ground: bool) -> Session {
        let q = if ground { &self.ground_query } else { &self.open_query };
        session(kb, &self.context, &self.evidence, Some(q), self.bounds).unwrap_or_else(|e| panic!("{}\n{:?}", e, self))
    }
}

/// A distribution over `n` values with weights from 0..=9, some zero.
fn distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<u32> = (0..n).map(|_| if rng.gen_bool(0.15) { 0 } else { rng.gen_range(1..=9) }).collect();
        let total: u32 = w.iter().sum();
        if total > 0 {
            return w.iter().map(|&x| x as f64 / total as f64).collect();
        }
    }
}

struct Pred {
    name: String,
    card: usize,
}

/// Writes a full table for `cons` given every assignment of `parents`.
/// `args` renders the argument list of an atom, `guard` is appended to
/// every sentence.
fn table(out: &mut String, rng: &mut impl Rng, cons: (&Pred, &str), parents: &[(&Pred, &str)], guard: &str) {
    let rows: usize = parents.iter().map(|(p, _)| p.card).product();
    for r in 0..rows {
        let mut rem = r;
        let mut ante = Vec::new();
        for (p, args) in parents.iter().rev() {
            ante.push(format!("{}({}v{})", p.name, args, rem % p.card));
            rem /= p.card;
        }
        ante.reverse();
        let given = if ante.is_empty() { String::new() } else { format!(" | {}", ante.join(", ")) };
        for (v, p) in distribution(rng, cons.0.card).iter().enumerate() {
            let _ = writeln!(out, "prob {}({}v{}){} = {}{}.", cons.0.name, cons.1, v, given, p, guard);
        }
    }
}

/// A random acyclic KB over at most ten objects with at most four values
/// each and at most three parents per object. Tables are guarded by
/// contexts in several ways: unguarded, split by a derived context and its
/// negation, present only under a base context, or split into two families
/// fused by noisy-max.
pub fn random_case(rng: &mut impl Rng) -> Case {
    let m: usize = rng.gen_range(1..=2);
    let timed = rng.gen_bool(0.4);
    let horizon: i64 = if timed { rng.gen_range(0..=2) } else { 0 };
    let timed_objs = if timed { m * (horizon as usize + 1) } else { 0 };
    let max_preds = ((10 - timed_objs) / m).clamp(1, 5);
    let k = rng.gen_range(1..=max_preds);

    let members: Vec<String> = (0..m).map(|i| format!("c{}", i)).collect();
    let mut kb = String::new();
    let _ = writeln!(kb, "domain d = {{ {} }}.", members.join(", "));
    let preds: Vec<Pred> = (0..k).map(|i| Pred { name: format!("p{}", i), card: rng.gen_range(2..=4) }).collect();
    for p in &preds {
        let vals: Vec<String> = (0..p.card).map(|v| format!("v{}", v)).collect();
        let _ = writeln!(kb, "value {} = {{ {} }}.\npred {}(d).", p.name, vals.join(", "), p.name);
    }
    let _ = writeln!(kb, "cpred g(d). cpred h(d). cpred on(d).\nctx on(X) <- g(X), not h(X).");

    for (i, p) in preds.iter().enumerate() {
        let mut candidates: Vec<usize> = (0..i).collect();
        candidates.shuffle(rng);
        let parents: Vec<(&Pred, &str)> =
            candidates.iter().take(rng.gen_range(0..=3.min(i))).map(|&j| (&preds[j], "X, ")).collect();
        let cons = (p, "X, ");
        match rng.gen_range(0..4) {
            0 => table(&mut kb, rng, cons, &parents, ""),
            1 => {
                table(&mut kb, rng, cons, &parents, " <- on(X)");
                table(&mut kb, rng, cons, &parents, " <- not on(X)");
            }
            2 => table(&mut kb, rng, cons, &parents, " <- g(X)"),
            _ if parents.len() >= 2 => {
                let cut = rng.gen_range(1..parents.len());
                table(&mut kb, rng, cons, &parents[..cut], "");
                table(&mut kb, rng, cons, &parents[cut..], "");
            }
            _ => table(&mut kb, rng, cons, &parents, ""),
        }
    }

    let mut objects: Vec<(String, usize, bool)> = Vec::new();
    for p in &preds {
        for c in &members {
            objects.push((format!("{}({}, ", p.name, c), p.card, false));
        }
    }
    if timed {
        let s = Pred { name: "s".into(), card: rng.gen_range(2..=3) };
        let vals: Vec<String> = (0..s.card).map(|v| format!("v{}", v)).collect();
        let _ = writeln!(kb, "value s = {{ {} }}.\npred s(d, time).", vals.join(", "));
        table(&mut kb, rng, (&s, "X, 0, "), &[], "");
        let mut parents: Vec<(&Pred, &str)> = vec![(&s, "X, t-1, ")];
        if rng.gen_bool(0.5) {
            parents.push((&preds[rng.gen_range(0..k)], "X, "));
        }
        if rng.gen_bool(0.3) {
            table(&mut kb, rng, (&s, "X, t, "), &parents, " <- on(X)");
            table(&mut kb, rng, (&s, "X, t, "), &parents, " <- not on(X)");
        } else {
            table(&mut kb, rng, (&s, "X, t, "), &parents, "");
        }
        for c in &members {
            for t in 0..=horizon {
                objects.push((format!("s({}, {}, ", c, t), s.card, true));
            }
        }
    }

    let mut context = String::new();
    for c in &members {
        for g in ["g", "h"] {
            if rng.gen_bool(0.5) {
                let _ = write!(context, "{}({}). ", g, c);
            }
        }
    }

    let mut evidence = String::new();
    objects.shuffle(rng);
    let n_ev = rng.gen_range(0..=2).min(objects.len().saturating_sub(1));
    for (obj, card, _) in &objects[..n_ev] {
        let _ = write!(evidence, "{}v{}). ", obj, rng.gen_range(0..*card));
    }
    let (target, _, is_timed) = &objects[n_ev.min(objects.len() - 1)];
    let ground_query = format!("{}V)", target);
    let open_query = if *is_timed {
        if rng.gen_bool(0.5) { "s(X, T, V)".to_string() } else { format!("s(X, {}, V)", rng.gen_range(0..=horizon)) }
    } else {
        format!("{}(X, V)", &target[..target.find('(').unwrap()])
    };
    Case { kb, context, evidence, ground_query, open_query, bounds: (0, horizon) }
}
