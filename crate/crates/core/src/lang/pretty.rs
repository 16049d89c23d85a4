use std::fmt::Write;

use super::{CombineDecl, KnowledgeBase, Literal, PredKind};

fn literals(lits: &[Literal]) -> String {
    lits.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")
}

fn combine(decl: &CombineDecl) -> String {
    if decl.params.is_empty() {
        decl.rule.to_string()
    } else {
        let ps: Vec<String> = decl.params.iter().map(|(k, v)| format!("{} = {}", k, v)).collect();
        format!("{}({})", decl.rule, ps.join(", "))
    }
}

/// Renders `kb` in canonical concrete syntax. Parsing the output yields a
/// knowledge base equal to `kb`.
pub fn pretty_print(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for d in kb.domains.values() {
        let keyword = match kb.predicates.get(&d.name) {
            Some(p) if p.value_domain.as_ref() == Some(&d.name) => "value",
            _ => "domain",
        };
        let members: Vec<&str> = d.members.iter().map(|m| &**m).collect();
        let _ = writeln!(out, "{} {} = {{ {} }}.", keyword, d.name, members.join(", "));
    }
    for p in kb.predicates.values() {
        let keyword = if p.kind == PredKind::Prob { "pred" } else { "cpred" };
        let shown = if p.is_prob() { &p.attributes[..p.attributes.len() - 1] } else { &p.attributes[..] };
        if shown.is_empty() {
            let _ = writeln!(out, "{} {}.", keyword, p.name);
        } else {
            let attrs: Vec<String> = shown.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "{} {}({}).", keyword, p.name, attrs.join(", "));
        }
    }
    for (pred, decl) in &kb.cr {
        let _ = writeln!(out, "combine {} with {}.", pred, combine(decl));
    }
    for c in &kb.cb {
        if c.body.is_empty() {
            let _ = writeln!(out, "ctx {}.", c.head);
        } else {
            let _ = writeln!(out, "ctx {} <- {}.", c.head, literals(&c.body));
        }
    }
    for s in &kb.pb {
        let _ = write!(out, "prob {}", s.cons);
        if !s.ante.is_empty() {
            let ante: Vec<String> = s.ante.iter().map(|a| a.to_string()).collect();
            let _ = write!(out, " | {}", ante.join(", "));
        }
        let _ = write!(out, " = {}", s.alpha);
        if !s.context.is_empty() {
            let _ = write!(out, " <- {}", literals(&s.context));
        }
        out.push_str(".\n");
    }
    out
}
