//! Table and JSON renderings of answers.

use kbmc::infer::{AnsweredInstance, QueryAnswer};
use kbmc::lang::{Bounds, KnowledgeBase};
use serde_json::{json, Value};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
}

fn bindings_json(inst: &AnsweredInstance) -> Value {
    inst.bindings.iter().map(|(v, t)| (v.to_string(), Value::String(t.to_string()))).collect::<serde_json::Map<_, _>>().into()
}

fn instance_json(inst: &AnsweredInstance) -> Value {
    let p = &inst.posterior;
    json!({
        "bindings": bindings_json(inst),
        "object": p.obj.label(),
        "posterior": p.values.iter().zip(&p.probabilities).map(|(v, x)| json!({ "value": v.to_string(), "p": x })).collect::<Vec<_>>(),
    })
}

fn bindings_cell(inst: &AnsweredInstance) -> String {
    if inst.bindings.is_empty() {
        "-".into()
    } else {
        inst.bindings.iter().map(|(v, t)| format!("{}={}", v, t)).collect::<Vec<_>>().join(",")
    }
}

/// Aligned columns: the first left-justified, the rest right-justified.
fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{:<w$}", s, w = widths[c]) } else { format!("{:>w$}", s, w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Header of value names for the queried predicate.
fn header(kb: &KnowledgeBase, pred: Option<&str>, first: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    if let Some(p) = pred {
        h.extend(kb.values(p).iter().map(|v| v.to_string()));
    }
    h
}

fn row(lead: Vec<String>, inst: &AnsweredInstance) -> Vec<String> {
    let mut r = lead;
    r.extend(inst.posterior.probabilities.iter().map(|p| p.to_string()));
    r
}

pub fn render_answer(kb: &KnowledgeBase, query: &str, b: Bounds, ans: &QueryAnswer, format: Format) -> String {
    match format {
        Format::Json => {
            let v = json!({
                "query": query,
                "bounds": { "from": b.from, "to": b.to },
                "instances": ans.instances.iter().map(instance_json).collect::<Vec<_>>(),
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("json values serialize"))
        }
        Format::Table => {
            let pred = ans.instances.first().map(|i| i.posterior.obj.pred.as_ref());
            let mut rows = vec![header(kb, pred, &["bindings"])];
            rows.extend(ans.instances.iter().map(|i| row(vec![bindings_cell(i)], i)));
            if ans.instances.is_empty() {
                rows.push(vec!["(no answer)".into()]);
            }
            table(&rows)
        }
    }
}

pub fn render_projection(kb: &KnowledgeBase, query: &str, b: Bounds, steps: &[(i64, QueryAnswer)], format: Format) -> String {
    match format {
        Format::Json => {
            let v = json!({
                "query": query,
                "bounds": { "from": b.from, "to": b.to },
                "steps": steps.iter().map(|(t, a)| json!({
                    "t": t,
                    "instances": a.instances.iter().map(instance_json).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("json values serialize"))
        }
        Format::Table => {
            let pred = steps.iter().flat_map(|(_, a)| a.instances.first()).next().map(|i| i.posterior.obj.pred.as_ref());
            let mut rows = vec![header(kb, pred, &["t", "bindings"])];
            for (t, a) in steps {
                if a.instances.is_empty() {
                    rows.push(vec![t.to_string(), "(no answer)".into()]);
                }
                rows.extend(a.instances.iter().map(|i| row(vec![t.to_string(), bindings_cell(i)], i)));
            }
            table(&rows)
        }
    }
}

pub fn check_json(ok: bool, code: u8, message: &str, b: Option<Bounds>) -> String {
    let mut v = json!({ "ok": ok, "exit_code": code });
    if let Some(b) = b {
        v["bounds"] = json!({ "from": b.from, "to": b.to });
    }
    if !ok {
        v["diagnostics"] = message.lines().map(Value::from).collect::<Vec<_>>().into();
    }
    serde_json::to_string_pretty(&v).expect("json values serialize")
}
