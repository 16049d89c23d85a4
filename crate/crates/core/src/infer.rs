//! Exact posteriors by variable elimination over a built network.

use std::collections::{BTreeMap, BTreeSet};

use crate::combining::RuleRegistry;
use crate::error::{Error, Result};
use crate::lang::{KnowledgeBase, Name, Obj, PAtom, QueryInstance, Session};
use crate::logic::Substitution;
use crate::netbuild::{build_net, BayesNet};

/// Evidence mass below this is treated as zero.
pub const IMPOSSIBLE_EVIDENCE: f64 = 1e-300;

/// A nonnegative table over the joint values of `vars` (node indices, in
/// ascending order), mixed radix with the first variable most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub table: Vec<f64>,
}

/// Iterates over all assignments of `cards` in mixed-radix order.
fn advance(assignment: &mut [usize], cards: &[usize]) -> bool {
    for k in (0..assignment.len()).rev() {
        assignment[k] += 1;
        if assignment[k] < cards[k] {
            return true;
        }
        assignment[k] = 0;
    }
    false
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

impl Factor {
    pub fn scalar(value: f64) -> Factor {
        Factor { vars: Vec::new(), cards: Vec::new(), table: vec![value] }
    }

    /// The conditional table of `node` as a factor over the node and its
    /// parents.
    pub fn from_node(net: &BayesNet, node: usize) -> Factor {
        let n = &net.nodes[node];
        let mut vars: Vec<usize> = n.parents.iter().copied().chain(std::iter::once(node)).collect();
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&v| net.nodes[v].card()).collect();
        let size: usize = cards.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut assignment = vec![0; vars.len()];
        let own = vars.iter().position(|&v| v == node).expect("node in its own scope");
        let parent_pos: Vec<usize> = n.parents.iter().map(|p| vars.iter().position(|v| v == p).unwrap()).collect();
        loop {
            let row = parent_pos.iter().fold(0, |acc, &k| acc * cards[k] + assignment[k]);
            table.push(n.cpt[row][assignment[own]]);
            if !advance(&mut assignment, &cards) {
                break;
            }
        }
        Factor { vars, cards, table }
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let card_of = |v: usize| {
            self.vars.iter().position(|&x| x == v).map(|k| self.cards[k]).unwrap_or_else(|| {
                other.cards[other.vars.iter().position(|&x| x == v).expect("variable in one operand")]
            })
        };
        let cards: Vec<usize> = vars.iter().map(|&v| card_of(v)).collect();
        let map = |f: &Factor| -> Vec<usize> {
            let st = strides(&f.cards);
            vars.iter().map(|v| f.vars.iter().position(|x| x == v).map_or(0, |k| st[k])).collect()
        };
        let (sa, sb) = (map(self), map(other));
        let size: usize = cards.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut assignment = vec![0; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        loop {
            table.push(self.table[ia] * other.table[ib]);
            // odometer step with incremental offsets
            let mut k = vars.len();
            loop {
                if k == 0 {
                    return Factor { vars, cards, table };
                }
                k -= 1;
                assignment[k] += 1;
                ia += sa[k];
                ib += sb[k];
                if assignment[k] < cards[k] {
                    break;
                }
                ia -= sa[k] * cards[k];
                ib -= sb[k] * cards[k];
                assignment[k] = 0;
            }
        }
    }

    /// Sums `var` out of the factor.
    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        let st = strides(&self.cards);
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(k);
        cards.remove(k);
        let outer: usize = self.cards[..k].iter().product();
        let inner = st[k];
        let mut table = vec![0.0; outer * inner];
        for o in 0..outer {
            for v in 0..self.cards[k] {
                let base = o * self.cards[k] * inner + v * inner;
                for i in 0..inner {
                    table[o * inner + i] += self.table[base + i];
                }
            }
        }
        Factor { vars, cards, table }
    }

    /// Fixes `var` to `value`, dropping it from the scope.
    pub fn reduce(&self, var: usize, value: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        let st = strides(&self.cards);
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(k);
        cards.remove(k);
        let outer: usize = self.cards[..k].iter().product();
        let inner = st[k];
        let mut table = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * self.cards[k] * inner + value * inner;
            table.extend_from_slice(&self.table[base..base + inner]);
        }
        Factor { vars, cards, table }
    }

    /// Zeroes every entry where `var` differs from `value`.
    pub fn indicator(&self, var: usize, value: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&v| v == var) else { return self.clone() };
        let st = strides(&self.cards);
        let mut out = self.clone();
        for (i, x) in out.table.iter_mut().enumerate() {
            if (i / st[k]) % self.cards[k] != value {
                *x = 0.0;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }
}

/// Evidence as node index to value index.
fn evidence_map(net: &BayesNet, evidence: &[PAtom]) -> Result<BTreeMap<usize, usize>> {
    evidence
        .iter()
        .map(|e| {
            net.index_of(&e.obj).map(|i| (i, e.value)).ok_or_else(|| Error::UnknownEvidenceObject(e.obj.to_string()))
        })
        .collect()
}

struct Problem {
    factors: Vec<Factor>,
    hidden: BTreeSet<usize>,
}

/// Factors of the ancestors of `target` and the evidence, with evidence
/// reduced away. Non-ancestors are barren and dropped.
fn setup(net: &BayesNet, evidence: &BTreeMap<usize, usize>, target: usize) -> Problem {
    let keep = net.ancestors(evidence.keys().copied().chain(std::iter::once(target)));
    let mut factors = Vec::with_capacity(keep.len());
    for &i in &keep {
        let mut f = Factor::from_node(net, i);
        for (&var, &value) in evidence {
            f = if var == target { f.indicator(var, value) } else { f.reduce(var, value) };
        }
        factors.push(f);
    }
    let hidden = keep.into_iter().filter(|i| *i != target && !evidence.contains_key(i)).collect();
    Problem { factors, hidden }
}

/// Greedy min-fill order over the interaction graph of `factors`, ties
/// broken by the smaller node index.
pub fn min_fill_order(factors: &[Factor], hidden: &BTreeSet<usize>) -> Vec<usize> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = hidden.iter().map(|&v| (v, BTreeSet::new())).collect();
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a != b {
                    adj.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let mut remaining = hidden.clone();
    let mut order = Vec::with_capacity(hidden.len());
    while !remaining.is_empty() {
        let fill = |v: usize| -> usize {
            let nb: Vec<usize> = adj[&v].iter().copied().collect();
            let mut count = 0;
            for (i, a) in nb.iter().enumerate() {
                for b in &nb[i + 1..] {
                    if !adj[a].contains(b) {
                        count += 1;
                    }
                }
            }
            count
        };
        let v = *remaining.iter().min_by_key(|&&v| (fill(v), v)).expect("nonempty");
        let nb: Vec<usize> = adj[&v].iter().copied().collect();
        for &a in &nb {
            for &b in &nb {
                if a != b {
                    adj.get_mut(&a).unwrap().insert(b);
                }
            }
            adj.get_mut(&a).unwrap().remove(&v);
        }
        adj.remove(&v);
        remaining.remove(&v);
        order.push(v);
    }
    order
}

fn run(mut factors: Vec<Factor>, order: &[usize]) -> Factor {
    for &v in order {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = rest;
        if let Some(first) = touching.first() {
            let joint = touching[1..].iter().fold(first.clone(), |acc, f| acc.product(f));
            factors.push(joint.sum_out(v));
        }
    }
    factors.iter().fold(Factor::scalar(1.0), |acc, f| acc.product(f))
}

/// `P(target, evidence)` as a factor over the target, eliminating with the
/// given order. The order must list exactly the non-evidence ancestors of
/// the target and evidence, excluding the target.
pub fn eliminate_with_order(net: &BayesNet, evidence: &[PAtom], target: &Obj, order: &[usize]) -> Result<Factor> {
    let ev = evidence_map(net, evidence)?;
    let t = net.index_of(target).ok_or_else(|| Error::Invalid(format!("{} is not a network node", target)))?;
    let problem = setup(net, &ev, t);
    let given: BTreeSet<usize> = order.iter().copied().collect();
    if given != problem.hidden || given.len() != order.len() {
        return Err(Error::Invalid("elimination order must list each hidden variable once".into()));
    }
    Ok(run(problem.factors, order))
}

/// `P(target, evidence)` for each target, using a min-fill order.
pub fn eliminate(net: &BayesNet, evidence: &[PAtom], targets: &[Obj]) -> Result<Vec<Factor>> {
    let ev = evidence_map(net, evidence)?;
    targets
        .iter()
        .map(|target| {
            let t = net.index_of(target).ok_or_else(|| Error::Invalid(format!("{} is not a network node", target)))?;
            let problem = setup(net, &ev, t);
            let order = min_fill_order(&problem.factors, &problem.hidden);
            Ok(run(problem.factors, &order))
        })
        .collect()
}

/// The hidden variables a target's elimination would remove, for callers
/// that want to supply their own order.
pub fn hidden_variables(net: &BayesNet, evidence: &[PAtom], target: &Obj) -> Result<BTreeSet<usize>> {
    let ev = evidence_map(net, evidence)?;
    let t = net.index_of(target).ok_or_else(|| Error::Invalid(format!("{} is not a network node", target)))?;
    Ok(setup(net, &ev, t).hidden)
}

/// A posterior distribution over VAL of one object, in declared order.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorVector {
    pub obj: Obj,
    pub values: Vec<Name>,
    pub probabilities: Vec<f64>,
}

impl PosteriorVector {
    /// Normalizes a joint `P(obj, e)` factor.
    pub fn from_joint(net: &BayesNet, obj: &Obj, joint: &Factor) -> Result<PosteriorVector> {
        let pe = joint.total();
        if pe.is_nan() || pe < IMPOSSIBLE_EVIDENCE {
            return Err(Error::ImpossibleEvidence);
        }
        let node = &net.nodes[net.index_of(obj).expect("target is a node")];
        Ok(PosteriorVector {
            obj: obj.clone(),
            values: node.values.clone(),
            probabilities: joint.table.iter().map(|p| p / pe).collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &PosteriorVector) -> f64 {
        self.probabilities.iter().zip(&other.probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One answered query instance.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsweredInstance {
    pub bindings: Substitution,
    pub posterior: PosteriorVector,
}

/// Posteriors for every supported query instance, sorted by object. Empty
/// when no instance has a supporting network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryAnswer {
    pub instances: Vec<AnsweredInstance>,
}

/// Posteriors on an already built network.
pub fn answer_on(net: &BayesNet, evidence: &[PAtom], instances: &[QueryInstance]) -> Result<QueryAnswer> {
    let targets: Vec<Obj> = instances.iter().map(|q| q.obj.clone()).collect();
    let joints = eliminate(net, evidence, &targets)?;
    let mut out = Vec::with_capacity(instances.len());
    for (q, joint) in instances.iter().zip(&joints) {
        out.push(AnsweredInstance { bindings: q.bindings.clone(), posterior: PosteriorVector::from_joint(net, &q.obj, joint)? });
    }
    Ok(QueryAnswer { instances: out })
}

/// Builds the supporting network for the session and computes the
/// posterior of each query instance given the evidence.
pub fn answer_query(kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry) -> Result<QueryAnswer> {
    let built = build_net(kb, session, registry)?;
    answer_on(&built.net, &session.evidence, &built.instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_atoms, parse_kb, parse_query, validate_session, AtomKind, Bounds, SessionInput};
    use proptest::prelude::*;

    const CHAIN: &str = "
        value a = { v1, v2 }. pred a.
        value b = { v1, v2 }. pred b.
        prob a(v1) = 0.3. prob a(v2) = 0.7.
        prob b(v1) | a(v1) = 0.6. prob b(v2) | a(v1) = 0.4.
        prob b(v1) | a(v2) = 0.2. prob b(v2) | a(v2) = 0.8.
    ";

    fn session(kb: &KnowledgeBase, ev: &str, q: &str) -> Session {
        validate_session(
            kb,
            &SessionInput {
                context: Vec::new(),
                evidence: parse_atoms(ev, kb, AtomKind::Prob).unwrap(),
                bounds: Bounds::new(0, 0),
                query: Some(parse_query(q, kb).unwrap()),
            },
        )
        .unwrap()
    }

    fn answer(kb_text: &str, ev: &str, q: &str) -> Result<Vec<f64>> {
        let kb = parse_kb(kb_text).unwrap();
        let a = answer_query(&kb, &session(&kb, ev, q), &RuleRegistry::default())?;
        Ok(a.instances[0].posterior.probabilities.clone())
    }

    #[test]
    fn chain_marginal() {
        let kb = parse_kb(CHAIN).unwrap();
        let s = session(&kb, "", "b(V)");
        let built = build_net(&kb, &s, &RuleRegistry::default()).unwrap();
        let f = &eliminate(&built.net, &[], &[built.instances[0].obj.clone()]).unwrap()[0];
        // 0.3 * 0.6 + 0.7 * 0.2
        assert!((f.table[0] - 0.32).abs() < 1e-15);
    }

    #[test]
    fn chain_posterior_given_child() {
        let p = answer(CHAIN, "b(v1).", "a(V)").unwrap();
        assert!((p[0] - 0.18 / 0.32).abs() < 1e-12);
    }

    #[test]
    fn deterministic_link_keeps_evidence_mass() {
        let text = "value r = { nsr, vf }. pred r. value c = { present, absent }. pred c.
            prob r(nsr) = 0.4. prob r(vf) = 0.6.
            prob c(present) | r(nsr) = 1.0. prob c(absent) | r(nsr) = 0.0.
            prob c(present) | r(vf) = 0.0. prob c(absent) | r(vf) = 1.0.";
        let kb = parse_kb(text).unwrap();
        let s = session(&kb, "r(nsr).", "c(V)");
        let built = build_net(&kb, &s, &RuleRegistry::default()).unwrap();
        let f = &eliminate(&built.net, &s.evidence, &[built.instances[0].obj.clone()]).unwrap()[0];
        assert!((f.table[0] - 0.4).abs() < 1e-15);
        assert_eq!(f.table[1], 0.0);
        assert!(matches!(answer(text, "c(present). r(vf).", "r(V)"), Err(Error::ImpossibleEvidence)));
    }

    #[test]
    fn single_node_marginal() {
        let p = answer("value poa = { none, m1, m2 }. pred poa. prob poa(none) = 0.99. prob poa(m1) = 0.005. prob poa(m2) = 0.005.", "", "poa(V)").unwrap();
        assert_eq!(p, vec![0.99, 0.005, 0.005]);
    }

    #[test]
    fn query_that_is_evidence_is_one_hot() {
        let p = answer(CHAIN, "a(v2).", "a(V)").unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn evidence_outside_network_is_rejected() {
        let kb = parse_kb(CHAIN).unwrap();
        let s = session(&kb, "b(v1).", "a(V)");
        let built = build_net(&kb, &session(&kb, "", "a(V)"), &RuleRegistry::default()).unwrap();
        assert!(matches!(answer_on(&built.net, &s.evidence, &built.instances), Err(Error::UnknownEvidenceObject(_))));
    }

    #[test]
    fn factor_product_and_sum_out() {
        let a = Factor { vars: vec![0], cards: vec![2], table: vec![0.3, 0.7] };
        let b = Factor { vars: vec![0, 1], cards: vec![2, 2], table: vec![0.6, 0.4, 0.2, 0.8] };
        let ab = a.product(&b);
        assert_eq!(ab.vars, vec![0, 1]);
        let m = ab.sum_out(0);
        assert!((m.table[0] - 0.32).abs() < 1e-15 && (m.table[1] - 0.68).abs() < 1e-15);
        assert_eq!(ab.reduce(1, 0).table, vec![0.3 * 0.6, 0.7 * 0.2]);
    }

    // A random layered network over binary and ternary variables.
    fn random_kb() -> impl Strategy<Value = String> {
        (3usize..=7).prop_flat_map(|n| {
            let parents = prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..=2), n);
            let cards = prop::collection::vec(2usize..=3, n);
            let weights = prop::collection::vec(0.05f64..1.0, 200);
            (Just(n), parents, cards, weights)
        })
        .prop_map(|(n, parents, cards, weights)| {
            let mut text = String::new();
            let mut w = weights.into_iter().cycle();
            for (i, &card) in cards.iter().enumerate().take(n) {
                let vals: Vec<String> = (0..card).map(|k| format!("s{}", k)).collect();
                text.push_str(&format!("value x{} = {{ {} }}. pred x{}.\n", i, vals.join(", "), i));
            }
            for i in 0..n {
                let mut ps: Vec<usize> = if i == 0 { Vec::new() } else { parents[i].iter().map(|ix| ix.index(i)).collect() };
                ps.sort();
                ps.dedup();
                let rows: usize = ps.iter().map(|&p| cards[p]).product();
                for r in 0..rows {
                    let mut rem = r;
                    let mut assign = vec![0; ps.len()];
                    for k in (0..ps.len()).rev() {
                        assign[k] = rem % cards[ps[k]];
                        rem /= cards[ps[k]];
                    }
                    let ante: Vec<String> = ps.iter().zip(&assign).map(|(p, v)| format!("x{}(s{})", p, v)).collect();
                    let raw: Vec<f64> = (0..cards[i]).map(|_| w.next().unwrap()).collect();
                    let total: f64 = raw.iter().sum();
                    for (k, x) in raw.iter().enumerate() {
                        let given = if ante.is_empty() { String::new() } else { format!(" | {}", ante.join(", ")) };
                        text.push_str(&format!("prob x{}(s{}){} = {}.\n", i, k, given, x / total));
                    }
                }
            }
            text
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn order_invariance_and_normalization(text in random_kb(), target in any::<prop::sample::Index>(), ev in any::<prop::sample::Index>(), perm in any::<u64>()) {
            let kb = parse_kb(&text).unwrap();
            let n = kb.predicates.len();
            let t = target.index(n);
            let e = ev.index(n);
            let q = format!("x{}(V)", t);
            let ev_text = if e == t { String::new() } else { format!("x{}(s0).", e) };
            let s = session(&kb, &ev_text, &q);
            let built = build_net(&kb, &s, &RuleRegistry::default()).unwrap();
            let obj = &built.instances[0].obj;
            let base = &eliminate(&built.net, &s.evidence, std::slice::from_ref(obj)).unwrap()[0];
            let mut order: Vec<usize> = hidden_variables(&built.net, &s.evidence, obj).unwrap().into_iter().collect();
            let k = order.len().max(1);
            order.rotate_left((perm as usize) % k);
            if perm % 2 == 0 { order.reverse(); }
            let other = eliminate_with_order(&built.net, &s.evidence, obj, &order).unwrap();
            for (a, b) in base.table.iter().zip(&other.table) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let post = PosteriorVector::from_joint(&built.net, obj, base).unwrap();
            prop_assert!((post.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(post.probabilities.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
        }

        #[test]
        fn certain_evidence_changes_nothing(text in random_kb(), target in any::<prop::sample::Index>()) {
            // add a child that is certainly s0 whatever its parent
            let kb = parse_kb(&format!("{}value sure = {{ yes, no }}. pred sure.\nprob sure(yes) | x0(s0) = 1. prob sure(no) | x0(s0) = 0.\nprob sure(yes) | x0(s1) = 1. prob sure(no) | x0(s1) = 0.\nprob sure(yes) | x0(s2) = 1. prob sure(no) | x0(s2) = 0.\n", text));
            // x0 may be binary, in which case the s2 rows do not parse
            let Ok(kb) = kb else { return Ok(()) };
            let n = kb.predicates.len() - 1;
            let q = format!("x{}(V)", target.index(n));
            let reg = RuleRegistry::default();
            let without = answer_query(&kb, &session(&kb, "", &q), &reg).unwrap();
            let with = answer_query(&kb, &session(&kb, "sure(yes).", &q), &reg).unwrap();
            let d = without.instances[0].posterior.max_abs_diff(&with.instances[0].posterior);
            prop_assert!(d <= 1e-12);
        }
    }
}
