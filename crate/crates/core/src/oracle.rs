//! Brute-force ground truth: possible-model enumeration over the combined
//! relevant base, rejection sampling, and d-separation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combining::RuleRegistry;
use crate::error::{Error, Result};
use crate::infer::{AnsweredInstance, PosteriorVector, QueryAnswer, IMPOSSIBLE_EVIDENCE};
use crate::lang::{query_instances, KnowledgeBase, Name, Obj, PAtom, Session};
use crate::netbuild::BayesNet;
use crate::relevance::{relevant_kb, CombinedBase, GroundSentence, RelevantAtomSet};

/// Most positive-mass models the enumerator will produce.
pub const ENUMERATION_LIMIT: usize = 10_000_000;

/// One value index per object, aligned with the objects of the joint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PossibleModel {
    pub assignment: Vec<usize>,
}

/// The models of positive mass with their probabilities. Models of zero
/// mass are left out.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub objs: Vec<Obj>,
    pub values: Vec<Vec<Name>>,
    pub models: Vec<(PossibleModel, f64)>,
}

/// Chain-rule enumeration plan: objects in topological order with their
/// tables.
struct Plan<'a> {
    order: Vec<&'a Obj>,
    parents: Vec<Vec<usize>>,
    tables: Vec<Vec<Vec<f64>>>,
    allowed: Vec<Option<usize>>,
}

fn plan<'a>(cb: &'a CombinedBase, objs: &'a BTreeSet<Obj>, evidence: &[PAtom]) -> Result<Plan<'a>> {
    // Kahn's algorithm, smallest object first
    let mut pending: BTreeMap<&Obj, usize> = BTreeMap::new();
    let mut children: BTreeMap<&Obj, Vec<&Obj>> = BTreeMap::new();
    for o in objs {
        let e = cb.entries.get(o).ok_or_else(|| crate::relevance::no_table(o))?;
        for p in &e.parents {
            if !objs.contains(p) {
                return Err(Error::Invalid(format!("parent {} of {} is outside the enumerated set", p, o)));
            }
            children.entry(p).or_default().push(o);
        }
        pending.insert(o, e.parents.len());
    }
    let mut ready: BTreeSet<&Obj> = pending.iter().filter(|(_, &n)| n == 0).map(|(&o, _)| o).collect();
    let mut order = Vec::with_capacity(objs.len());
    while let Some(o) = ready.pop_first() {
        order.push(o);
        for c in children.get(o).into_iter().flatten() {
            let n = pending.get_mut(c).unwrap();
            *n -= 1;
            if *n == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != objs.len() {
        return Err(Error::Invalid("influence graph is cyclic".into()));
    }
    let pos: BTreeMap<&Obj, usize> = order.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let mut parents = Vec::with_capacity(order.len());
    let mut tables = Vec::with_capacity(order.len());
    for o in &order {
        let e = &cb.entries[*o];
        parents.push(e.parents.iter().map(|p| pos[p]).collect());
        tables.push(e.table().ok_or_else(|| Error::MissingCpt { object: o.to_string(), detail: "incomplete table".into() })?);
    }
    let ev: BTreeMap<&Obj, usize> = evidence.iter().map(|a| (&a.obj, a.value)).collect();
    let allowed = order.iter().map(|o| ev.get(o).copied()).collect();
    Ok(Plan { order, parents, tables, allowed })
}

struct Walker<'p, 'a, F> {
    plan: &'p Plan<'a>,
    values: Vec<usize>,
    models: usize,
    visited: usize,
    emit: F,
}

impl<F: FnMut(&[usize], f64)> Walker<'_, '_, F> {
    fn walk(&mut self, k: usize, mass: f64) -> Result<()> {
        if k == self.plan.order.len() {
            self.models += 1;
            if self.models > ENUMERATION_LIMIT {
                return Err(Error::EnumerationGuard { limit: ENUMERATION_LIMIT });
            }
            (self.emit)(&self.values, mass);
            return Ok(());
        }
        self.visited += 1;
        if self.visited > 4 * ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard { limit: ENUMERATION_LIMIT });
        }
        let card = self.plan.tables[k][0].len();
        let row = self.plan.parents[k].iter().fold(0, |acc, &p| acc * self.plan.tables[p][0].len() + self.values[p]);
        let range = match self.plan.allowed[k] {
            Some(v) => v..v + 1,
            None => 0..card,
        };
        for v in range {
            let p = self.plan.tables[k][row][v];
            if p > 0.0 {
                self.values[k] = v;
                self.walk(k + 1, mass * p)?;
            }
        }
        Ok(())
    }
}

/// Calls `emit` on every positive-mass model of `objs` that agrees with
/// `evidence`. Returns the objects in the order used for the assignments.
fn fold_models<'a>(
    cb: &'a CombinedBase,
    objs: &'a BTreeSet<Obj>,
    evidence: &[PAtom],
    emit: impl FnMut(&[usize], f64),
) -> Result<Vec<Obj>> {
    let plan = plan(cb, objs, evidence)?;
    walk_plan(&plan, emit)?;
    Ok(plan.order.iter().map(|&o| o.clone()).collect())
}

fn walk_plan(plan: &Plan<'_>, emit: impl FnMut(&[usize], f64)) -> Result<()> {
    Walker { plan, values: vec![0; plan.order.len()], models: 0, visited: 0, emit }.walk(0, 1.0)
}

fn materialize(kb: &KnowledgeBase, cb: &CombinedBase, objs: &BTreeSet<Obj>, evidence: &[PAtom]) -> Result<JointDistribution> {
    let mut models = Vec::new();
    let order = fold_models(cb, objs, evidence, |a, p| models.push((PossibleModel { assignment: a.to_vec() }, p)))?;
    let values = order.iter().map(|o| kb.values(&o.pred).to_vec()).collect();
    Ok(JointDistribution { objs: order, values, models })
}

/// The distribution the combined base induces on the models of the
/// relevant atom set: the product of each object's table entry.
pub fn enumerate_joint(kb: &KnowledgeBase, cb: &CombinedBase, ras: &RelevantAtomSet) -> Result<JointDistribution> {
    materialize(kb, cb, &ras.objs, &[])
}

/// The joint restricted to the models where `evidence` holds; masses are
/// not renormalized, so they sum to `P(evidence)`.
pub fn enumerate_consistent(
    kb: &KnowledgeBase,
    cb: &CombinedBase,
    ras: &RelevantAtomSet,
    evidence: &[PAtom],
) -> Result<JointDistribution> {
    materialize(kb, cb, &ras.objs, evidence)
}

impl JointDistribution {
    pub fn position(&self, obj: &Obj) -> Option<usize> {
        self.objs.iter().position(|o| o == obj)
    }

    pub fn total(&self) -> f64 {
        self.models.iter().map(|(_, p)| p).sum()
    }

    fn holds(&self, model: &PossibleModel, atoms: &[(usize, usize)]) -> bool {
        atoms.iter().all(|&(k, v)| model.assignment[k] == v)
    }

    fn positions(&self, atoms: &[PAtom]) -> Result<Vec<(usize, usize)>> {
        atoms
            .iter()
            .map(|a| self.position(&a.obj).map(|k| (k, a.value)).ok_or_else(|| Error::UnknownEvidenceObject(a.obj.to_string())))
            .collect()
    }

    /// Mass of the models where every atom holds.
    pub fn probability(&self, atoms: &[PAtom]) -> Result<f64> {
        let at = self.positions(atoms)?;
        Ok(self.models.iter().filter(|(m, _)| self.holds(m, &at)).map(|(_, p)| p).sum())
    }

    /// `P(obj = v | evidence)` for every value, as the ratio of summed
    /// model masses.
    pub fn conditional(&self, obj: &Obj, evidence: &[PAtom]) -> Result<PosteriorVector> {
        let at = self.positions(evidence)?;
        let k = self.position(obj).ok_or_else(|| Error::Invalid(format!("{} is not an enumerated object", obj)))?;
        let mut joint = vec![0.0; self.values[k].len()];
        for (m, p) in &self.models {
            if self.holds(m, &at) {
                joint[m.assignment[k]] += p;
            }
        }
        let pe: f64 = joint.iter().sum();
        if pe.is_nan() || pe < IMPOSSIBLE_EVIDENCE {
            return Err(Error::ImpossibleEvidence);
        }
        Ok(PosteriorVector { obj: obj.clone(), values: self.values[k].clone(), probabilities: joint.iter().map(|p| p / pe).collect() })
    }

    /// `|P(cons, ante) - alpha * P(ante)|` for a ground sentence.
    pub fn sentence_violation(&self, s: &GroundSentence) -> Result<f64> {
        let both: Vec<PAtom> = std::iter::once(s.cons.clone()).chain(s.ante.iter().cloned()).collect();
        Ok((self.probability(&both)? - s.alpha * self.probability(&s.ante)?).abs())
    }

    /// Marginal table over `objs`, keyed by their joint values.
    pub fn marginal(&self, objs: &[Obj]) -> Result<BTreeMap<Vec<usize>, f64>> {
        let ks: Vec<usize> = objs
            .iter()
            .map(|o| self.position(o).ok_or_else(|| Error::Invalid(format!("{} is not an enumerated object", o))))
            .collect::<Result<_>>()?;
        let mut out = BTreeMap::new();
        for (m, p) in &self.models {
            *out.entry(ks.iter().map(|&k| m.assignment[k]).collect()).or_insert(0.0) += p;
        }
        Ok(out)
    }

    /// Largest `|P(x | y, z) - P(x | z)|` over the joint values of `x`, `y`
    /// and `z` where `P(y, z) > 0`. Zero exactly when `x` is independent of
    /// `y` given `z`.
    pub fn independence_gap(&self, x: &[Obj], y: &[Obj], z: &[Obj]) -> Result<f64> {
        let all: Vec<Obj> = x.iter().chain(y).chain(z).cloned().collect();
        let xyz = self.marginal(&all)?;
        let (nx, ny) = (x.len(), y.len());
        let mut yz: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut xz: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut zm: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (key, p) in &xyz {
            *yz.entry(key[nx..].to_vec()).or_insert(0.0) += p;
            *xz.entry(key[..nx].iter().chain(&key[nx + ny..]).copied().collect()).or_insert(0.0) += p;
            *zm.entry(key[nx + ny..].to_vec()).or_insert(0.0) += p;
        }
        let cards: Vec<usize> = x.iter().map(|o| self.values[self.position(o).unwrap()].len()).collect();
        let mut gap: f64 = 0.0;
        for (yzk, &pyz) in &yz {
            if pyz <= 0.0 {
                continue;
            }
            let zk = &yzk[ny..];
            let pz = zm[zk];
            let mut xv = vec![0; nx];
            loop {
                let key: Vec<usize> = xv.iter().chain(yzk).copied().collect();
                let lhs = xyz.get(&key).copied().unwrap_or(0.0) / pyz;
                let xzk: Vec<usize> = xv.iter().chain(zk).copied().collect();
                let rhs = xz.get(&xzk).copied().unwrap_or(0.0) / pz;
                gap = gap.max((lhs - rhs).abs());
                let mut i = nx;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    xv[i] += 1;
                    if xv[i] < cards[i] {
                        break;
                    }
                    xv[i] = 0;
                }
                if xv.iter().all(|&v| v == 0) {
                    break;
                }
            }
        }
        Ok(gap)
    }
}

/// `roots` and their ancestors in the combined base, as a relevant atom
/// set that can be enumerated on its own.
pub fn ancestral_set(cb: &CombinedBase, ras: &RelevantAtomSet, roots: impl IntoIterator<Item = Obj>) -> Result<RelevantAtomSet> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<Obj> = roots.into_iter().collect();
    while let Some(o) = stack.pop() {
        let e = cb.entries.get(&o).ok_or_else(|| Error::UnknownEvidenceObject(o.to_string()))?;
        if seen.insert(o) {
            stack.extend(e.parents.iter().cloned());
        }
    }
    Ok(RelevantAtomSet { objs: seen, bounds: ras.bounds })
}

/// Posteriors by enumeration. With `ancestral` set, only the ancestors of
/// the query instances and evidence in the combined base are enumerated;
/// otherwise the whole relevant atom set is. Instances outside the relevant
/// atom set have no answer and are left out.
pub fn oracle_answer(kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry, ancestral: bool) -> Result<QueryAnswer> {
    let rkb = relevant_kb(kb, session, registry)?;
    let instances: Vec<_> = query_instances(kb, session)?.into_iter().filter(|q| rkb.ras.contains(&q.obj)).collect();
    let objs: BTreeSet<Obj> = if ancestral {
        let roots = instances.iter().map(|q| q.obj.clone()).chain(session.evidence.iter().map(|a| a.obj.clone()));
        ancestral_set(&rkb.crpb, &rkb.ras, roots)?.objs
    } else {
        rkb.ras.objs.clone()
    };
    for a in &session.evidence {
        if !objs.contains(&a.obj) {
            return Err(Error::UnknownEvidenceObject(a.obj.to_string()));
        }
    }
    // accumulate P(q = v, e) for every instance in one pass
    let plan = plan(&rkb.crpb, &objs, &session.evidence)?;
    let positions: Vec<usize> =
        instances.iter().map(|q| plan.order.iter().position(|o| **o == q.obj).expect("instance enumerated")).collect();
    let mut sums: Vec<Vec<f64>> = instances.iter().map(|q| vec![0.0; kb.card(&q.obj)]).collect();
    let mut pe = 0.0;
    walk_plan(&plan, |a, p| {
        pe += p;
        for (s, &k) in sums.iter_mut().zip(&positions) {
            s[a[k]] += p;
        }
    })?;
    if pe.is_nan() || pe < IMPOSSIBLE_EVIDENCE {
        return Err(Error::ImpossibleEvidence);
    }
    let out = instances
        .into_iter()
        .zip(sums)
        .map(|(q, s)| AnsweredInstance {
            posterior: PosteriorVector {
                values: kb.values(&q.obj.pred).to_vec(),
                probabilities: s.iter().map(|p| p / pe).collect(),
                obj: q.obj,
            },
            bindings: q.bindings,
        })
        .collect();
    Ok(QueryAnswer { instances: out })
}

/// Empirical posteriors from rejection sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleEstimate {
    pub posteriors: Vec<PosteriorVector>,
    pub accepted: usize,
}

/// Ancestral sampling of `n` worlds in topological order with a ChaCha
/// generator seeded by `seed`; worlds that disagree with the evidence are
/// rejected.
pub fn forward_sample(net: &BayesNet, evidence: &[PAtom], targets: &[Obj], n: usize, seed: u64) -> Result<SampleEstimate> {
    let ev: Vec<(usize, usize)> = evidence
        .iter()
        .map(|a| net.index_of(&a.obj).map(|i| (i, a.value)).ok_or_else(|| Error::UnknownEvidenceObject(a.obj.to_string())))
        .collect::<Result<_>>()?;
    let ts: Vec<usize> = targets
        .iter()
        .map(|o| net.index_of(o).ok_or_else(|| Error::Invalid(format!("{} is not a network node", o))))
        .collect::<Result<_>>()?;
    let order = net.topological_order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<Vec<usize>> = ts.iter().map(|&t| vec![0; net.nodes[t].card()]).collect();
    let mut world = vec![0; net.len()];
    let mut accepted = 0;
    for _ in 0..n {
        for &i in &order {
            let row = net.row(i, &world);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut v = row.len() - 1;
            for (k, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    v = k;
                    break;
                }
            }
            world[i] = v;
        }
        if ev.iter().all(|&(i, v)| world[i] == v) {
            accepted += 1;
            for (c, &t) in counts.iter_mut().zip(&ts) {
                c[world[t]] += 1;
            }
        }
    }
    if accepted == 0 {
        return Err(Error::NoAcceptedSamples);
    }
    let posteriors = ts
        .iter()
        .zip(counts)
        .map(|(&t, c)| PosteriorVector {
            obj: net.nodes[t].obj.clone(),
            values: net.nodes[t].values.clone(),
            probabilities: c.iter().map(|&k| k as f64 / accepted as f64).collect(),
        })
        .collect();
    Ok(SampleEstimate { posteriors, accepted })
}

/// Whether `x` and `y` are d-separated by `z` in `net`, decided on the
/// moralized graph of the ancestors of `x`, `y` and `z`.
pub fn d_separated(net: &BayesNet, x: &BTreeSet<usize>, y: &BTreeSet<usize>, z: &BTreeSet<usize>) -> bool {
    let keep = net.ancestors(x.iter().chain(y).chain(z).copied());
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = keep.iter().map(|&i| (i, BTreeSet::new())).collect();
    for &i in &keep {
        let ps = &net.nodes[i].parents;
        for &p in ps {
            adj.get_mut(&i).unwrap().insert(p);
            adj.get_mut(&p).unwrap().insert(i);
        }
        for &a in ps {
            for &b in ps {
                if a != b {
                    adj.get_mut(&a).unwrap().insert(b);
                }
            }
        }
    }
    let mut seen: BTreeSet<usize> = x.iter().copied().filter(|i| !z.contains(i)).collect();
    let mut stack: Vec<usize> = seen.iter().copied().collect();
    while let Some(i) = stack.pop() {
        if y.contains(&i) {
            return false;
        }
        for &j in &adj[&i] {
            if !z.contains(&j) && seen.insert(j) {
                stack.push(j);
            }
        }
    }
    true
}
