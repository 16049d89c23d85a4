//! The session-relevant part of a knowledge base: context discharge, the
//! relevant atom set, the relevant and combined probabilistic bases, and the
//! complete-quantification and consistency checks.

use std::collections::{BTreeMap, BTreeSet};

use crate::combining::{CauseMechanism, RuleRegistry};
use crate::error::{Error, Result};
use crate::lang::{variable_ranges, Bounds, KnowledgeBase, Literal, Name, Obj, PAtom, ProbSentence, Session};
use crate::logic::{find_cycle, ground::enumerate, GroundedContextProgram, Substitution};

/// Row-sum tolerance for consistency.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A context-free ground sentence `P(cons | ante) = alpha`. `ante` is sorted,
/// duplicate-free and coherent.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundSentence {
    pub cons: PAtom,
    pub ante: Vec<PAtom>,
    pub alpha: f64,
}

impl GroundSentence {
    pub fn render(&self, kb: &KnowledgeBase) -> String {
        let mut s = format!("P({}", kb.render(&self.cons));
        if !self.ante.is_empty() {
            let ante: Vec<String> = self.ante.iter().map(|a| kb.render(a)).collect();
            s.push_str(" | ");
            s.push_str(&ante.join(", "));
        }
        s.push_str(&format!(") = {}", self.alpha));
        s
    }

    pub fn ante_objs(&self) -> impl Iterator<Item = &Obj> {
        self.ante.iter().map(|a| &a.obj)
    }
}

fn sort_sentences(v: &mut Vec<GroundSentence>) {
    v.sort_by(|a, b| (&a.cons, &a.ante).cmp(&(&b.cons, &b.ante)).then(a.alpha.total_cmp(&b.alpha)));
    v.dedup();
}

/// Grounds the consequent and antecedent variables of `s` (extending
/// `base`) and calls `f` for every instance whose consequent lies in
/// `bounds` and whose context is proved. Instances with an antecedent
/// outside the bounds are passed on unchecked; callers decide what to do
/// with those.
pub(crate) fn applicable_instances(
    kb: &KnowledgeBase,
    program: &GroundedContextProgram,
    s: &ProbSentence,
    base: &Substitution,
    bounds: Bounds,
    f: &mut dyn FnMut(GroundSentence) -> Result<()>,
) -> Result<()> {
    let prob_vars: BTreeSet<&Name> = std::iter::once(&s.cons).chain(&s.ante).flat_map(|a| a.vars()).collect();
    let domains = s.var_domains.iter().filter(|(v, _)| prob_vars.contains(v)).map(|(v, d)| (v.clone(), d.clone())).collect();
    let ranges = variable_ranges(kb, &domains, s.atoms(), bounds);
    enumerate(&ranges, base, &mut |theta| {
        let split = |a: &crate::lang::Atom| a.apply(theta).to_ground().and_then(|g| kb.split(&g));
        let Some(cons) = split(&s.cons) else { return Ok(()) };
        if !bounds.admits(cons.obj.time()) {
            return Ok(());
        }
        let mut ante = Vec::with_capacity(s.ante.len());
        for a in &s.ante {
            match split(a) {
                Some(p) => ante.push(p),
                None => return Ok(()),
            }
        }
        ante.sort();
        ante.dedup();
        if ante.windows(2).any(|w| w[0].obj == w[1].obj) {
            // incoherent antecedents condition on an impossible event
            return Ok(());
        }
        if !ante.iter().all(|a| bounds.admits(a.obj.time())) {
            // the context is undecided outside the bounds; the caller drops it
            return f(GroundSentence { cons, ante, alpha: s.alpha });
        }
        let context: Vec<Literal> =
            s.context.iter().map(|l| Literal { positive: l.positive, atom: l.atom.apply(theta) }).collect();
        if program.holds(&context)? {
            f(GroundSentence { cons, ante, alpha: s.alpha })?;
        }
        Ok(())
    })
}

/// Conditions the probabilistic base on the completed context: every
/// ground instance within the bounds whose context is proved, with the
/// context stripped. Sorted and duplicate-free.
pub fn discharge_contexts(kb: &KnowledgeBase, session: &Session) -> Result<Vec<GroundSentence>> {
    let program = GroundedContextProgram::new(kb, &session.context, session.bounds)?;
    let mut out = Vec::new();
    for s in &kb.pb {
        applicable_instances(kb, &program, s, &Substitution::default(), session.bounds, &mut |g| {
            if g.ante_objs().all(|o| session.bounds.admits(o.time())) {
                out.push(g);
            }
            Ok(())
        })?;
    }
    sort_sentences(&mut out);
    Ok(out)
}

/// The bounded relevant atom set. It is closed under extension, so it is
/// stored as the set of its objects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelevantAtomSet {
    pub objs: BTreeSet<Obj>,
    pub bounds: Bounds,
}

impl RelevantAtomSet {
    pub fn contains(&self, obj: &Obj) -> bool {
        self.objs.contains(obj)
    }

    pub fn contains_atom(&self, atom: &PAtom) -> bool {
        self.objs.contains(&atom.obj)
    }

    /// Every member atom: each object with each of its values.
    pub fn atoms(&self, kb: &KnowledgeBase) -> Vec<PAtom> {
        self.objs.iter().flat_map(|o| (0..kb.card(o)).map(move |value| PAtom { obj: o.clone(), value })).collect()
    }

    pub fn len(&self) -> usize {
        self.objs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objs.is_empty()
    }
}

/// Least fixpoint: evidence objects, plus the consequent of every sentence
/// whose antecedents are all relevant, restricted to the bounds.
pub fn compute_ras(sentences: &[GroundSentence], session: &Session) -> RelevantAtomSet {
    let bounds = session.bounds;
    let mut objs: BTreeSet<Obj> = session.evidence_objs().into_iter().filter(|o| bounds.admits(o.time())).collect();
    loop {
        let before = objs.len();
        for s in sentences {
            if !objs.contains(&s.cons.obj)
                && bounds.admits(s.cons.obj.time())
                && s.ante_objs().all(|o| objs.contains(o))
            {
                objs.insert(s.cons.obj.clone());
            }
        }
        if objs.len() == before {
            return RelevantAtomSet { objs, bounds };
        }
    }
}

/// Sentences whose consequent and antecedents are all relevant.
pub fn relevant_base(sentences: &[GroundSentence], ras: &RelevantAtomSet) -> Vec<GroundSentence> {
    sentences
        .iter()
        .filter(|s| ras.contains_atom(&s.cons) && s.ante.iter().all(|a| ras.contains_atom(a)))
        .cloned()
        .collect()
}

/// The combined conditional table of one object. Rows are indexed by the
/// parent assignment in mixed radix, first parent most significant; a cell
/// is `None` when no sentence (or combination) fills it.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedEntry {
    pub obj: Obj,
    pub card: usize,
    pub parents: Vec<Obj>,
    pub parent_cards: Vec<usize>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CombinedEntry {
    pub fn row_index(&self, assignment: &[usize]) -> usize {
        assignment.iter().zip(&self.parent_cards).fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn assignment(&self, mut row: usize) -> Vec<usize> {
        let mut out = vec![0; self.parent_cards.len()];
        for (slot, &c) in out.iter_mut().zip(&self.parent_cards).rev() {
            *slot = row % c;
            row /= c;
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(Option::is_some))
    }

    /// Number of table cells, `|VAL| * prod |VAL(parent)|`.
    pub fn cell_count(&self) -> usize {
        self.card * self.rows.len()
    }

    /// The complete table, or `None` if a cell is missing.
    pub fn table(&self) -> Option<Vec<Vec<f64>>> {
        self.rows.iter().map(|r| r.iter().copied().collect::<Option<Vec<f64>>>()).collect()
    }

    fn describe_row(&self, kb: &KnowledgeBase, row: usize) -> String {
        if self.parents.is_empty() {
            return "no parents".into();
        }
        let parts: Vec<String> = self
            .parents
            .iter()
            .zip(self.assignment(row))
            .map(|(p, v)| format!("{}={}", p, kb.value_name(p, v)))
            .collect();
        parts.join(", ")
    }
}

/// One object's sentences grouped by antecedent set, checking duplicates.
fn rule_groups<'a>(
    kb: &KnowledgeBase,
    obj: &Obj,
    sentences: impl Iterator<Item = &'a GroundSentence>,
) -> Result<BTreeMap<Vec<PAtom>, Vec<Option<f64>>>> {
    let card = kb.card(obj);
    let mut groups: BTreeMap<Vec<PAtom>, Vec<Option<f64>>> = BTreeMap::new();
    for s in sentences {
        let row = groups.entry(s.ante.clone()).or_insert_with(|| vec![None; card]);
        match row[s.cons.value] {
            Some(a) if a != s.alpha => {
                let ante: Vec<String> = s.ante.iter().map(|a| kb.render(a)).collect();
                return Err(Error::ConflictingSentences {
                    consequent: kb.render(&s.cons),
                    antecedents: ante.join(", "),
                    first: a,
                    second: s.alpha,
                });
            }
            _ => row[s.cons.value] = Some(s.alpha),
        }
    }
    Ok(groups)
}

/// Rows of one antecedent family keyed by the family's values.
type Family<'a> = BTreeMap<Vec<usize>, (&'a Vec<PAtom>, &'a Vec<Option<f64>>)>;

/// Builds the combined table of `obj` from the sentences with it as
/// consequent. For each full parent assignment, every family of rule groups
/// (groups sharing an antecedent object set) contributes the group matching
/// the assignment, if any. One contribution passes through as is; several
/// are fused by the predicate's combining rule and must each be complete.
pub fn combine_object<'a>(
    kb: &KnowledgeBase,
    registry: &RuleRegistry,
    obj: &Obj,
    sentences: impl Iterator<Item = &'a GroundSentence>,
) -> Result<CombinedEntry> {
    let groups = rule_groups(kb, obj, sentences)?;
    let card = kb.card(obj);
    let parents: Vec<Obj> = groups.keys().flatten().map(|a| a.obj.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let parent_cards: Vec<usize> = parents.iter().map(|p| kb.card(p)).collect();
    let position = |o: &Obj| parents.binary_search(o).expect("parent collected above");

    // family: positions of its objects -> (values at those positions -> row)
    let mut families: BTreeMap<Vec<usize>, Family> = BTreeMap::new();
    for (ante, row) in &groups {
        let positions: Vec<usize> = ante.iter().map(|a| position(&a.obj)).collect();
        let values: Vec<usize> = ante.iter().map(|a| a.value).collect();
        families.entry(positions).or_default().insert(values, (ante, row));
    }

    let decl = kb.combine_decl(&obj.pred);
    let rule = registry.for_decl(&decl)?;
    let values = kb.values(&obj.pred);
    let n_rows: usize = parent_cards.iter().product();
    let mut entry = CombinedEntry { obj: obj.clone(), card, parents: parents.clone(), parent_cards, rows: Vec::with_capacity(n_rows) };
    for r in 0..n_rows {
        let assignment = entry.assignment(r);
        let matched: Vec<(&Vec<PAtom>, &Vec<Option<f64>>)> = families
            .iter()
            .filter_map(|(positions, table)| {
                let key: Vec<usize> = positions.iter().map(|&i| assignment[i]).collect();
                table.get(&key).copied()
            })
            .collect();
        let row = match matched.as_slice() {
            [] => vec![None; card],
            [(_, row)] => (*row).clone(),
            several => {
                let complete: Option<Vec<CauseMechanism>> = several
                    .iter()
                    .map(|(ante, row)| {
                        row.iter().copied().collect::<Option<Vec<f64>>>().map(|distribution| CauseMechanism {
                            antecedents: (*ante).clone(),
                            distribution,
                        })
                    })
                    .collect();
                match complete {
                    Some(mechanisms) => rule.apply(obj, values, &decl.params, &mechanisms)?.into_iter().map(Some).collect(),
                    None => vec![None; card],
                }
            }
        };
        entry.rows.push(row);
    }
    Ok(entry)
}

/// The combined relevant probabilistic base, one table per consequent
/// object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CombinedBase {
    pub entries: BTreeMap<Obj, CombinedEntry>,
}

impl CombinedBase {
    /// The filled cells as ground sentences.
    pub fn sentences(&self) -> Vec<GroundSentence> {
        let mut out = Vec::new();
        for e in self.entries.values() {
            for (r, row) in e.rows.iter().enumerate() {
                let ante: Vec<PAtom> = e
                    .parents
                    .iter()
                    .zip(e.assignment(r))
                    .map(|(p, value)| PAtom { obj: p.clone(), value })
                    .collect();
                for (value, cell) in row.iter().enumerate() {
                    if let Some(alpha) = cell {
                        out.push(GroundSentence { cons: PAtom { obj: e.obj.clone(), value }, ante: ante.clone(), alpha: *alpha });
                    }
                }
            }
        }
        out
    }

    /// Object-level influence edges, child to parents.
    pub fn influence_graph(&self) -> BTreeMap<Obj, BTreeSet<Obj>> {
        self.entries.iter().map(|(o, e)| (o.clone(), e.parents.iter().cloned().collect())).collect()
    }
}

/// Applies the combining rules to every consequent object of `rpb`.
pub fn combine_rpb(kb: &KnowledgeBase, rpb: &[GroundSentence], registry: &RuleRegistry) -> Result<CombinedBase> {
    let mut by_obj: BTreeMap<&Obj, Vec<&GroundSentence>> = BTreeMap::new();
    for s in rpb {
        by_obj.entry(&s.cons.obj).or_default().push(s);
    }
    let mut entries = BTreeMap::new();
    for (obj, sentences) in by_obj {
        entries.insert(obj.clone(), combine_object(kb, registry, obj, sentences.into_iter())?);
    }
    Ok(CombinedBase { entries })
}

/// Diagnostics for the unfilled cells of one table.
pub(crate) fn missing_cells(kb: &KnowledgeBase, e: &CombinedEntry) -> Vec<Error> {
    let mut out = Vec::new();
    for (r, row) in e.rows.iter().enumerate() {
        for (value, cell) in row.iter().enumerate() {
            if cell.is_none() {
                out.push(Error::MissingCpt {
                    object: e.obj.to_string(),
                    detail: format!("no probability for value {} given {}", kb.value_name(&e.obj, value), e.describe_row(kb, r)),
                });
            }
        }
    }
    out
}

/// Diagnostics for the complete rows of one table that do not sum to one.
pub(crate) fn row_sum_violations(kb: &KnowledgeBase, e: &CombinedEntry) -> Vec<Error> {
    let mut out = Vec::new();
    for (r, row) in e.rows.iter().enumerate() {
        let Some(cells) = row.iter().copied().collect::<Option<Vec<f64>>>() else { continue };
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(Error::Inconsistent {
                object: e.obj.to_string(),
                detail: format!("probabilities given {} sum to {}", e.describe_row(kb, r), sum),
            });
        }
    }
    out
}

pub(crate) fn no_table(obj: &Obj) -> Error {
    Error::MissingCpt { object: obj.to_string(), detail: "no sentence has it as consequent".into() }
}

/// Every relevant object must have a table, and every cell of every table
/// must be filled. Returns one diagnostic per missing cell.
pub fn check_complete_quantification(kb: &KnowledgeBase, cb: &CombinedBase, ras: &RelevantAtomSet) -> Vec<Error> {
    let mut out = Vec::new();
    for obj in &ras.objs {
        match cb.entries.get(obj) {
            Some(e) => out.extend(missing_cells(kb, e)),
            None => out.push(no_table(obj)),
        }
    }
    out
}

/// No object may influence itself, and every complete row must sum to one.
pub fn check_consistency(kb: &KnowledgeBase, cb: &CombinedBase) -> Vec<Error> {
    let mut out = Vec::new();
    if let Some(cycle) = find_cycle(&cb.influence_graph()) {
        out.push(Error::Cycle(cycle.iter().map(Obj::label).collect()));
    }
    for e in cb.entries.values() {
        out.extend(row_sum_violations(kb, e));
    }
    out
}

/// Everything the relevance stage produces for one session.
#[derive(Clone, Debug)]
pub struct RelevantKb {
    pub discharged: Vec<GroundSentence>,
    pub ras: RelevantAtomSet,
    pub rpb: Vec<GroundSentence>,
    pub crpb: CombinedBase,
}

/// Runs discharge, RAS, RPB and combination, then both checks; the first
/// failed check is returned as the error.
pub fn relevant_kb(kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry) -> Result<RelevantKb> {
    let discharged = discharge_contexts(kb, session)?;
    let ras = compute_ras(&discharged, session);
    let rpb = relevant_base(&discharged, &ras);
    let crpb = combine_rpb(kb, &rpb, registry)?;
    if let Some(e) = check_complete_quantification(kb, &crpb, &ras).into_iter().next() {
        return Err(e);
    }
    if let Some(e) = check_consistency(kb, &crpb).into_iter().next() {
        return Err(e);
    }
    Ok(RelevantKb { discharged, ras, rpb, crpb })
}
