//! Whole-KB validation in the order the command line reports it.

use crate::combining::RuleRegistry;
use crate::error::{Error, Result};
use crate::lang::{KnowledgeBase, Session};
use crate::logic::{check_acyclic, check_allowed};
use crate::relevance::{
    check_complete_quantification, check_consistency, combine_rpb, compute_ras, discharge_contexts, relevant_base,
};

/// Context-base acyclicity, allowedness, then influence acyclicity,
/// complete quantification and row sums over the session's relevant base.
/// Returns the first failure.
pub fn check_kb(kb: &KnowledgeBase, session: &Session, registry: &RuleRegistry) -> Result<()> {
    if let Some(cycle) = check_acyclic(kb, session.bounds)? {
        return Err(Error::Cycle(cycle.iter().map(|a| a.to_string()).collect()));
    }
    let violations = check_allowed(kb);
    if !violations.is_empty() {
        return Err(Error::NotAllowed(violations));
    }
    let discharged = discharge_contexts(kb, session)?;
    let ras = compute_ras(&discharged, session);
    let crpb = combine_rpb(kb, &relevant_base(&discharged, &ras), registry)?;
    let consistency = check_consistency(kb, &crpb);
    if let Some(e) = consistency.iter().find(|e| matches!(e, Error::Cycle(_))) {
        return Err(e.clone());
    }
    if let Some(e) = check_complete_quantification(kb, &crpb, &ras).into_iter().next() {
        return Err(e);
    }
    match consistency.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
