//! Combining rules: merge several cause mechanisms for one consequent into a
//! single conditional distribution.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lang::{CombineDecl, Name, Obj, PAtom, ParamValue};

/// Tolerance for a mechanism distribution to count as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// One rule group's conditional distribution over the consequent's VAL,
/// given its antecedents.
#[derive(Clone, Debug, PartialEq)]
pub struct CauseMechanism {
    pub antecedents: Vec<PAtom>,
    pub distribution: Vec<f64>,
}

/// An algorithm that fuses mechanisms sharing a consequent. `values` is
/// VAL of the consequent in declaration order; `params` are the `combine`
/// parameters from the knowledge base.
pub trait CombiningRule: Send + Sync {
    fn name(&self) -> &str;

    fn apply(&self, obj: &Obj, values: &[Name], params: &[(Name, ParamValue)], mechanisms: &[CauseMechanism])
        -> Result<Vec<f64>>;
}

impl fmt::Debug for dyn CombiningRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CombiningRule({})", self.name())
    }
}

fn check_mechanisms(rule: &str, obj: &Obj, card: usize, mechanisms: &[CauseMechanism]) -> Result<()> {
    let fail = |reason: String| Error::Combining { rule: rule.to_string(), object: obj.to_string(), reason };
    if mechanisms.is_empty() {
        return Err(fail("no mechanisms".into()));
    }
    for m in mechanisms {
        if m.distribution.len() != card {
            return Err(fail(format!("mechanism has {} entries, VAL has {}", m.distribution.len(), card)));
        }
        let sum: f64 = m.distribution.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || m.distribution.iter().any(|p| *p < 0.0) {
            return Err(fail(format!("mechanism distribution {:?} is not normalized", m.distribution)));
        }
    }
    Ok(())
}

/// Noisy-max over distributions already laid out in the chosen value order:
/// `out[k] = prod_i F_i(k) - prod_i F_i(k-1)` with `F_i` the cumulative of
/// mechanism `i`.
pub fn noisy_max(distributions: &[&[f64]]) -> Vec<f64> {
    let card = distributions.first().map_or(0, |d| d.len());
    if distributions.len() == 1 {
        return distributions[0].to_vec();
    }
    let mut cumulative = vec![0.0; distributions.len()];
    let mut previous = 0.0;
    let mut out = Vec::with_capacity(card);
    for k in 0..card {
        for (c, d) in cumulative.iter_mut().zip(distributions) {
            *c += d[k];
        }
        let product: f64 = if k + 1 == card { 1.0 } else { cumulative.iter().product() };
        out.push(product - previous);
        previous = product;
    }
    out
}

/// Generalized noisy-OR as noisy-max over VAL order. The inactive state is
/// the first declared value unless a `distinguished` parameter names another.
#[derive(Debug, Default)]
pub struct NoisyMax;

impl CombiningRule for NoisyMax {
    fn name(&self) -> &str {
        "noisy_max"
    }

    fn apply(&self, obj: &Obj, values: &[Name], params: &[(Name, ParamValue)], mechanisms: &[CauseMechanism])
        -> Result<Vec<f64>> {
        check_mechanisms(self.name(), obj, values.len(), mechanisms)?;
        let distinguished = match params.iter().find(|(k, _)| &**k == "distinguished") {
            Some((_, ParamValue::Ident(v))) => values.iter().position(|x| x == v).ok_or_else(|| Error::Combining {
                rule: self.name().into(),
                object: obj.to_string(),
                reason: format!("distinguished value {} is not in VAL", v),
            })?,
            Some((_, other)) => {
                return Err(Error::Combining {
                    rule: self.name().into(),
                    object: obj.to_string(),
                    reason: format!("distinguished must name a value, got {}", other),
                })
            }
            None => 0,
        };
        let order: Vec<usize> = std::iter::once(distinguished).chain((0..values.len()).filter(|&i| i != distinguished)).collect();
        let permuted: Vec<Vec<f64>> =
            mechanisms.iter().map(|m| order.iter().map(|&i| m.distribution[i]).collect()).collect();
        let refs: Vec<&[f64]> = permuted.iter().map(|d| d.as_slice()).collect();
        let combined = noisy_max(&refs);
        let mut out = vec![0.0; values.len()];
        for (k, &i) in order.iter().enumerate() {
            out[i] = combined[k];
        }
        Ok(out)
    }
}

/// Accepts exactly one mechanism and passes it through.
#[derive(Debug, Default)]
pub struct SingleOnly;

impl CombiningRule for SingleOnly {
    fn name(&self) -> &str {
        "single_only"
    }

    fn apply(&self, obj: &Obj, values: &[Name], _: &[(Name, ParamValue)], mechanisms: &[CauseMechanism])
        -> Result<Vec<f64>> {
        check_mechanisms(self.name(), obj, values.len(), mechanisms)?;
        if mechanisms.len() > 1 {
            return Err(Error::Combining {
                rule: self.name().into(),
                object: obj.to_string(),
                reason: format!("{} mechanisms given, at most one allowed", mechanisms.len()),
            });
        }
        Ok(mechanisms[0].distribution.clone())
    }
}

/// Name-indexed combining rules.
#[derive(Clone, Debug)]
pub struct RuleRegistry {
    rules: BTreeMap<String, Arc<dyn CombiningRule>>,
}

impl Default for RuleRegistry {
    /// A registry holding the built-in `noisy_max` and `single_only`.
    fn default() -> Self {
        let mut r = RuleRegistry::empty();
        r.register(Arc::new(NoisyMax)).expect("fresh registry");
        r.register(Arc::new(SingleOnly)).expect("fresh registry");
        r
    }
}

impl RuleRegistry {
    pub fn empty() -> Self {
        RuleRegistry { rules: BTreeMap::new() }
    }

    pub fn register(&mut self, rule: Arc<dyn CombiningRule>) -> Result<Arc<dyn CombiningRule>> {
        let name = rule.name().to_string();
        if self.rules.contains_key(&name) {
            return Err(Error::DuplicateRule(name));
        }
        self.rules.insert(name, rule.clone());
        Ok(rule)
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<dyn CombiningRule>> {
        self.rules.get(name).cloned().ok_or_else(|| Error::UnknownRule(name.to_string()))
    }

    /// The rule a `combine` declaration refers to.
    pub fn for_decl(&self, decl: &CombineDecl) -> Result<Arc<dyn CombiningRule>> {
        self.resolve(&decl.rule)
    }
}
