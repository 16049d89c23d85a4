use std::collections::BTreeMap;
use std::fmt;

use crate::lang::{Atom, Const, Name, Term};

/// An idempotent mapping from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Substitution(BTreeMap<Name, Term>);

/// `t + k`; fails for a symbol with a nonzero offset.
fn shift(t: &Term, k: i64) -> Option<Term> {
    match t {
        _ if k == 0 => Some(t.clone()),
        Term::Int(n) => Some(Term::Int(n + k)),
        Term::Var(v) => Some(Term::Offset(v.clone(), k)),
        Term::Offset(v, j) => Some(Term::shifted_var(v.clone(), j + k)),
        Term::Sym(_) => None,
    }
}

impl Substitution {
    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Term)> {
        self.0.iter()
    }

    /// Binds an unbound variable to a constant. Used by grounding, where
    /// variables are fresh so idempotence is preserved.
    pub fn with_const(&self, var: &Name, c: &Const) -> Substitution {
        let mut s = self.clone();
        s.0.insert(var.clone(), Term::from_const(c));
        s
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.0.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Offset(v, k) => match self.0.get(v) {
                Some(b) => shift(b, *k).unwrap_or_else(|| t.clone()),
                None => t.clone(),
            },
            _ => t.clone(),
        }
    }

    /// `self` followed by `other`.
    pub fn compose(&self, other: &Substitution) -> Substitution {
        let mut out: BTreeMap<Name, Term> = self.0.iter().map(|(v, t)| (v.clone(), other.apply_term(t))).collect();
        for (v, t) in &other.0 {
            out.entry(v.clone()).or_insert_with(|| t.clone());
        }
        Substitution(out)
    }

    /// Keeps only the bindings of `vars`.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Name>) -> Substitution {
        Substitution(vars.into_iter().filter_map(|v| self.0.get(v).map(|t| (v.clone(), t.clone()))).collect())
    }

    fn bind(&mut self, var: &Name, offset: i64, t: &Term) -> Option<()> {
        // var + offset = t
        if t.var() == Some(var) {
            return None;
        }
        let value = shift(t, -offset)?;
        let single = Substitution(BTreeMap::from([(var.clone(), value.clone())]));
        for term in self.0.values_mut() {
            *term = single.apply_term(term);
        }
        self.0.insert(var.clone(), value);
        Some(())
    }

    fn unify_terms(&mut self, x: &Term, y: &Term) -> Option<()> {
        let (x, y) = (self.apply_term(x), self.apply_term(y));
        if x == y {
            return Some(());
        }
        match (&x, &y) {
            (Term::Var(v) | Term::Offset(v, _), _) => self.bind(v, x.offset(), &y),
            (_, Term::Var(v) | Term::Offset(v, _)) => self.bind(v, y.offset(), &x),
            _ => None,
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}={}", v, t)?;
        }
        f.write_str("}")
    }
}

/// Most general unifier of two atoms. Time offsets are solved
/// arithmetically, so `t-1` unifies with `2` by `t = 3`.
pub fn unify(a: &Atom, b: &Atom) -> Option<Substitution> {
    if a.pred != b.pred || a.args.len() != b.args.len() {
        return None;
    }
    let mut s = Substitution::default();
    for (x, y) in a.args.iter().zip(&b.args) {
        s.unify_terms(x, y)?;
    }
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::name;
    use proptest::prelude::*;

    fn v(s: &str) -> Term {
        Term::Var(name(s))
    }
    fn c(s: &str) -> Term {
        Term::Sym(name(s))
    }

    #[test]
    fn binds_constants() {
        let a = Atom::new("rhythm", vec![v("X"), v("t"), c("nsr")]);
        let b = Atom::new("rhythm", vec![c("john"), Term::Int(2), c("nsr")]);
        assert_eq!(unify(&a, &b).unwrap().to_string(), "{X=john, t=2}");
    }

    #[test]
    fn inverts_offsets() {
        let a = Atom::new("rhythm", vec![v("X"), Term::Offset(name("t"), -1), c("nsr")]);
        let b = Atom::new("rhythm", vec![c("john"), Term::Int(1), c("nsr")]);
        assert_eq!(unify(&a, &b).unwrap().to_string(), "{X=john, t=2}");
    }

    #[test]
    fn clashing_constants_fail() {
        let a = Atom::new("cbf", vec![v("X"), Term::Int(0), c("present")]);
        let b = Atom::new("cbf", vec![v("X"), Term::Int(1), c("present")]);
        assert!(unify(&a, &b).is_none());
    }

    #[test]
    fn occurs_check_on_offsets() {
        let a = Atom::new("p", vec![v("t")]);
        let b = Atom::new("p", vec![Term::Offset(name("t"), 1)]);
        assert!(unify(&a, &b).is_none());
        let sym = Atom::new("p", vec![c("john")]);
        assert!(unify(&b, &sym).is_none());
    }

    #[test]
    fn chains_variables_through_offsets() {
        let a = Atom::new("p", vec![Term::Offset(name("s"), 2), v("s")]);
        let b = Atom::new("p", vec![v("t"), Term::Int(5)]);
        let s = unify(&a, &b).unwrap();
        assert_eq!(a.apply(&s), b.apply(&s));
        assert_eq!(s.apply_term(&v("t")), Term::Int(7));
    }

    fn term_strategy() -> impl Strategy<Value = Term> {
        prop_oneof![
            (0i64..3).prop_map(Term::Int),
            prop::sample::select(vec!["a", "b"]).prop_map(|s| Term::Var(name(s))),
            (prop::sample::select(vec!["a", "b"]), -2i64..=2).prop_map(|(s, k)| Term::shifted_var(name(s), k)),
        ]
    }

    fn ground_assignments() -> Vec<Substitution> {
        let mut out = Vec::new();
        for x in -4..8 {
            for y in -4..8 {
                out.push(Substitution(BTreeMap::from([
                    (name("a"), Term::Int(x)),
                    (name("b"), Term::Int(y)),
                ])));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn unifier_is_most_general(xs in prop::collection::vec(term_strategy(), 2), ys in prop::collection::vec(term_strategy(), 2)) {
            let a = Atom::new("p", xs);
            let b = Atom::new("p", ys);
            let mgu = unify(&a, &b);
            for theta in ground_assignments() {
                let unifies = a.apply(&theta) == b.apply(&theta);
                match &mgu {
                    None => prop_assert!(!unifies),
                    Some(sigma) => {
                        prop_assert_eq!(a.apply(sigma), b.apply(sigma));
                        if unifies {
                            // theta factors through sigma: theta = sigma ; theta
                            for var in ["a", "b"] {
                                let t = Term::Var(name(var));
                                prop_assert_eq!(theta.apply_term(&sigma.apply_term(&t)), theta.apply_term(&t));
                            }
                        }
                    }
                }
            }
            if let Some(sigma) = &mgu {
                // idempotent
                prop_assert_eq!(sigma.compose(sigma), sigma.clone());
            }
        }
    }
}
