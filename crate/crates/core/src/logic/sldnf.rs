use std::collections::BTreeSet;

use super::ground::GroundedContextProgram;
use super::Substitution;
use crate::error::{Error, Result};
use crate::lang::{Literal, Name};

#[derive(Clone, Debug)]
struct Goal {
    literal: Literal,
    depth: usize,
}

fn render(goals: &[Goal], s: &Substitution) -> String {
    let lits: Vec<String> = goals
        .iter()
        .map(|g| Literal { positive: g.literal.positive, atom: g.literal.atom.apply(s) }.to_string())
        .collect();
    lits.join(", ")
}

impl GroundedContextProgram {
    /// Runs an SLDNF derivation for `goals` under `s`, calling `emit` on each
    /// computed answer. `emit` returns `false` to stop the search. Returns
    /// whether the search was stopped.
    fn derive(&self, goals: &[Goal], s: &Substitution, emit: &mut dyn FnMut(&Substitution) -> bool) -> Result<bool> {
        if goals.is_empty() {
            return Ok(!emit(s));
        }
        // leftmost positive literal, or leftmost negative literal once ground
        let selected = goals
            .iter()
            .position(|g| g.literal.positive || g.literal.atom.apply(s).is_ground())
            .ok_or_else(|| Error::Floundering { goal: render(goals, s) })?;
        let goal = &goals[selected];
        if goal.depth > self.depth_bound() {
            return Err(Error::DepthExceeded { goal: render(goals, s), bound: self.depth_bound() });
        }
        let rest = || goals[..selected].iter().chain(&goals[selected + 1..]).cloned();
        let atom = goal.literal.atom.apply(s);

        if !goal.literal.positive {
            let positive = Goal { literal: Literal::pos(atom), depth: goal.depth };
            let proved = self.derive(&[positive], s, &mut |_| false)?;
            if proved {
                return Ok(false);
            }
            let remaining: Vec<Goal> = rest().collect();
            return self.derive(&remaining, s, emit);
        }

        for (head, theta) in self.candidates(&atom) {
            let next = s.compose(&theta);
            if self.facts.contains(head) {
                let remaining: Vec<Goal> = rest().collect();
                if self.derive(&remaining, &next, emit)? {
                    return Ok(true);
                }
            }
            for body in self.clauses.get(head).into_iter().flatten() {
                let mut remaining: Vec<Goal> = body
                    .iter()
                    .map(|l| Goal {
                        literal: Literal { positive: l.positive, atom: l.atom.to_atom() },
                        depth: goal.depth + 1,
                    })
                    .collect();
                remaining.extend(rest());
                if self.derive(&remaining, &next, emit)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    /// All answers to a conjunctive goal, restricted to the goal's variables,
    /// sorted and duplicate-free. A ground goal that succeeds yields one
    /// empty substitution.
    pub fn solve(&self, goal: &[Literal]) -> Result<Vec<Substitution>> {
        let vars: BTreeSet<Name> = goal.iter().flat_map(|l| l.atom.vars().cloned()).collect();
        let goals: Vec<Goal> = goal.iter().map(|l| Goal { literal: l.clone(), depth: 0 }).collect();
        let mut answers = BTreeSet::new();
        self.derive(&goals, &Substitution::default(), &mut |s| {
            answers.insert(s.restrict(vars.iter()));
            true
        })?;
        Ok(answers.into_iter().collect())
    }

    /// Whether the goal has at least one SLDNF refutation.
    pub fn holds(&self, goal: &[Literal]) -> Result<bool> {
        let goals: Vec<Goal> = goal.iter().map(|l| Goal { literal: l.clone(), depth: 0 }).collect();
        self.derive(&goals, &Substitution::default(), &mut |_| false)
    }
}
