//! Substitutions, unification, SLDNF resolution over the grounded context
//! program, and the static acyclicity and allowedness checks.

pub mod checks;
pub mod ground;
mod sldnf;
mod subst;

pub use checks::{check_acyclic, check_allowed, find_cycle};
pub use ground::{GroundLiteral, GroundedContextProgram};
pub use subst::{unify, Substitution};
