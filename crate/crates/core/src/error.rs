use std::fmt;

use thiserror::Error;

/// Severity of a [`Diagnostic`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => f.write_str("error"),
            Severity::Warning => f.write_str("warning"),
        }
    }
}

/// A located message about some input text. Lines and columns are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn error(line: usize, col: usize, message: impl Into<String>) -> Self {
        Diagnostic { line, col, severity: Severity::Error, message: message.into() }
    }

    /// Renders as `file:line:col: severity: message`.
    pub fn render(&self, file: &str) -> String {
        format!("{}:{}:{}: {}: {}", file, self.line, self.col, self.severity, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.severity, self.message)
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Debug, Error)]
pub enum Error {
    #[error("{}", join_diagnostics(.0))]
    Syntax(Vec<Diagnostic>),

    #[error("incoherent evidence: {object} is given both {first} and {second}")]
    IncoherentEvidence { object: String, first: String, second: String },

    #[error("{atom} is timed outside the bounds [{from}, {to}]")]
    OutOfBounds { atom: String, from: i64, to: i64 },

    #[error("invalid bounds: from {from} is after to {to}")]
    InvalidBounds { from: i64, to: i64 },

    #[error("query {0} is not complete: its last argument must be a variable")]
    IncompleteQuery(String),

    #[error("SLDNF depth bound {bound} exceeded while proving {goal}")]
    DepthExceeded { goal: String, bound: usize },

    #[error("floundering: no selectable literal in goal {goal} (negative literals must be ground)")]
    Floundering { goal: String },

    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("knowledge base is not allowed:\n{}", .0.join("\n"))]
    NotAllowed(Vec<String>),

    #[error("conflicting sentences for {consequent} given {{{antecedents}}}: {first} vs {second}")]
    ConflictingSentences { consequent: String, antecedents: String, first: f64, second: f64 },

    #[error("combining rule {rule} failed on {object}: {reason}")]
    Combining { rule: String, object: String, reason: String },

    #[error("unknown combining rule {0}")]
    UnknownRule(String),

    #[error("combining rule {0} is already registered")]
    DuplicateRule(String),

    #[error("missing conditional probability for {object}: {detail}")]
    MissingCpt { object: String, detail: String },

    #[error("inconsistent distribution for {object}: {detail}")]
    Inconsistent { object: String, detail: String },

    #[error("{object} needs an ancestor timed outside [{from}, {to}] and has no in-bounds marginal")]
    OutOfBoundsAncestor { object: String, from: i64, to: i64 },

    #[error("evidence object {0} is not part of the network")]
    UnknownEvidenceObject(String),

    #[error("evidence has probability zero")]
    ImpossibleEvidence,

    #[error("enumeration guard exceeded: more than {limit} weighted states")]
    EnumerationGuard { limit: usize },

    #[error("no samples were consistent with the evidence")]
    NoAcceptedSamples,

    #[error("encodings disagree: max posterior deviation {delta:e}")]
    PosteriorMismatch { delta: f64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
