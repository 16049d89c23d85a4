pub mod bench;
pub mod check;
pub mod combining;
pub mod error;
pub mod infer;
pub mod lang;
pub mod logic;
pub mod netbuild;
pub mod oracle;
pub mod relevance;

pub use error::{Error, Result};

/// The shipped cardiac arrest knowledge base.
pub const CARDIAC_KB: &str = include_str!("../data/cardiac.ckb");
/// The paint example: an action effect and persistence as context-indexed
/// sentences.
pub const PAINT_KB: &str = include_str!("../data/paint.ckb");
