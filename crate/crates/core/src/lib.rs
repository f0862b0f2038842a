//! Grammar mining from recursive-descent parsers by bounded symbolic execution.

pub mod subjectlang;
pub mod symcore;
pub mod symexec;
pub mod consumption;
pub mod grammar;
pub mod inference;
pub mod tokens;
pub mod refine;
pub mod eval;
pub mod pipeline;
