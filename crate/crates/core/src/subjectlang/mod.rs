//! The subject mini-language: parsing, lowering, and concrete execution.

pub mod ast;
pub mod compile;
pub mod concrete;
pub mod manifest;
mod parser;

use indexmap::IndexMap;
use thiserror::Error;

pub use ast::{FunctionDef, GlobalDef};
pub use compile::{Compiled, Op, Slot};
pub use concrete::{ParseVerdict, DEFAULT_STEP_BUDGET};
pub use manifest::{Manifest, Subject, TokenSink, TokenizerSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubjectError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unresolved name `{name}` in `{func}` at line {line}")]
    Unresolved {
        name: String,
        func: String,
        line: usize,
    },
    #[error("`{name}` expects {expected} arguments, found {found} (line {line})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("duplicate definition of `{0}`")]
    Duplicate(String),
    #[error("no function named `{0}`")]
    NoSuchFunction(String),
    #[error("no global scalar named `{0}`")]
    NoSuchGlobal(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct SubjectProgram {
    pub functions: IndexMap<String, FunctionDef>,
    pub globals: Vec<GlobalDef>,
    pub entry: String,
    pub tokenizer: Option<String>,
    pub compiled: Compiled,
}

/// One row of the loop table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopRow {
    pub function: String,
    pub loop_id: u32,
    pub header_stmt: u32,
}

/// Parses and lowers mini-language source. The entry defaults to `main`
/// when present, otherwise to the first function.
pub fn parse_subject(src: &str) -> Result<SubjectProgram, SubjectError> {
    let parsed = parser::parse(src)?;
    let compiled = compile::compile(&parsed.globals, &parsed.functions)?;
    let entry = parsed
        .functions
        .iter()
        .find(|f| f.name == "main")
        .or(parsed.functions.first())
        .map(|f| f.name.clone())
        .ok_or_else(|| SubjectError::NoSuchFunction("main".into()))?;
    Ok(SubjectProgram {
        functions: parsed
            .functions
            .into_iter()
            .map(|f| (f.name.clone(), f))
            .collect(),
        globals: parsed.globals,
        entry,
        tokenizer: None,
        compiled,
    })
}

impl SubjectProgram {
    pub fn function_index(&self, name: &str) -> Result<usize, SubjectError> {
        self.compiled
            .func_index(name)
            .ok_or_else(|| SubjectError::NoSuchFunction(name.to_string()))
    }

    pub fn global_slot(&self, name: &str) -> Result<u16, SubjectError> {
        self.compiled
            .global_scalar(name)
            .ok_or_else(|| SubjectError::NoSuchGlobal(name.to_string()))
    }

    pub fn set_entry(&mut self, name: &str) -> Result<(), SubjectError> {
        self.function_index(name)?;
        self.entry = name.to_string();
        Ok(())
    }

    pub fn set_tokenizer(&mut self, name: &str) -> Result<(), SubjectError> {
        self.function_index(name)?;
        self.tokenizer = Some(name.to_string());
        Ok(())
    }

    pub fn entry_index(&self) -> usize {
        self.compiled
            .func_index(&self.entry)
            .expect("entry validated at load")
    }

    pub fn list_loops(&self) -> Vec<LoopRow> {
        let mut rows: Vec<LoopRow> = self
            .functions
            .values()
            .flat_map(|f| {
                f.loops.iter().map(|l| LoopRow {
                    function: f.name.clone(),
                    loop_id: l.loop_id,
                    header_stmt: l.header_stmt,
                })
            })
            .collect();
        rows.sort_by_key(|r| r.loop_id);
        rows
    }

    /// Runs the entry function on `input` with the default step budget.
    pub fn run_concrete(&self, input: &[u8]) -> ParseVerdict {
        self.run_concrete_with_budget(input, DEFAULT_STEP_BUDGET)
    }

    pub fn run_concrete_with_budget(&self, input: &[u8], budget: u64) -> ParseVerdict {
        concrete::run_function(self, self.entry_index(), input, budget)
    }

    /// Name of the function that owns call site `site`, and the callee.
    pub fn call_site(&self, site: u32) -> Option<(&str, &str)> {
        for f in &self.compiled.functions {
            for op in &f.code {
                if let Op::Call { func, site: s, .. } = op {
                    if *s == site {
                        return Some((&f.name, &self.compiled.functions[*func].name));
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_subject("fn main(){ return 0; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert!(p.list_loops().is_empty());
        assert!(p.run_concrete(b"").accepted);
    }

    #[test]
    fn undefined_call_is_unresolved() {
        let err = parse_subject("fn main(){ foo(); return 0; }").unwrap_err();
        assert!(matches!(err, SubjectError::Unresolved { ref name, .. } if name == "foo"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_subject("fn main() {\n  return 0\n}").unwrap_err();
        match err {
            SubjectError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_control_flow_rejected() {
        assert!(parse_subject("fn main(){ goto x; }").is_err());
        assert!(parse_subject("fn main(){ break; }").is_err());
    }

    #[test]
    fn nested_loops_listed_outer_first() {
        let p = parse_subject(
            "fn main(){ var i = 0; while (i < 2) { var j = 0; while (j < 2) j = j + 1; i = i + 1; } return 0; }",
        )
        .unwrap();
        let rows = p.list_loops();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].loop_id, 1);
        assert_eq!(rows[1].loop_id, 2);
        assert!(rows[0].header_stmt < rows[1].header_stmt);
    }

    #[test]
    fn ids_stable_across_reloads() {
        let src = "fn f(x){ return x; } fn main(){ var a = f(1); while (a) { a = f(0); } return f(a); }";
        let a = parse_subject(src).unwrap();
        let b = parse_subject(src).unwrap();
        assert_eq!(a.functions, b.functions);
        assert_eq!(a.list_loops(), b.list_loops());
    }

    #[test]
    fn concrete_semantics() {
        let src = r#"
            global g;
            global gb[4];
            fn add(a, b) { return a + b; }
            fn main() {
                buf t[3];
                t[0] = input(0);
                gb[1] = add(t[0], 1);
                g = gb[1] / 0 + 7 % 0;
                if (g != 0) return 5;
                if (t[0] == 'a' && input(1) == '\n') return 0;
                if (input(9) == 0 || 0) return 2;
                return 1;
            }"#;
        let p = parse_subject(src).unwrap();
        assert!(p.run_concrete(b"a\n").accepted);
        let v = p.run_concrete(b"b");
        assert_eq!(v.status, Some(2));
        assert_eq!(v.positions_read, 1);
    }

    #[test]
    fn out_of_bounds_and_budget_are_flagged() {
        let p = parse_subject("fn main(){ buf b[2]; b[input(0)] = 1; return 0; }").unwrap();
        let v = p.run_concrete(b"\x05");
        assert!(!v.accepted);
        assert!(v.fault.is_some());
        let p = parse_subject("fn main(){ while (1) { } return 0; }").unwrap();
        let v = p.run_concrete(b"");
        assert!(!v.accepted && v.budget_exceeded);
    }
}
