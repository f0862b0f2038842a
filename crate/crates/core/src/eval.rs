//! Precision and recall of a mined grammar against a subject and a golden
//! grammar.

use serde::Serialize;

use crate::grammar::earley::EarleyParser;
use crate::grammar::{fuzz, FuzzConfig, Grammar};
use crate::subjectlang::SubjectProgram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mined-grammar inputs checked against the subject.
    pub precision_n: usize,
    /// Golden-grammar inputs accepted by the subject and checked against the
    /// mined grammar.
    pub recall_n: usize,
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub n: usize,
    pub seed: u64,
    pub max_depth: usize,
    pub step_budget: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n: 1000,
            seed: 0,
            max_depth: 12,
            step_budget: crate::subjectlang::DEFAULT_STEP_BUDGET,
        }
    }
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Fraction of unique inputs from `mined` that the subject accepts.
pub fn precision(mined: &Grammar, program: &SubjectProgram, config: &EvalConfig) -> (f64, usize) {
    let out = fuzz(
        mined,
        &FuzzConfig {
            count: config.n,
            max_depth: config.max_depth,
            seed: config.seed,
            ..Default::default()
        },
    );
    let hits = out
        .inputs
        .iter()
        .filter(|(i, _)| {
            let v = program.run_concrete_with_budget(i, config.step_budget);
            v.accepted && !v.budget_exceeded
        })
        .count();
    (fraction(hits, out.inputs.len()), out.inputs.len())
}

/// Fraction of subject-accepted golden inputs that `mined` parses.
pub fn recall(mined: &Grammar, golden: &Grammar, program: &SubjectProgram, config: &EvalConfig) -> (f64, usize) {
    let out = fuzz(
        golden,
        &FuzzConfig {
            count: config.n.saturating_mul(2),
            max_depth: config.max_depth,
            seed: config.seed.wrapping_add(1),
            ..Default::default()
        },
    );
    let valid: Vec<&Vec<u8>> = out
        .inputs
        .iter()
        .map(|(i, _)| i)
        .filter(|i| {
            let v = program.run_concrete_with_budget(i, config.step_budget);
            v.accepted && !v.budget_exceeded
        })
        .take(config.n)
        .collect();
    let parser = EarleyParser::new(mined);
    let hits = valid.iter().filter(|i| parser.accepts(i)).count();
    (fraction(hits, valid.len()), valid.len())
}

pub fn evaluate(mined: &Grammar, golden: &Grammar, program: &SubjectProgram, config: &EvalConfig) -> AccuracyResult {
    let (p, pn) = precision(mined, program, config);
    let (r, rn) = recall(mined, golden, program, config);
    AccuracyResult {
        precision: p,
        recall: r,
        f1: f1(p, r),
        precision_n: pn,
        recall_n: rn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_bnf;
    use crate::subjectlang::parse_subject;

    #[test]
    fn f1_values() {
        assert!((f1(0.157, 1.0) - 0.271).abs() < 5e-4);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert_eq!(f1(1.0, 1.0), 1.0);
    }

    #[test]
    fn disjoint_languages() {
        let program = parse_subject("fn main() { if (input(0) == 'a' && input(1) == 0) return 0; return 1; }").unwrap();
        let golden = parse_bnf("<start> ::= 'a'\n").unwrap();
        let mined = parse_bnf("<start> ::= 'b'\n").unwrap();
        let r = evaluate(&mined, &golden, &program, &EvalConfig { n: 10, ..Default::default() });
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!((r.precision_n, r.recall_n), (1, 1));
        let r = evaluate(&golden, &golden, &program, &EvalConfig { n: 10, ..Default::default() });
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }
}
