mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solver_matches_brute_force(cond in expr_strategy(), domain in domain_strategy(), truth in any::<bool>()) {
        check_solver(&cond, domain, truth)?;
    }

    #[test]
    fn earley_matches_enumeration(g in grammar_strategy()) {
        check_earley(&g)?;
    }

    #[test]
    fn fuzz_outputs_reparse(g in grammar_strategy(), seed in any::<u64>()) {
        check_fuzz_reparse(&g, seed)?;
    }
}

#[test]
fn traces_respect_bounds() {
    run_trace_bounds(CASES).unwrap();
}

#[test]
fn traces_are_sound() {
    run_trace_soundness(CASES).unwrap();
}

#[test]
fn refinement_preserves_corpus() {
    run_refinement_recall(CASES).unwrap();
}

#[test]
fn simplification_preserves_membership() {
    run_simplify_membership().unwrap();
}
