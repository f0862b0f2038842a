//! Removes overapproximation by checking fuzzed inputs against the subject
//! and restricting the rules that let rejected inputs through.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grammar::bnf::format_rule;
use crate::grammar::earley::EarleyParser;
use crate::grammar::fuzz::Generator;
use crate::grammar::{fuzz, DerivationTree, FuzzConfig, Grammar, ParseOutcome, Rep, Symbol};
use crate::subjectlang::SubjectProgram;

/// Corpora smaller than this make accepted updates low-confidence.
pub const LOW_CONFIDENCE_CORPUS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementConfig {
    pub candidates: usize,
    pub corpus_size: usize,
    pub attempts: usize,
    /// Depth budget for replacement subtrees.
    pub replacement_depth: usize,
    pub step_budget: u64,
    pub seed: u64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            candidates: 1000,
            corpus_size: 500,
            attempts: 20,
            replacement_depth: 6,
            step_budget: crate::subjectlang::DEFAULT_STEP_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefineEvent {
    pub input: String,
    /// Nonterminal the candidate rewrites.
    pub nonterminal: String,
    /// Distance from the node where the passing replacement was found.
    pub level: usize,
    pub rule: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RefinementReport {
    pub candidates: usize,
    pub failing: usize,
    pub corpus: usize,
    pub inputs_fixed: usize,
    pub inputs_given_up: usize,
    pub updates_accepted: usize,
    pub updates_discarded: usize,
    /// Candidates the subject did not finish within the step budget.
    pub budget_skipped: usize,
    pub low_confidence: bool,
    pub events: Vec<RefineEvent>,
}

/// Verdict of the subject, or `None` when it ran out of steps.
fn oracle(program: &SubjectProgram, input: &[u8], budget: u64) -> Option<bool> {
    let v = program.run_concrete_with_budget(input, budget);
    (!v.budget_exceeded).then_some(v.accepted)
}

/// Whether the candidate still parses every corpus input.
pub fn check_underapproximation(candidate: &Grammar, corpus: &[Vec<u8>]) -> bool {
    let parser = EarleyParser::new(candidate);
    corpus.iter().all(|i| parser.accepts(i))
}

/// The alternative symbols spelled by `node`, with the child on `path`
/// replaced recursively by its own symbols. `None` when the path runs
/// through a quantified symbol.
fn inline_chain(g: &Grammar, node: &DerivationTree, path: &[(usize, usize)]) -> Option<Vec<Symbol>> {
    let DerivationTree::Node { nt, alt, items } = node else {
        return None;
    };
    let mut syms = g.alternatives(nt).get(*alt)?.clone();
    if let Some(&(i, j)) = path.first() {
        if syms[i].rep != Rep::One {
            return None;
        }
        let inner = inline_chain(g, items.get(i)?.get(j)?, &path[1..])?;
        syms.splice(i..=i, inner);
    }
    Some(syms)
}

/// Candidate grammar for a passing replacement at `path`, `level` steps up.
pub fn propose_fix(
    g: &Grammar,
    failing: &DerivationTree,
    path: &[(usize, usize)],
    replacement: &DerivationTree,
    level: usize,
) -> Option<(String, Grammar)> {
    let DerivationTree::Node { nt, alt, .. } = replacement else {
        return None;
    };
    let mut cand = g.clone();
    if level == 0 {
        let rule = g.alternatives(nt).get(*alt)?.clone();
        cand.rules.insert(nt.clone(), vec![rule]);
        return Some((nt.clone(), cand));
    }
    let cut = path.len().checked_sub(level)?;
    let DerivationTree::Node { nt: anc, alt: anc_alt, .. } = failing.get(&path[..cut])? else {
        return None;
    };
    let passing = failing.replace(path, replacement.clone());
    let (i, _) = path[cut];
    let mut new_alt = g.alternatives(anc).get(*anc_alt)?.clone();
    if new_alt[i].rep != Rep::One {
        return None;
    }
    let child = passing.get(&path[..=cut])?;
    let chain = inline_chain(g, child, &path[cut + 1..])?;
    new_alt.splice(i..=i, chain);
    let alts = cand.rules.get_mut(anc)?;
    alts[*anc_alt] = new_alt;
    let mut seen = std::collections::HashSet::new();
    alts.retain(|a| seen.insert(a.clone()));
    Some((anc.clone(), cand))
}

/// Fuzzes candidates, then repairs the grammar against each rejected one.
pub fn refine(g: &Grammar, program: &SubjectProgram, config: &RefinementConfig) -> (Grammar, RefinementReport) {
    let cands = fuzz(
        g,
        &FuzzConfig {
            count: config.candidates,
            seed: config.seed,
            ..Default::default()
        },
    );
    let mut failing = Vec::new();
    let mut skipped = 0;
    for (input, _) in &cands.inputs {
        match oracle(program, input, config.step_budget) {
            Some(false) => failing.push(input.clone()),
            Some(true) => {}
            None => skipped += 1,
        }
    }
    let pool = fuzz(
        g,
        &FuzzConfig {
            count: config.corpus_size.saturating_mul(4),
            seed: config.seed.wrapping_add(1),
            ..Default::default()
        },
    );
    let corpus: Vec<Vec<u8>> = pool
        .inputs
        .into_iter()
        .map(|(i, _)| i)
        .filter(|i| oracle(program, i, config.step_budget) == Some(true))
        .take(config.corpus_size)
        .collect();
    let (refined, mut report) = refine_inputs(g, program, &failing, &corpus, config);
    report.candidates = cands.inputs.len();
    report.budget_skipped += skipped;
    (refined, report)
}

/// Repairs against given rejected inputs, validating with `corpus`.
pub fn refine_inputs(
    g: &Grammar,
    program: &SubjectProgram,
    failing: &[Vec<u8>],
    corpus: &[Vec<u8>],
    config: &RefinementConfig,
) -> (Grammar, RefinementReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut g = g.clone();
    let mut report = RefinementReport {
        failing: failing.len(),
        corpus: corpus.len(),
        ..Default::default()
    };
    if corpus.is_empty() {
        eprintln!("warning: empty validation corpus; every update will be accepted");
    }
    for input in failing {
        let parser = EarleyParser::new(&g);
        let ParseOutcome::Accepted(tree) = parser.parse(input) else {
            continue;
        };
        match repair_one(&g, program, input, &tree, corpus, config, &mut rng, &mut report) {
            Some(next) => {
                g = next;
                report.inputs_fixed += 1;
            }
            None => report.inputs_given_up += 1,
        }
    }
    report.low_confidence = report.updates_accepted > 0 && corpus.len() < LOW_CONFIDENCE_CORPUS;
    (g, report)
}

#[allow(clippy::too_many_arguments)]
fn repair_one(
    g: &Grammar,
    program: &SubjectProgram,
    input: &[u8],
    tree: &DerivationTree,
    corpus: &[Vec<u8>],
    config: &RefinementConfig,
    rng: &mut ChaCha8Rng,
    report: &mut RefinementReport,
) -> Option<Grammar> {
    let gen = Generator::new(g, config.replacement_depth, 4);
    for path in tree.postorder_paths() {
        let nt = tree.get(&path).and_then(DerivationTree::nt)?.to_string();
        if !gen.productive(&nt) {
            continue;
        }
        let mut passing = None;
        for _ in 0..config.attempts {
            let r = gen.tree(&nt, rng);
            let candidate = tree.replace(&path, r.clone()).yield_bytes();
            match oracle(program, &candidate, config.step_budget) {
                Some(true) => {
                    passing = Some(r);
                    break;
                }
                Some(false) => {}
                None => report.budget_skipped += 1,
            }
        }
        let Some(replacement) = passing else { continue };
        for level in 0..=path.len() {
            let Some((target, cand)) = propose_fix(g, tree, &path, &replacement, level) else {
                continue;
            };
            if cand == *g {
                continue;
            }
            let mut cand = cand;
            cand.prune();
            let accepted = cand.validate().is_ok()
                && !EarleyParser::new(&cand).accepts(input)
                && check_underapproximation(&cand, corpus);
            report.events.push(RefineEvent {
                input: String::from_utf8_lossy(input).into_owned(),
                rule: format_rule(&target, cand.alternatives(&target)),
                nonterminal: target,
                level,
                accepted,
            });
            if accepted {
                report.updates_accepted += 1;
                return Some(cand);
            }
            report.updates_discarded += 1;
        }
        return None;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_bnf;

    fn chain_grammar() -> Grammar {
        parse_bnf(
            "<start> ::= <expr>\n\
             <expr> ::= <test> '=' <expr> | <test>\n\
             <test> ::= <sum>\n\
             <sum> ::= <term> | <sum> '+' <term>\n\
             <term> ::= <ID> | <INT>\n\
             <ID> ::= /[a-z]/\n\
             <INT> ::= /[0-9]/\n",
        )
        .unwrap()
    }

    #[test]
    fn fix_levels() {
        let g = chain_grammar();
        let ParseOutcome::Accepted(tree) = EarleyParser::new(&g).parse(b"5=1") else { panic!() };
        // start > expr(0) > test > sum > term
        let path = vec![(0, 0), (0, 0), (0, 0), (0, 0)];
        assert_eq!(tree.get(&path).unwrap().nt(), Some("term"));
        let replacement = DerivationTree::Node {
            nt: "term".into(),
            alt: 0,
            items: vec![vec![DerivationTree::Node {
                nt: "ID".into(),
                alt: 0,
                items: vec![vec![DerivationTree::Leaf(b"a".to_vec())]],
            }]],
        };
        let rule = |level| {
            let (nt, c) = propose_fix(&g, &tree, &path, &replacement, level).unwrap();
            format_rule(&nt, c.alternatives(&nt))
        };
        assert_eq!(rule(0), "<term> ::= <ID>");
        assert_eq!(rule(1), "<sum> ::= <ID> | <sum> '+' <term>");
        assert_eq!(rule(2), "<test> ::= <ID>");
        assert_eq!(rule(3), "<expr> ::= <ID> '=' <expr> | <test>");
    }

    #[test]
    fn identical_replacement_changes_nothing_above() {
        let g = chain_grammar();
        let ParseOutcome::Accepted(tree) = EarleyParser::new(&g).parse(b"a") else { panic!() };
        let path = vec![(0, 0), (0, 0), (0, 0), (0, 0)];
        let same = tree.get(&path).unwrap().clone();
        let (_, c) = propose_fix(&g, &tree, &path, &same, 0).unwrap();
        assert_eq!(c.alternatives("term").len(), 1);
        assert!(check_underapproximation(&g, &[b"a=b".to_vec()]));
        assert!(check_underapproximation(&g, &[]));
    }
}
