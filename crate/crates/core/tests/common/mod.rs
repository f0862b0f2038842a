//! Generators and checks shared by the property suites and the acceptance
//! runner.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use grammine::grammar::earley::EarleyParser;
use grammine::grammar::{fuzz, FuzzConfig, Grammar, Rep, SymKind, Symbol};
use grammine::subjectlang::ast::{BinOp, UnOp};
use grammine::subjectlang::Subject;
use grammine::symcore::{ByteSet, DomainStore, SolverError, SymVar, Val};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 256;

/// Runner with a fixed seed, for property checks outside `proptest!`.
pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

pub fn subjects_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../subjects")
}

pub fn load_subject(name: &str) -> Subject {
    Subject::load(&subjects_dir().join(format!("{name}.manifest"))).expect("bundled subject loads")
}

// ---- byte-domain solver ----

pub fn expr_strategy() -> impl Strategy<Value = Val> {
    let leaf = prop_oneof![
        3 => Just(Val::var(SymVar::Read(0))),
        2 => (-3i64..300).prop_map(Val::Int),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            4 => (bin_op(), inner.clone(), inner.clone()).prop_map(|(op, a, b)| Val::binary(op, a, b)),
            1 => (prop_oneof![Just(UnOp::Not), Just(UnOp::Neg)], inner).prop_map(|(op, a)| Val::unary(op, a)),
        ]
    })
}

fn bin_op() -> impl Strategy<Value = BinOp> {
    prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Rem),
        Just(BinOp::Eq),
        Just(BinOp::Ne),
        Just(BinOp::Lt),
        Just(BinOp::Le),
        Just(BinOp::Gt),
        Just(BinOp::Ge),
    ]
}

pub fn domain_strategy() -> impl Strategy<Value = ByteSet> {
    prop_oneof![
        Just(ByteSet::FULL),
        proptest::collection::vec(any::<u8>(), 1..40).prop_map(|v| v.into_iter().collect()),
        (any::<u8>(), any::<u8>()).prop_map(|(a, b)| ByteSet::range(a.min(b), a.max(b))),
    ]
}

/// Asserting `cond` keeps exactly the bytes that satisfy it by brute force.
pub fn check_solver(cond: &Val, domain: ByteSet, truth: bool) -> Result<(), TestCaseError> {
    let mut store = DomainStore::new();
    store.set(SymVar::Read(0), domain);
    let before = store.get(SymVar::Read(0));
    let feasible = store.assert_constraint(cond, truth).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let expected: ByteSet = (0..=255u8)
        .filter(|&b| before.contains(b) && (cond.eval(&|_| b as i64) != 0) == truth)
        .collect();
    if cond.vars().is_empty() {
        let holds = (cond.eval(&|_| 0) != 0) == truth;
        prop_assert_eq!(feasible, holds);
        prop_assert_eq!(store.get(SymVar::Read(0)), before);
        return Ok(());
    }
    prop_assert_eq!(store.get(SymVar::Read(0)), expected);
    prop_assert_eq!(feasible, !expected.is_empty());
    let values = store.possible_values(cond).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let brute: BTreeSet<i64> = expected.iter().map(|b| cond.eval(&|_| b as i64)).collect();
    prop_assert_eq!(values, brute);
    let mut two = DomainStore::new();
    let cross = Val::binary(BinOp::Eq, cond.clone(), Val::var(SymVar::Read(1)));
    prop_assert_eq!(two.assert_constraint(&cross, truth), Err(SolverError::Unsupported(2)));
    Ok(())
}

// ---- small random grammars ----

const NTS: [&str; 3] = ["A", "B", "C"];

fn symbol_strategy() -> impl Strategy<Value = Symbol> {
    let kind = prop_oneof![
        3 => (0..NTS.len()).prop_map(|i| SymKind::Nt(NTS[i].to_string())),
        2 => prop_oneof![Just(b"a".to_vec()), Just(b"b".to_vec()), Just(b"ab".to_vec())].prop_map(SymKind::Lit),
        1 => Just(SymKind::Class([b'a', b'b'].into_iter().collect())),
    ];
    let rep = prop_oneof![6 => Just(Rep::One), 1 => Just(Rep::Opt), 1 => Just(Rep::Star), 1 => Just(Rep::Plus)];
    (kind, rep).prop_map(|(kind, rep)| Symbol { kind, rep })
}

pub fn grammar_strategy() -> impl Strategy<Value = Grammar> {
    let alt = proptest::collection::vec(symbol_strategy(), 0..4);
    let alts = proptest::collection::vec(alt, 1..4);
    proptest::collection::vec(alts, NTS.len()).prop_map(|rules| {
        let mut g = Grammar::new("A");
        for (nt, alts) in NTS.iter().zip(rules) {
            g.rules.insert(nt.to_string(), Vec::new());
            for a in alts {
                g.add(nt, a);
            }
        }
        g
    })
}

const MAX_LEN: usize = 6;

fn concat(a: &BTreeSet<Vec<u8>>, b: &BTreeSet<Vec<u8>>) -> BTreeSet<Vec<u8>> {
    let mut out = BTreeSet::new();
    for x in a {
        for y in b {
            if x.len() + y.len() <= MAX_LEN {
                let mut s = x.clone();
                s.extend(y);
                out.insert(s);
            }
        }
    }
    out
}

fn repeat(base: &BTreeSet<Vec<u8>>, rep: Rep) -> BTreeSet<Vec<u8>> {
    let eps: BTreeSet<Vec<u8>> = [Vec::new()].into();
    match rep {
        Rep::One => base.clone(),
        Rep::Opt => base.union(&eps).cloned().collect(),
        Rep::Star | Rep::Plus => {
            let mut acc = base.clone();
            loop {
                let next: BTreeSet<Vec<u8>> = acc.union(&concat(&acc, base)).cloned().collect();
                if next == acc {
                    break;
                }
                acc = next;
            }
            if rep == Rep::Star {
                acc.insert(Vec::new());
            }
            acc
        }
    }
}

/// Every string of length at most 6 derivable from the start symbol, by
/// fixed-point iteration over the rules.
pub fn enumerate_language(g: &Grammar) -> BTreeSet<Vec<u8>> {
    let mut lang: std::collections::HashMap<&str, BTreeSet<Vec<u8>>> =
        g.rules.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
    loop {
        let mut changed = false;
        for (nt, alts) in &g.rules {
            let mut set = lang[nt.as_str()].clone();
            for alt in alts {
                let mut acc: BTreeSet<Vec<u8>> = [Vec::new()].into();
                for sym in alt {
                    let base: BTreeSet<Vec<u8>> = match &sym.kind {
                        SymKind::Nt(n) => lang[n.as_str()].clone(),
                        SymKind::Lit(l) => [l.clone()].into(),
                        SymKind::Class(c) => c.iter().map(|b| vec![b]).collect(),
                    };
                    acc = concat(&acc, &repeat(&base, sym.rep));
                }
                set.extend(acc);
            }
            if set.len() != lang[nt.as_str()].len() {
                lang.insert(nt.as_str(), set);
                changed = true;
            }
        }
        if !changed {
            return lang[g.start.as_str()].clone();
        }
    }
}

pub fn all_strings(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &layer {
            for &c in alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

pub fn check_earley(g: &Grammar) -> Result<(), TestCaseError> {
    let lang = enumerate_language(g);
    let parser = EarleyParser::new(g);
    for s in all_strings(b"ab", MAX_LEN) {
        prop_assert_eq!(
            parser.accepts(&s),
            lang.contains(&s),
            "string {:?}",
            String::from_utf8_lossy(&s)
        );
    }
    Ok(())
}

pub fn check_fuzz_reparse(g: &Grammar, seed: u64) -> Result<(), TestCaseError> {
    let out = fuzz(
        g,
        &FuzzConfig {
            count: 20,
            max_depth: 5,
            max_repeat: 2,
            seed,
            ..Default::default()
        },
    );
    let parser = EarleyParser::new(g);
    for (input, tree) in &out.inputs {
        prop_assert_eq!(&tree.yield_bytes(), input);
        prop_assert!(tree.conforms(g), "tree does not conform");
        prop_assert!(parser.accepts(input), "fuzzed {:?} does not re-parse", String::from_utf8_lossy(input));
    }
    Ok(())
}

// ---- exploration ----

/// Loop iterations and (call site, function) multiplicities in every
/// recorded context stay within the bounds.
pub fn check_trace_bounds(traces: &[grammine::symexec::Trace], loop_bound: u32, recursion_bound: usize) -> Result<(), TestCaseError> {
    for t in traces {
        for p in &t.positions {
            for ctx in &p.contexts {
                let mut pairs: std::collections::HashMap<(&str, u32), usize> = Default::default();
                for f in &ctx.frames {
                    *pairs.entry((&f.func, f.site)).or_default() += 1;
                    for &(id, it) in &f.loops {
                        prop_assert!(it <= loop_bound, "loop {} iteration {} in {}", id, it, ctx);
                    }
                }
                for ((func, site), n) in pairs {
                    prop_assert!(n <= recursion_bound, "{}#{} occurs {} times in {}", func, site, n, ctx);
                }
            }
        }
    }
    Ok(())
}

/// A concretization that picks `choice`-indexed bytes from each position.
pub fn concretize(t: &grammine::symexec::Trace, choices: &[usize]) -> Vec<u8> {
    (0..t.content_len())
        .map(|i| {
            let sols: Vec<u8> = t.positions[i].solutions.iter().collect();
            sols[choices.get(i).copied().unwrap_or(0) % sols.len()]
        })
        .collect()
}

// ---- refinement ----

pub const TINYC_FIXTURE: &str = "\
<start> ::= <program>
<program> ::= <statement>
<statement> ::= <expr> ';' | <LBRA> <statement>* <RBRA> | ';'
<expr> ::= <test> '=' <expr> | <test>
<test> ::= <sum> | <sum> '<' <sum>
<sum> ::= <term> | <sum> '+' <term> | <sum> '-' <term>
<term> ::= <ID> | <INT> | <paren_expr>
<paren_expr> ::= '(' <expr> ')'
<LBRA> ::= '{'
<RBRA> ::= '}'
<ID> ::= /[a-z]/
<INT> ::= <digit>+
<digit> ::= /[0-9]/
";

/// Strings near the language of `g`: fuzzed members, half of them mutated.
pub fn sample_strings(g: &Grammar, n: usize, seed: u64) -> Vec<Vec<u8>> {
    use rand::{Rng, SeedableRng};
    let out = fuzz(
        g,
        &FuzzConfig {
            count: n,
            max_depth: 10,
            seed,
            ..Default::default()
        },
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<u8> = out.inputs.iter().flat_map(|(i, _)| i.iter().copied()).collect();
    out.inputs
        .into_iter()
        .map(|(mut s, _)| {
            if rng.gen_bool(0.5) && !s.is_empty() {
                let i = rng.gen_range(0..s.len());
                match rng.gen_range(0..3) {
                    0 => {
                        s.remove(i);
                    }
                    1 => s.insert(i, alphabet[rng.gen_range(0..alphabet.len())]),
                    _ => s[i] = alphabet[rng.gen_range(0..alphabet.len())],
                }
            }
            s
        })
        .collect()
}

/// Both grammars agree on membership for every sample.
pub fn check_same_membership(a: &Grammar, b: &Grammar, samples: &[Vec<u8>]) -> Result<(), TestCaseError> {
    let (pa, pb) = (EarleyParser::new(a), EarleyParser::new(b));
    for s in samples {
        prop_assert_eq!(pa.accepts(s), pb.accepts(s), "disagree on {:?}", String::from_utf8_lossy(s));
    }
    Ok(())
}

// ---- property runs, shared with the acceptance runner ----

pub const BYTE_SUBJECTS: [&str; 4] = ["json", "calc", "cgidecode", "lisp"];
pub const ALL_SUBJECTS: [&str; 5] = ["json", "calc", "cgidecode", "lisp", "tinyc"];

fn finish<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

pub fn run_solver(cases: u32) -> Result<(), String> {
    let strategy = (expr_strategy(), domain_strategy(), any::<bool>());
    finish(runner(cases).run(&strategy, |(cond, dom, truth)| check_solver(&cond, dom, truth)))
}

pub fn run_earley(cases: u32) -> Result<(), String> {
    finish(runner(cases).run(&grammar_strategy(), |g| check_earley(&g)))
}

pub fn run_fuzz_reparse(cases: u32) -> Result<(), String> {
    finish(runner(cases).run(&(grammar_strategy(), any::<u64>()), |(g, seed)| check_fuzz_reparse(&g, seed)))
}

pub fn run_trace_bounds(cases: u32) -> Result<(), String> {
    use grammine::pipeline::MineConfig;
    let subjects: Vec<_> = BYTE_SUBJECTS.iter().map(|s| load_subject(s)).collect();
    let strategy = (0..subjects.len(), 2u32..=4, 1usize..=3, 4usize..=7);
    finish(runner(cases).run(&strategy, |(s, loop_bound, recursion_bound, len)| {
        let mut cfg = MineConfig::for_subject(&subjects[s]).explore;
        cfg.loop_bound = loop_bound;
        cfg.recursion_bound = recursion_bound;
        cfg.max_input_len = len;
        cfg.max_states = 20_000;
        let ex = grammine::symexec::explore(&subjects[s].program, &cfg);
        check_trace_bounds(&ex.traces, loop_bound, recursion_bound)
    }))
}

pub fn run_trace_soundness(cases: u32) -> Result<(), String> {
    use grammine::pipeline::MineConfig;
    use proptest::sample::Index;
    let subjects: Vec<_> = BYTE_SUBJECTS.iter().map(|s| load_subject(s)).collect();
    let traces: Vec<_> = subjects
        .iter()
        .map(|s| {
            let mut cfg = MineConfig::for_subject(s).explore;
            cfg.max_input_len = cfg.max_input_len.min(9);
            cfg.max_states = 100_000;
            grammine::symexec::explore(&s.program, &cfg).traces
        })
        .collect();
    let strategy = (0..subjects.len(), any::<Index>(), proptest::collection::vec(any::<usize>(), 12));
    finish(runner(cases).run(&strategy, |(s, pick, choices)| {
        let t = pick.get(&traces[s]);
        let input = concretize(t, &choices);
        let verdict = subjects[s].program.run_concrete(&input);
        prop_assert_eq!(verdict.accepted, t.accept, "input {:?}", String::from_utf8_lossy(&input));
        Ok(())
    }))
}

pub fn run_refinement_recall(cases: u32) -> Result<(), String> {
    use grammine::grammar::parse_bnf;
    use grammine::refine::{refine_inputs, RefinementConfig};
    let subject = load_subject("tinyc");
    let g = parse_bnf(TINYC_FIXTURE).expect("fixture parses");
    finish(runner(cases).run(&any::<u64>(), |seed| {
        let pool = fuzz(
            &g,
            &FuzzConfig {
                count: 60,
                max_depth: 8,
                seed,
                ..Default::default()
            },
        );
        let (valid, invalid): (Vec<_>, Vec<_>) = pool
            .inputs
            .into_iter()
            .map(|(i, _)| i)
            .partition(|i| subject.program.run_concrete(i).accepted);
        let corpus: Vec<Vec<u8>> = valid.into_iter().take(30).collect();
        let failing: Vec<Vec<u8>> = invalid.into_iter().take(3).collect();
        let cfg = RefinementConfig {
            attempts: 5,
            seed,
            ..Default::default()
        };
        let (refined, _) = refine_inputs(&g, &subject.program, &failing, &corpus, &cfg);
        let parser = EarleyParser::new(&refined);
        for c in &corpus {
            prop_assert!(parser.accepts(c), "refinement lost {:?}", String::from_utf8_lossy(c));
        }
        Ok(())
    }))
}

/// Mined grammars before and after simplification agree on 500 samples
/// per subject.
pub fn run_simplify_membership() -> Result<(), String> {
    use grammine::pipeline::{mine, MineConfig};
    for name in ALL_SUBJECTS {
        let subject = load_subject(name);
        let mut cfg = MineConfig::for_subject(&subject);
        cfg.explore.max_input_len = cfg.explore.max_input_len.min(8);
        let mined = mine(&subject, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let mut samples = sample_strings(&mined.generalized, 250, 7);
        samples.extend(sample_strings(&mined.grammar, 250, 8));
        if samples.len() < 400 {
            return Err(format!("{name}: only {} samples", samples.len()));
        }
        check_same_membership(&mined.generalized, &mined.grammar, &samples).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(())
}
