//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use common::*;
use grammine::consumption::{consume_orders, identify_input_consumptions};
use grammine::eval::{evaluate, AccuracyResult, EvalConfig};
use grammine::grammar::bnf::to_bnf;
use grammine::grammar::{fuzz, parse_bnf, simplify, stats, FuzzConfig, Grammar, SimplifyOptions, SymKind};
use grammine::inference::{traces_to_grammar, InferOptions};
use grammine::pipeline::{mine, MineConfig};
use grammine::refine::{refine, refine_inputs, RefinementConfig};
use grammine::subjectlang::Subject;
use grammine::symcore::ByteSet;
use grammine::symexec::{explore, Context, PositionTrace, Trace, TraceMode};
use grammine::tokens::{generalize_tokens, CategoryTable};

const PROPERTY_CASES: u32 = 200;
const MIN_ACCURACY: f64 = 0.99;
const CGI_MIN_PRECISION: f64 = 0.995;
const CGI_MAX_NONTERMINALS: usize = 8;
/// Seed of the corpus used in the refinement walkthrough.
const WALKTHROUGH_SEED: u64 = 0;

type Outcome = Result<String, String>;

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, id: &str, title: &str, outcome: Outcome) {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:<3} [{tag}] {title}: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct SubjectRun {
    name: &'static str,
    mined: String,
    refined: Grammar,
    refined_bnf: String,
    accuracy: AccuracyResult,
    nonterminals: usize,
    elapsed: Duration,
}

fn run_subject(name: &'static str) -> Result<SubjectRun, String> {
    let start = Instant::now();
    let subject = load_subject(name);
    let golden_path = subject.manifest.golden.clone().ok_or("no golden grammar")?;
    let golden_text = std::fs::read_to_string(&golden_path).map_err(|e| e.to_string())?;
    let golden = parse_bnf(&golden_text).map_err(|e| e.to_string())?;
    let mined = mine(&subject, &MineConfig::for_subject(&subject)).map_err(|e| e.to_string())?;
    let (refined, _) = refine(&mined.grammar, &subject.program, &RefinementConfig::default());
    let accuracy = evaluate(&refined, &golden, &subject.program, &EvalConfig::default());
    Ok(SubjectRun {
        name,
        mined: to_bnf(&mined.grammar),
        refined_bnf: to_bnf(&refined),
        nonterminals: stats(&refined).nonterminals,
        refined,
        accuracy,
        elapsed: start.elapsed(),
    })
}

fn accuracy_line(r: &SubjectRun) -> String {
    format!(
        "precision {:.4} (n={}), recall {:.4} (n={}), {:.1}s",
        r.accuracy.precision,
        r.accuracy.precision_n,
        r.accuracy.recall,
        r.accuracy.recall_n,
        r.elapsed.as_secs_f64()
    )
}

fn check_accuracy(r: &SubjectRun, min_precision: f64, min_recall: f64) -> Result<(), String> {
    ensure(r.accuracy.precision >= min_precision && r.accuracy.recall >= min_recall, || {
        format!("{} below {min_precision}/{min_recall}", accuracy_line(r))
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut second: Vec<u32> = (6..=15).collect();
    second.push(26);
    let lists = vec![(0..=5).collect(), second, (16..=21).collect(), vec![22, 23, 24, 25, 27, 28]];
    let got = consume_orders(&lists);
    let elapsed = start.elapsed();
    ensure(got == [5, 15, 21, 28], || format!("got {got:?}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{got:?} in {elapsed:?}"))
}

fn list_trace() -> Trace {
    let rows: [(&str, ByteSet); 6] = [
        ("parse#0:value#1", ByteSet::singleton(b'[')),
        ("parse#0:value#1:array#2:L1I1:value#3", ByteSet::range(b'0', b'9')),
        ("parse#0:value#1:array#2:L1I1", ByteSet::singleton(b',')),
        ("parse#0:value#1:array#2:L1I2:value#3", ByteSet::singleton(b'"')),
        ("parse#0:value#1:array#2:L1I2:value#3", ByteSet::singleton(b'"')),
        ("parse#0:value#1:array#2:L1I2", ByteSet::singleton(b']')),
    ];
    Trace {
        path_id: 0,
        accept: true,
        mode: TraceMode::Bytes,
        positions: rows
            .iter()
            .enumerate()
            .map(|(i, (ctx, set))| PositionTrace {
                access_orders: vec![i as u32],
                contexts: vec![Rc::new(Context::parse(ctx).expect("context parses"))],
                solutions: *set,
            })
            .collect(),
        sentinel: false,
    }
}

fn criterion_2() -> Outcome {
    let inf = traces_to_grammar(&[list_trace()], &InferOptions::default()).map_err(|e| e.to_string())?;
    let g = simplify(
        &inf.grammar,
        &SimplifyOptions {
            keep: inf.loop_nonterminals.clone(),
            optionals: false,
        },
    );
    let expected = parse_bnf(
        r#"<start> ::= <parse>
<parse> ::= <value>
<value> ::= '[' <array>
<array> ::= <L1>
<L1> ::= <L1_continue> <L1> | <L1_exit>
<L1_continue> ::= /[0-9]/ ','
<L1_exit> ::= '"' '"' ']'
"#,
    )
    .expect("expected grammar parses");
    ensure(to_bnf(&g) == to_bnf(&expected), || format!("got\n{}", to_bnf(&g)))?;
    Ok(format!("{} rules, exact match", g.len()))
}

fn criterion_3(json: &SubjectRun) -> Outcome {
    check_accuracy(json, MIN_ACCURACY, MIN_ACCURACY)?;
    ensure(json.elapsed < Duration::from_secs(600), || format!("took {:?}", json.elapsed))?;
    Ok(accuracy_line(json))
}

/// Operator consumption in a `0+0` path: the selected access is the last
/// one made before the right operand is read, not the later re-read.
fn operator_consumption(subject: &Subject) -> Result<String, String> {
    let mut cfg = MineConfig::for_subject(subject).explore;
    cfg.max_input_len = 4;
    let ex = explore(&subject.program, &cfg);
    let trace = ex
        .traces
        .iter()
        .find(|t| {
            t.accept
                && t.content_len() == 3
                && t.positions[1].solutions.contains(b'+')
                && t.positions[1].solutions.len() == 1
        })
        .ok_or("no accepted operator path of length 3")?;
    let ops = &trace.positions[1].access_orders;
    let rhs_first = *trace.positions[2].access_orders.iter().min().ok_or("right operand never read")?;
    let before_rhs = ops.iter().copied().filter(|o| *o < rhs_first).max().ok_or("operator read after operand")?;
    let chosen = identify_input_consumptions(trace).orders[1];
    ensure(chosen == before_rhs, || {
        format!("chose access {chosen}, operator accesses {ops:?}, operand first read at {rhs_first}")
    })?;
    let rereads = ops.iter().filter(|o| **o > rhs_first).count();
    Ok(format!("operator consumed at access {chosen} of {ops:?} ({rereads} later re-reads skipped)"))
}

fn plus_before_mult(g: &Grammar) -> bool {
    g.rules.values().flatten().any(|alt| {
        alt.windows(2).any(|w| {
            matches!(&w[0].kind, SymKind::Lit(l) if l == b"+")
                && w[1].nt_name().is_some_and(|n| n.starts_with("parse_mult"))
        })
    })
}

fn criterion_4(calc: &SubjectRun) -> Outcome {
    check_accuracy(calc, MIN_ACCURACY, MIN_ACCURACY)?;
    ensure(plus_before_mult(&calc.refined), || "no '+' <parse_mult> sequence".into())?;
    let structural = operator_consumption(&load_subject("calc"))?;
    Ok(format!("{}; {structural}", accuracy_line(calc)))
}

fn criterion_5(cgi: &SubjectRun) -> Outcome {
    check_accuracy(cgi, CGI_MIN_PRECISION, MIN_ACCURACY)?;
    ensure(cgi.nonterminals <= CGI_MAX_NONTERMINALS, || format!("{} nonterminals", cgi.nonterminals))?;
    Ok(format!("{}, {} nonterminals", accuracy_line(cgi), cgi.nonterminals))
}

fn criterion_6() -> Outcome {
    let set = |xs: &[&str]| xs.iter().map(|s| s.as_bytes().to_vec()).collect::<BTreeSet<_>>();
    let obs: BTreeMap<String, BTreeSet<Vec<u8>>> = [
        ("INT".to_string(), set(&["9017", "2", "118", "42", "7"])),
        ("ID".to_string(), set(&["m", "s", "u", "a", "x"])),
        ("LPAR".to_string(), set(&["("])),
        ("WHILE_SYM".to_string(), set(&["while"])),
    ]
    .into();
    let mut g = Grammar::new("start");
    for name in obs.keys() {
        g.add("start", vec![grammine::grammar::Symbol::nt(name.clone())]);
    }
    let (g, _) = generalize_tokens(&g, &obs, &CategoryTable::builtin());
    let got = to_bnf(&g);
    let expected = parse_bnf(
        "<start> ::= <ID> | <INT> | <LPAR> | <WHILE_SYM>\n\
         <ID> ::= <lower_char>\n\
         <INT> ::= <digit>+\n\
         <LPAR> ::= '('\n\
         <WHILE_SYM> ::= 'while'\n",
    )
    .expect("expected grammar parses");
    for nt in ["INT", "ID", "LPAR", "WHILE_SYM"] {
        ensure(g.alternatives(nt) == expected.alternatives(nt), || format!("{nt} differs:\n{got}"))?;
    }
    Ok("INT, ID, LPAR, WHILE_SYM as expected".into())
}

fn criterion_7() -> Outcome {
    let g = parse_bnf(
        "<start> ::= <statement>\n\
         <statement> ::= <expr> <WS> ';' | <expr> ';'\n\
         <expr> ::= <ID> | <INT>\n\
         <WS> ::= ' ' | '\\t'\n\
         <ID> ::= /[a-z]/\n\
         <INT> ::= /[0-9]/+\n",
    )
    .expect("fixture parses");
    let keep = ["expr", "WS", "ID", "INT"].iter().map(|s| s.to_string()).collect();
    let s = simplify(&g, &SimplifyOptions { keep, optionals: true });
    let got = grammine::grammar::bnf::format_rule("statement", s.alternatives("statement"));
    ensure(got == "<statement> ::= <expr> <WS>? ';'", || format!("got {got}"))?;
    Ok(got)
}

fn criterion_8() -> Outcome {
    let subject = load_subject("tinyc");
    let g = parse_bnf(TINYC_FIXTURE).expect("fixture parses");
    let pool = fuzz(
        &g,
        &FuzzConfig {
            count: 300,
            max_depth: 8,
            seed: WALKTHROUGH_SEED,
            ..Default::default()
        },
    );
    let corpus: Vec<Vec<u8>> = pool
        .inputs
        .into_iter()
        .map(|(i, _)| i)
        .filter(|i| subject.program.run_concrete(i).accepted)
        .collect();
    let cfg = RefinementConfig {
        seed: WALKTHROUGH_SEED,
        ..Default::default()
    };
    let (_, report) = refine_inputs(&g, &subject.program, &[b"5=1;".to_vec()], &corpus, &cfg);
    let got: Vec<(String, usize, bool)> =
        report.events.iter().map(|e| (e.nonterminal.clone(), e.level, e.accepted)).collect();
    let expected: Vec<(String, usize, bool)> = [("term", 0, false), ("sum", 1, false), ("test", 2, false), ("expr", 3, true)]
        .iter()
        .map(|(n, l, a)| (n.to_string(), *l, *a))
        .collect();
    ensure(got == expected, || format!("events {got:?}"))?;
    let rule = &report.events[3].rule;
    ensure(rule == "<expr> ::= <ID> '=' <expr> | <test>", || format!("accepted {rule}"))?;
    Ok(format!("term/sum/test rejected, accepted {rule} (corpus {})", corpus.len()))
}

fn criterion_9(report: &mut Report) {
    let runs: [(&str, fn(u32) -> Result<(), String>); 6] = [
        ("solver agrees with brute force", run_solver),
        ("earley agrees with enumeration", run_earley),
        ("fuzz outputs reparse", run_fuzz_reparse),
        ("traces respect loop and recursion bounds", run_trace_bounds),
        ("traces are sound", run_trace_soundness),
        ("refinement preserves the corpus", run_refinement_recall),
    ];
    for (i, (title, run)) in runs.iter().enumerate() {
        let id = format!("9{}", (b'a' + i as u8) as char);
        let start = Instant::now();
        let outcome = run(PROPERTY_CASES).map(|_| format!("{PROPERTY_CASES} cases, {:.1}s", start.elapsed().as_secs_f64()));
        report.record(&id, title, outcome);
    }
    let start = Instant::now();
    let outcome = run_simplify_membership().map(|_| format!("500 samples x 5 subjects, {:.1}s", start.elapsed().as_secs_f64()));
    report.record("9g", "simplification preserves membership", outcome);
}

fn criterion_10(first: &[SubjectRun]) -> Outcome {
    let mut checked = Vec::new();
    for a in first {
        let b = run_subject(a.name)?;
        ensure(a.mined == b.mined, || format!("{}: mined grammar differs", a.name))?;
        ensure(a.refined_bnf == b.refined_bnf, || format!("{}: refined grammar differs", a.name))?;
        ensure(a.accuracy == b.accuracy, || format!("{}: metrics differ", a.name))?;
        checked.push(a.name);
    }
    Ok(format!("identical grammars and metrics for {}", checked.join(", ")))
}

fn main() {
    let mut report = Report { failed: 0 };
    report.record("1", "consumption selection", criterion_1());
    report.record("2", "trace to grammar", criterion_2());

    let mut runs = Vec::new();
    let mut errors = BTreeMap::new();
    for name in ALL_SUBJECTS {
        match run_subject(name) {
            Ok(r) => runs.push(r),
            Err(e) => {
                errors.insert(name, e);
            }
        }
    }
    let by_name = |name: &str| -> Result<&SubjectRun, String> {
        runs.iter()
            .find(|r| r.name == name)
            .ok_or_else(|| format!("mining failed: {}", errors.get(name).cloned().unwrap_or_default()))
    };
    report.record("3", "json end to end", by_name("json").and_then(criterion_3));
    report.record("4", "calc end to end", by_name("calc").and_then(criterion_4));
    report.record("5", "cgidecode end to end", by_name("cgidecode").and_then(criterion_5));
    report.record("6", "token generalization", criterion_6());
    report.record("7", "optional folding", criterion_7());
    report.record("8", "refinement walkthrough", criterion_8());
    criterion_9(&mut report);
    let determinism = if errors.is_empty() {
        criterion_10(&runs)
    } else {
        Err(format!("mining failed for {:?}", errors.keys().collect::<Vec<_>>()))
    };
    report.record("10", "determinism", determinism);
    for r in &runs {
        println!("info {:<10} {}, {} nonterminals", r.name, accuracy_line(r), r.nonterminals);
    }
    if report.failed > 0 {
        println!("{} criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
