use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grammine::eval::{evaluate, EvalConfig};
use grammine::grammar::bnf::{format_literal, to_bnf};
use grammine::grammar::earley::EarleyParser;
use grammine::grammar::{fuzz, parse_bnf, stats, FuzzConfig, Grammar, ParseOutcome};
use grammine::pipeline::{mine, MineConfig};
use grammine::refine::{refine, RefinementConfig};
use grammine::subjectlang::Subject;
use grammine::symexec::dump_traces;
use grammine::tokens::CategoryTable;

const SUBJECTS_ENV: &str = "GRAMMINE_SUBJECTS";

#[derive(Parser)]
#[command(name = "grammine", version, about = "Mine input grammars from recursive-descent parsers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore a subject and write its input grammar.
    Mine(MineArgs),
    /// Tighten a mined grammar against its subject.
    Refine(RefineArgs),
    /// Precision, recall and F1 of a grammar.
    Eval(EvalArgs),
    /// Generate inputs from a grammar.
    Fuzz(FuzzArgs),
    /// Check whether a grammar derives an input.
    Parse(ParseArgs),
    /// Print size measures of a grammar.
    Stats(StatsArgs),
}

#[derive(Args)]
struct Bounds {
    #[arg(long, default_value_t = 4)]
    loop_bound: u32,
    #[arg(long, default_value_t = 3)]
    recursion_bound: usize,
    /// Overrides the manifest value.
    #[arg(long)]
    max_input_len: Option<usize>,
    /// Overrides the manifest value.
    #[arg(long)]
    max_states: Option<usize>,
}

#[derive(Args)]
struct RefineOpts {
    #[arg(long, default_value_t = 1000)]
    candidates: usize,
    #[arg(long, default_value_t = 500)]
    corpus_size: usize,
    #[arg(long, default_value_t = 20)]
    attempts: usize,
}

#[derive(Args)]
struct MineArgs {
    /// Manifest, `.mini` file, or name of a bundled subject.
    subject: String,
    #[command(flatten)]
    bounds: Bounds,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Skip merging alternatives into optional symbols.
    #[arg(long)]
    no_optionals: bool,
    /// Category table replacing the built-in one.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Refine the mined grammar before writing it.
    #[arg(long)]
    refine: bool,
    #[command(flatten)]
    refine_opts: RefineOpts,
}

#[derive(Args)]
struct RefineArgs {
    subject: String,
    grammar: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    refine_opts: RefineOpts,
    /// Refined grammar file; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    subject: String,
    grammar: PathBuf,
    /// Defaults to the golden grammar named in the manifest.
    #[arg(long)]
    golden: Option<PathBuf>,
    #[arg(short, long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FuzzArgs {
    grammar: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    /// Write inputs as numbered files into this directory instead of
    /// printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    grammar: PathBuf,
    /// Input file; use --text for an inline string.
    input: Option<PathBuf>,
    #[arg(long)]
    text: Option<String>,
    /// Print the derivation tree.
    #[arg(long)]
    tree: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    grammar: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn resolve_subject(arg: &str) -> Result<Subject, Failure> {
    let direct = Path::new(arg);
    let mut candidates = vec![direct.to_path_buf()];
    let dir = std::env::var_os(SUBJECTS_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("subjects"));
    candidates.push(dir.join(format!("{arg}.manifest")));
    candidates.push(dir.join(arg));
    let path = candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| usage(format!("no subject `{arg}` (searched the path and {})", dir.display())))?;
    Subject::load(&path).map_err(|e| usage(e.to_string()))
}

fn load_grammar(path: &Path) -> Result<Grammar, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let g = if path.extension().is_some_and(|e| e == "json") {
        Grammar::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        parse_bnf(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    g.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(g)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn refine_config(o: &RefineOpts, seed: u64) -> RefinementConfig {
    RefinementConfig {
        candidates: o.candidates,
        corpus_size: o.corpus_size,
        attempts: o.attempts,
        seed,
        ..Default::default()
    }
}

fn cmd_mine(a: MineArgs) -> Result<(), Failure> {
    let subject = resolve_subject(&a.subject)?;
    let mut config = MineConfig::for_subject(&subject);
    config.explore.loop_bound = a.bounds.loop_bound;
    config.explore.recursion_bound = a.bounds.recursion_bound;
    config.explore.seed = a.seed;
    if let Some(n) = a.bounds.max_input_len {
        config.explore.max_input_len = n;
    }
    if let Some(n) = a.bounds.max_states {
        config.explore.max_states = n;
    }
    config.optionals = !a.no_optionals;
    if let Some(p) = &a.categories {
        config.categories = CategoryTable::load(p).map_err(|e| usage(e.to_string()))?;
    }
    let result = mine(&subject, &config).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    fs::create_dir_all(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
    let name = &subject.manifest.name;
    let mut grammar = result.grammar.clone();
    if a.refine {
        let (refined, report) = refine(&grammar, &subject.program, &refine_config(&a.refine_opts, a.seed));
        grammar = refined;
        write(
            &a.out.join(format!("{name}.refine.json")),
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    write(&a.out.join(format!("{name}.bnf")), &to_bnf(&grammar))?;
    write(&a.out.join(format!("{name}.json")), &grammar.to_json())?;
    write(&a.out.join(format!("{name}.traces.jsonl")), &dump_traces(&result.traces))?;
    if let Some(tg) = &result.token_grammar {
        write(&a.out.join(format!("{name}.tokens.bnf")), &to_bnf(tg))?;
    }
    let s = &result.stats;
    println!(
        "{name}: {} traces ({} used), {} states, {} accepted, {} rejected{}",
        result.traces.len(),
        result.traces_used,
        s.states,
        s.accepted,
        s.rejected,
        if s.budget_exhausted { ", state budget exhausted" } else { "" }
    );
    for (msg, count) in &s.diagnostics {
        eprintln!("note: {msg} ({count}x)");
    }
    let st = stats(&grammar);
    println!("{} nonterminals, {} alternatives", st.nonterminals, st.alternatives);
    Ok(())
}

fn cmd_refine(a: RefineArgs) -> Result<(), Failure> {
    let subject = resolve_subject(&a.subject)?;
    let g = load_grammar(&a.grammar)?;
    let (refined, report) = refine(&g, &subject.program, &refine_config(&a.refine_opts, a.seed));
    for e in &report.events {
        println!(
            "{} {} (level {}) for {}",
            if e.accepted { "accepted" } else { "rejected" },
            e.rule,
            e.level,
            format_literal(e.input.as_bytes())
        );
    }
    println!(
        "{} failing of {} candidates; {} fixed, {} given up; corpus {}{}",
        report.failing,
        report.candidates,
        report.inputs_fixed,
        report.inputs_given_up,
        report.corpus,
        if report.low_confidence { " (low confidence)" } else { "" }
    );
    match &a.out {
        Some(p) => write(p, &to_bnf(&refined)),
        None => {
            print!("{}", to_bnf(&refined));
            Ok(())
        }
    }
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let subject = resolve_subject(&a.subject)?;
    let mined = load_grammar(&a.grammar)?;
    let golden_path = a
        .golden
        .clone()
        .or_else(|| subject.manifest.golden.clone())
        .ok_or_else(|| usage("no golden grammar given or named in the manifest"))?;
    let golden = load_grammar(&golden_path)?;
    let r = evaluate(
        &mined,
        &golden,
        &subject.program,
        &EvalConfig {
            n: a.n,
            seed: a.seed,
            ..Default::default()
        },
    );
    println!("precision {:.4} (n={})", r.precision, r.precision_n);
    println!("recall    {:.4} (n={})", r.recall, r.recall_n);
    println!("f1        {:.4}", r.f1);
    if r.precision_n < a.n || r.recall_n < a.n {
        eprintln!("note: fewer than {} distinct inputs were available", a.n);
    }
    Ok(())
}

fn cmd_fuzz(a: FuzzArgs) -> Result<(), Failure> {
    let g = load_grammar(&a.grammar)?;
    let out = fuzz(
        &g,
        &FuzzConfig {
            count: a.n,
            max_depth: a.max_depth,
            seed: a.seed,
            ..Default::default()
        },
    );
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| usage(e.to_string()))?;
            for (i, (bytes, _)) in out.inputs.iter().enumerate() {
                fs::write(dir.join(format!("{i:05}")), bytes).map_err(|e| usage(e.to_string()))?;
            }
        }
        None => {
            for (bytes, _) in &out.inputs {
                println!("{}", format_literal(bytes));
            }
        }
    }
    if out.exhausted {
        return Err(Failure {
            code: 1,
            msg: format!("only {} distinct inputs of {} requested", out.inputs.len(), a.n),
        });
    }
    Ok(())
}

fn cmd_parse(a: ParseArgs) -> Result<(), Failure> {
    let g = load_grammar(&a.grammar)?;
    let input = match (&a.text, &a.input) {
        (Some(t), None) => t.clone().into_bytes(),
        (None, Some(p)) => fs::read(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        _ => return Err(usage("give exactly one of an input file or --text")),
    };
    match EarleyParser::new(&g).parse(&input) {
        ParseOutcome::Accepted(tree) => {
            println!("accepted");
            if a.tree {
                print!("{}", tree.to_text());
            }
            Ok(())
        }
        ParseOutcome::Rejected { furthest } => Err(Failure {
            code: 1,
            msg: format!("rejected at position {furthest}"),
        }),
    }
}

fn cmd_stats(a: StatsArgs) -> Result<(), Failure> {
    let g = load_grammar(&a.grammar)?;
    let s = stats(&g);
    println!("NT\tRA\tl(RA)\tS");
    println!(
        "{}\t{}\t{:.2}\t{}",
        s.nonterminals, s.alternatives, s.mean_alternative_len, s.symbols
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Mine(a) => cmd_mine(a),
        Cmd::Refine(a) => cmd_refine(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Parse(a) => cmd_parse(a),
        Cmd::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
