//! Bounded symbolic exploration of subject parsers, producing one trace per
//! accepting path.

mod engine;
pub mod tokenizer;
pub mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use serde::Serialize;

use crate::subjectlang::{SubjectProgram, TokenSink};
use crate::symcore::{ByteSet, SymVar, Val};

use engine::{Access, Death, Detour, Engine, Outcome, State};
pub use tokenizer::{analyze_tokenizer, TokenAnalysis, TokenObservation};
pub use trace::{dump_traces, load_traces, Context, CtxFrame, PositionTrace, Trace, TraceMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Iterations allowed for loops that process input.
    pub loop_bound: u32,
    /// Occurrences of one (call site, function) pair allowed on the stack.
    pub recursion_bound: usize,
    pub max_input_len: usize,
    /// States created before exploration stops with a partial result.
    pub max_states: usize,
    /// Iterations allowed for loops that do not process input.
    pub safety_loop_bound: u32,
    /// Concrete samples drawn per tokenizer path.
    pub token_samples: usize,
    pub seed: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            loop_bound: 4,
            recursion_bound: 3,
            max_input_len: 64,
            max_states: 500_000,
            safety_loop_bound: 256,
            token_samples: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExploreStats {
    pub states: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub infeasible: usize,
    pub loop_bound: usize,
    pub recursion_bound: usize,
    pub safety_bound: usize,
    pub input_length: usize,
    pub unsupported: usize,
    pub faults: usize,
    pub dropped: usize,
    pub budget_exhausted: bool,
    /// Distinct diagnostic messages with their counts.
    pub diagnostics: BTreeMap<String, usize>,
}

impl ExploreStats {
    fn note(&mut self, msg: impl Into<String>) {
        *self.diagnostics.entry(msg.into()).or_insert(0) += 1;
    }

    fn record_death(&mut self, d: Death) {
        match d {
            Death::Infeasible => self.infeasible += 1,
            Death::LoopBound => self.loop_bound += 1,
            Death::RecursionBound => self.recursion_bound += 1,
            Death::InputLength => {
                self.input_length += 1;
                self.note("read beyond the maximum symbolic input length");
            }
            Death::SafetyBound(m) => {
                self.safety_bound += 1;
                self.note(m);
            }
            Death::Unsupported(m) => {
                self.unsupported += 1;
                self.note(format!("unsupported: {m}"));
            }
            Death::Fault(m) => {
                self.faults += 1;
                self.note(format!("fault: {m}"));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub traces: Vec<Trace>,
    pub stats: ExploreStats,
}

/// Explores every path of the entry function under the bounds.
pub fn explore(program: &SubjectProgram, config: &ExploreConfig) -> Exploration {
    let engine = Engine::new(program, config, Detour::None);
    let init = engine.initial_state(program.entry_index(), ByteSet::EMPTY);
    drive(&engine, init, TraceMode::Bytes)
}

/// Explores the parser with every tokenizer call answered by a fresh
/// symbolic token drawn from `token_ids`.
pub fn explore_with_proxy(
    program: &SubjectProgram,
    tokenizer: &str,
    sink: &TokenSink,
    token_ids: ByteSet,
    config: &ExploreConfig,
) -> Result<Exploration, crate::subjectlang::SubjectError> {
    let func = program.function_index(tokenizer)?;
    let sink = match sink {
        TokenSink::Return => None,
        TokenSink::Global(g) => Some(program.global_slot(g)?),
    };
    let engine = Engine::new(program, config, Detour::Proxy { func, sink });
    let init = engine.initial_state(program.entry_index(), token_ids);
    Ok(drive(&engine, init, TraceMode::Tokens))
}

fn drive(engine: &Engine, init: State, mode: TraceMode) -> Exploration {
    let mut stats = ExploreStats::default();
    let mut traces = Vec::new();
    let mut work = VecDeque::from([init]);
    stats.states = 1;
    while let Some(st) = work.pop_front() {
        match engine.run(st) {
            Outcome::Fork(t, f) => {
                if stats.states + 2 > engine.config.max_states {
                    stats.budget_exhausted = true;
                    break;
                }
                stats.states += 2;
                work.push_back(t);
                work.push_back(f);
            }
            Outcome::Dead(d) => stats.record_death(d),
            Outcome::Returned(mut st, v) => {
                let ok = match v {
                    Val::Int(x) => x == 0,
                    sym => {
                        let cond = Val::binary(
                            crate::subjectlang::ast::BinOp::Eq,
                            sym,
                            Val::Int(0),
                        );
                        match st.domains.assert_constraint(&cond, true) {
                            Ok(ok) => ok,
                            Err(e) => {
                                stats.record_death(Death::Unsupported(e.to_string()));
                                continue;
                            }
                        }
                    }
                };
                if !ok {
                    stats.rejected += 1;
                    continue;
                }
                match build_trace(&st, mode, traces.len()) {
                    Ok(t) => {
                        stats.accepted += 1;
                        traces.push(t);
                    }
                    Err(msg) => {
                        stats.dropped += 1;
                        stats.note(msg);
                    }
                }
            }
        }
    }
    if stats.budget_exhausted {
        stats.note("state budget exhausted; result is partial");
    }
    if traces.is_empty() {
        stats.note("no accepting path found");
    }
    Exploration { traces, stats }
}

fn accesses_in_order(st: &State) -> Vec<Rc<Access>> {
    let mut out = Vec::new();
    let mut cur = st.accesses.clone();
    while let Some(a) = cur {
        cur = a.prev.clone();
        out.push(a);
    }
    out.reverse();
    out
}

fn build_trace(st: &State, mode: TraceMode, path_id: usize) -> Result<Trace, String> {
    let mut positions: Vec<PositionTrace> = Vec::new();
    for a in accesses_in_order(st) {
        let idx = match (a.var, mode) {
            (SymVar::Read(i), TraceMode::Bytes) | (SymVar::TokenRead(i), TraceMode::Tokens) => {
                i as usize
            }
            _ => continue,
        };
        if positions.len() <= idx {
            positions.resize(
                idx + 1,
                PositionTrace {
                    access_orders: Vec::new(),
                    contexts: Vec::new(),
                    solutions: ByteSet::EMPTY,
                },
            );
        }
        positions[idx].access_orders.push(a.order);
        positions[idx].contexts.push(a.ctx.clone());
    }
    if let Some(gap) = positions.iter().position(|p| p.access_orders.is_empty()) {
        return Err(format!("trace dropped: position {gap} never accessed"));
    }
    let end = ByteSet::singleton(0);
    let n = positions.len();
    let mut sentinel = false;
    for (i, p) in positions.iter_mut().enumerate() {
        let var = match mode {
            TraceMode::Bytes => SymVar::Read(i as u32),
            TraceMode::Tokens => SymVar::TokenRead(i as u32),
        };
        let mut d = st.domains.get(var);
        match mode {
            // Token id 0 is an ordinary token, not an end marker.
            TraceMode::Tokens => {}
            TraceMode::Bytes if d == end => {
                if i + 1 != n {
                    return Err(format!("trace dropped: end marker at {i} before the last position"));
                }
                sentinel = true;
            }
            TraceMode::Bytes => d.remove(0),
        }
        p.solutions = d;
    }
    Ok(Trace {
        path_id,
        accept: true,
        mode,
        positions,
        sentinel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subjectlang::parse_subject;

    fn run(src: &str) -> Exploration {
        explore(&parse_subject(src).unwrap(), &ExploreConfig::default())
    }

    #[test]
    fn single_branch_single_trace() {
        let e = run("fn main(){ if(input(0)=='a') return 0; return 1; }");
        assert_eq!(e.traces.len(), 1);
        let t = &e.traces[0];
        assert_eq!(t.positions.len(), 1);
        assert_eq!(t.positions[0].solutions, ByteSet::singleton(b'a'));
        assert!(!t.sentinel);
    }

    #[test]
    fn end_marker_becomes_sentinel() {
        let e = run("fn main(){ if(input(0)!='a') return 1; if (input(1) != 0) return 1; return 0; }");
        assert_eq!(e.traces.len(), 1);
        let t = &e.traces[0];
        assert!(t.sentinel);
        assert_eq!(t.content_len(), 1);
        assert_eq!(t.witness(), b"a");
    }

    #[test]
    fn reads_past_end_are_zero() {
        let e = run(
            "fn main(){ var i = 0; while (input(i) != 0) { if (input(i) != 'x') return 1; i = i + 1; } if (input(i + 1) != 0) return 1; return 0; }",
        );
        let lens: Vec<usize> = e.traces.iter().map(|t| t.content_len()).collect();
        assert_eq!(lens, vec![0, 1, 2, 3]);
        assert!(e.traces.iter().all(|t| t.sentinel));
    }

    #[test]
    fn loop_without_input_is_not_bounded() {
        let e = run("fn main(){ var i = 0; while (i < 3) { i = i + 1; } return 0; }");
        assert_eq!(e.traces.len(), 1);
        assert_eq!(e.stats.safety_bound, 0);
    }

    #[test]
    fn safety_bound_stops_long_loops() {
        let e = run("fn main(){ var i = 0; while (i < 300) { i = i + 1; } return 0; }");
        assert!(e.traces.is_empty());
        assert_eq!(e.stats.safety_bound, 1);
        assert!(e.stats.diagnostics.keys().any(|k| k.contains("exceeded 256")));
    }

    #[test]
    fn recursion_bound_counts_pairs() {
        let src = "global n; fn f(){ n = n + 1; if (n < LIMIT) f(); return 0; } fn main(){ f(); return 0; }";
        let ok = run(&src.replace("LIMIT", "4"));
        assert_eq!(ok.traces.len(), 1);
        let cut = run(&src.replace("LIMIT", "5"));
        assert!(cut.traces.is_empty());
        assert_eq!(cut.stats.recursion_bound, 1);
    }

    #[test]
    fn deep_non_recursive_chain_is_fine() {
        let mut src = String::from("fn f0(){ return 0; }\n");
        for i in 1..50 {
            src.push_str(&format!("fn f{i}(){{ return f{}(); }}\n", i - 1));
        }
        src.push_str("fn main(){ return f49(); }");
        assert_eq!(run(&src).traces.len(), 1);
    }

    #[test]
    fn copies_are_tracked_and_transforms_are_not() {
        let e = run(
            "fn main(){ buf c[2]; c[0] = input(0); var d = input(0) - 48; if (c[0] != '7') return 1; var x = d; return 0; }",
        );
        let t = &e.traces[0];
        // input(0) twice, then the buffer load; `d` loads are transformed
        assert_eq!(t.positions[0].access_orders, vec![0, 1, 2]);
    }

    #[test]
    fn cross_byte_comparison_counted() {
        let e = run("fn main(){ if (input(0) == input(1)) return 0; return 1; }");
        assert!(e.traces.is_empty());
        assert_eq!(e.stats.unsupported, 1);
    }

    #[test]
    fn processing_loop_bounded_to_four_iterations() {
        let e = run(
            "fn main(){ var i = 0; while (input(i) == 'a') { i = i + 1; } if (input(i) != 0) return 1; return 0; }",
        );
        let max_iter = e
            .traces
            .iter()
            .flat_map(|t| t.positions.iter().flat_map(|p| p.contexts.iter()))
            .flat_map(|c| c.frames.iter().flat_map(|f| f.loops.iter().map(|l| l.1)))
            .max()
            .unwrap();
        assert_eq!(max_iter, 4);
        assert_eq!(e.traces.len(), 4);
        assert!(e.stats.loop_bound > 0);
    }

    #[test]
    fn exploration_is_deterministic() {
        let src = "fn main(){ var c = input(0); if (c == 'a' || c == 'b') return 0; if (c >= '0' && c <= '9') return 0; return 1; }";
        let a = dump_traces(&run(src).traces);
        let b = dump_traces(&run(src).traces);
        assert_eq!(a, b);
        assert_eq!(load_traces(&a).unwrap().len(), 3);
    }
}
