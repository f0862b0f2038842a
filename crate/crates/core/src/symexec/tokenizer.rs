//! Isolated analysis of a subject's tokenizer: which token identifiers it
//! produces, and from which byte strings.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::subjectlang::{SubjectError, SubjectProgram, TokenSink, TokenizerSpec};
use crate::symcore::{ByteSet, SymVar, Val};

use super::engine::{Detour, Engine, Outcome};
use super::{ExploreConfig, ExploreStats};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenObservation {
    /// Concrete instances, including sampled ones.
    pub instances: BTreeSet<Vec<u8>>,
    /// Per-path byte class sequences the instances were drawn from.
    pub class_seqs: BTreeSet<Vec<ByteSet>>,
}

#[derive(Debug, Clone, Default)]
pub struct TokenAnalysis {
    pub observations: BTreeMap<i64, TokenObservation>,
    pub stats: ExploreStats,
}

impl TokenAnalysis {
    /// Identifiers seen on any path, as a domain for proxied tokens.
    pub fn token_ids(&self) -> ByteSet {
        self.observations
            .keys()
            .filter(|id| (0..=255).contains(*id))
            .map(|id| *id as u8)
            .collect()
    }
}

/// Runs the tokenizer alone on symbolic input, starting with its cursor at
/// zero, and reads the recognized token identifier from the sink.
pub fn analyze_tokenizer(
    program: &SubjectProgram,
    spec: &TokenizerSpec,
    config: &ExploreConfig,
) -> Result<TokenAnalysis, SubjectError> {
    let func = program.function_index(&spec.function)?;
    let cursor = program.global_slot(&spec.cursor)? as usize;
    let sink = match &spec.sink {
        TokenSink::Return => None,
        TokenSink::Global(g) => Some(program.global_slot(g)? as usize),
    };
    let engine = Engine::new(program, config, Detour::None);
    let mut analysis = TokenAnalysis::default();
    let stats = &mut analysis.stats;
    let mut work = VecDeque::from([engine.initial_state(func, ByteSet::EMPTY)]);
    stats.states = 1;
    let mut path = 0u64;
    while let Some(st) = work.pop_front() {
        match engine.run(st) {
            Outcome::Fork(t, f) => {
                if stats.states + 2 > config.max_states {
                    stats.budget_exhausted = true;
                    break;
                }
                stats.states += 2;
                work.push_back(t);
                work.push_back(f);
            }
            Outcome::Dead(d) => stats.record_death(d),
            Outcome::Returned(st, ret) => {
                let id_val = match sink {
                    None => ret,
                    Some(g) => st.globals[g].clone(),
                };
                let ids = match st.domains.possible_values(&id_val) {
                    Ok(ids) if ids.len() == 1 => ids,
                    _ => {
                        stats.dropped += 1;
                        stats.note("token identifier not concrete on a tokenizer path");
                        continue;
                    }
                };
                let id = *ids.iter().next().expect("one id");
                let end = match st.globals[cursor] {
                    Val::Int(c) if c >= 0 => c as u32,
                    _ => {
                        stats.dropped += 1;
                        stats.note("tokenizer cursor not concrete after the call");
                        continue;
                    }
                };
                let classes: Vec<ByteSet> = (0..end)
                    .map(|i| {
                        let mut d = st.domains.get(SymVar::Read(i));
                        d.remove(0);
                        d
                    })
                    .collect();
                if classes.iter().any(|c| c.is_empty()) {
                    stats.dropped += 1;
                    stats.note("tokenizer consumed the end of input");
                    continue;
                }
                stats.accepted += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (path << 32) ^ id as u64);
                path += 1;
                let obs = analysis.observations.entry(id).or_default();
                for _ in 0..config.token_samples.max(1) {
                    let inst: Vec<u8> = classes
                        .iter()
                        .map(|c| c.iter().choose(&mut rng).expect("non-empty class"))
                        .collect();
                    obs.instances.insert(inst);
                }
                obs.class_seqs.insert(classes);
            }
        }
    }
    Ok(analysis)
}
