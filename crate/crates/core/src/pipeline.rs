//! End-to-end mining: exploration, consumption, inference, token
//! generalization and simplification.

use std::collections::{BTreeMap, BTreeSet};

use crate::grammar::{simplify, Grammar, GrammarError, SimplifyOptions, Symbol};
use crate::inference::{traces_to_grammar, InferError, InferOptions};
use crate::subjectlang::{Subject, SubjectError};
use crate::symexec::{analyze_tokenizer, explore, explore_with_proxy, ExploreConfig, ExploreStats, Trace};
use crate::tokens::{external_observations, generalize_tokens, CategoryTable, TokenReport};

#[derive(Debug, Clone)]
pub struct MineConfig {
    pub explore: ExploreConfig,
    pub optionals: bool,
    pub categories: CategoryTable,
}

impl MineConfig {
    /// Defaults with the subject manifest's bounds applied.
    pub fn for_subject(subject: &Subject) -> MineConfig {
        let mut explore = ExploreConfig::default();
        if let Some(n) = subject.manifest.max_input_len {
            explore.max_input_len = n;
        }
        if let Some(n) = subject.manifest.max_states {
            explore.max_states = n;
        }
        MineConfig {
            explore,
            optionals: true,
            categories: CategoryTable::builtin(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error(transparent)]
    Subject(#[from] SubjectError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("mined grammar is malformed: {0}")]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone)]
pub struct MineResult {
    pub grammar: Grammar,
    /// Grammar before token generalization and simplification.
    pub raw: Grammar,
    /// Grammar after token generalization, before simplification.
    pub generalized: Grammar,
    /// Observed instances per token, for subjects with a tokenizer.
    pub token_grammar: Option<Grammar>,
    pub traces: Vec<Trace>,
    pub stats: ExploreStats,
    pub token_stats: Option<ExploreStats>,
    pub token_reports: Vec<TokenReport>,
    pub traces_used: usize,
}

pub fn mine(subject: &Subject, config: &MineConfig) -> Result<MineResult, MineError> {
    let program = &subject.program;
    let mut opts = InferOptions::default();
    let (exploration, observations, token_stats, token_grammar) = match &subject.manifest.tokenizer {
        Some(spec) => {
            opts.token_names = spec.names.clone();
            let analysis = analyze_tokenizer(program, spec, &config.explore)?;
            let ex = explore_with_proxy(program, &spec.function, &spec.sink, analysis.token_ids(), &config.explore)?;
            let mut obs: BTreeMap<String, BTreeSet<Vec<u8>>> = BTreeMap::new();
            for (id, o) in &analysis.observations {
                if let Ok(id) = u8::try_from(*id) {
                    obs.entry(opts.token_name(id)).or_default().extend(o.instances.iter().cloned());
                }
            }
            let tg = instance_grammar(&obs);
            (ex, obs, Some(analysis.stats), Some(tg))
        }
        None => (explore(program, &config.explore), BTreeMap::new(), None, None),
    };
    let inferred = traces_to_grammar(&exploration.traces, &opts)?;
    let raw = inferred.grammar.clone();
    let observations = if subject.manifest.tokenizer.is_some() {
        observations
            .into_iter()
            .filter(|(name, _)| inferred.token_nonterminals.contains(name))
            .collect()
    } else {
        external_observations(&raw, &subject.manifest.external)
    };
    let (generalized, token_reports) = generalize_tokens(&raw, &observations, &config.categories);
    let mut keep = inferred.loop_nonterminals.clone();
    keep.extend(inferred.token_nonterminals.iter().cloned());
    keep.extend(observations.keys().cloned());
    keep.extend(generalized.rules.keys().filter(|n| !raw.rules.contains_key(*n)).cloned());
    let grammar = simplify(
        &generalized,
        &SimplifyOptions {
            keep,
            optionals: config.optionals,
        },
    );
    grammar.validate()?;
    Ok(MineResult {
        grammar,
        raw,
        generalized,
        token_grammar,
        traces: exploration.traces,
        stats: exploration.stats,
        token_stats,
        token_reports,
        traces_used: inferred.traces_used,
    })
}

/// Token nonterminals listing their observed instances verbatim.
pub fn instance_grammar(obs: &BTreeMap<String, BTreeSet<Vec<u8>>>) -> Grammar {
    let mut g = Grammar::new("start");
    for name in obs.keys() {
        g.add("start", vec![Symbol::nt(name.clone())]);
    }
    for (name, instances) in obs {
        for i in instances {
            let alt = if i.is_empty() { vec![] } else { vec![Symbol::lit(i.clone())] };
            g.add(name, alt);
        }
    }
    g
}
