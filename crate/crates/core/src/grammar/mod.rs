//! Context-free grammars over bytes, plus serialization, simplification,
//! fuzzing, parsing and statistics.

pub mod bnf;
pub mod derivation;
pub mod earley;
pub mod fuzz;
pub mod simplify;
pub mod stats;

use std::collections::{BTreeSet, HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::symcore::ByteSet;

pub use bnf::{parse_bnf, BnfError};
pub use derivation::DerivationTree;
pub use earley::{parse_with_grammar, ParseOutcome};
pub use fuzz::{fuzz, FuzzConfig, FuzzOutput};
pub use simplify::{simplify, SimplifyOptions};
pub use stats::{stats, GrammarStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rep {
    One,
    Opt,
    Star,
    Plus,
}

impl Rep {
    pub fn suffix(self) -> &'static str {
        match self {
            Rep::One => "",
            Rep::Opt => "?",
            Rep::Star => "*",
            Rep::Plus => "+",
        }
    }

    pub fn min(self) -> usize {
        match self {
            Rep::One | Rep::Plus => 1,
            Rep::Opt | Rep::Star => 0,
        }
    }

    pub fn max(self) -> Option<usize> {
        match self {
            Rep::One | Rep::Opt => Some(1),
            Rep::Star | Rep::Plus => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymKind {
    Nt(String),
    Lit(Vec<u8>),
    #[serde(with = "byteset_serde")]
    Class(ByteSet),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub kind: SymKind,
    pub rep: Rep,
}

impl Symbol {
    pub fn nt(name: impl Into<String>) -> Symbol {
        Symbol {
            kind: SymKind::Nt(name.into()),
            rep: Rep::One,
        }
    }

    pub fn lit(bytes: impl Into<Vec<u8>>) -> Symbol {
        Symbol {
            kind: SymKind::Lit(bytes.into()),
            rep: Rep::One,
        }
    }

    /// A byte class; singletons become one-byte literals.
    pub fn class(set: ByteSet) -> Symbol {
        match set.single() {
            Some(b) => Symbol::lit(vec![b]),
            None => Symbol {
                kind: SymKind::Class(set),
                rep: Rep::One,
            },
        }
    }

    pub fn with_rep(mut self, rep: Rep) -> Symbol {
        self.rep = rep;
        self
    }

    pub fn nt_name(&self) -> Option<&str> {
        match &self.kind {
            SymKind::Nt(n) => Some(n),
            _ => None,
        }
    }
}

pub type Alternative = Vec<Symbol>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub start: String,
    /// Nonterminal to its alternatives, without duplicates.
    pub rules: IndexMap<String, Vec<Alternative>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("nonterminal <{0}> is referenced but not defined")]
    Undefined(String),
    #[error("start symbol <{0}> is not defined")]
    NoStart(String),
    #[error("empty character class in <{0}>")]
    EmptyClass(String),
    #[error("no traces to build a grammar from")]
    Empty,
}

impl Grammar {
    pub fn new(start: impl Into<String>) -> Grammar {
        Grammar {
            start: start.into(),
            rules: IndexMap::new(),
        }
    }

    /// Adds an alternative unless already present.
    pub fn add(&mut self, nt: &str, alt: Alternative) {
        let alts = self.rules.entry(nt.to_string()).or_default();
        if !alts.contains(&alt) {
            alts.push(alt);
        }
    }

    /// Merges the alternatives of `other` into `self`.
    pub fn union(&mut self, other: &Grammar) {
        for (nt, alts) in &other.rules {
            for alt in alts {
                self.add(nt, alt.clone());
            }
        }
    }

    pub fn alternatives(&self, nt: &str) -> &[Alternative] {
        self.rules.get(nt).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        if !self.rules.contains_key(&self.start) {
            return Err(GrammarError::NoStart(self.start.clone()));
        }
        for (nt, alts) in &self.rules {
            for sym in alts.iter().flatten() {
                match &sym.kind {
                    SymKind::Nt(n) if !self.rules.contains_key(n) => {
                        return Err(GrammarError::Undefined(n.clone()))
                    }
                    SymKind::Class(c) if c.is_empty() => {
                        return Err(GrammarError::EmptyClass(nt.clone()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Nonterminals referenced from `nt`'s alternatives.
    pub fn references(&self, nt: &str) -> BTreeSet<&str> {
        self.alternatives(nt)
            .iter()
            .flatten()
            .filter_map(Symbol::nt_name)
            .collect()
    }

    /// Nonterminals reachable from the start symbol, in first-visit order.
    pub fn reachable(&self) -> Vec<String> {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut order = Vec::new();
        let mut stack = vec![self.start.as_str()];
        while let Some(nt) = stack.pop() {
            if !self.rules.contains_key(nt) || !seen.insert(nt) {
                continue;
            }
            order.push(nt.to_string());
            let mut refs: Vec<&str> = self
                .alternatives(nt)
                .iter()
                .flatten()
                .filter_map(Symbol::nt_name)
                .collect();
            refs.reverse();
            stack.extend(refs);
        }
        order
    }

    /// Drops alternatives that mention undefined nonterminals, then
    /// nonterminals left without alternatives, to a fixed point; finally
    /// removes unreachable definitions.
    pub fn prune(&mut self) {
        loop {
            let defined: HashSet<String> = self
                .rules
                .iter()
                .filter(|(_, a)| !a.is_empty())
                .map(|(n, _)| n.clone())
                .collect();
            let mut changed = false;
            for alts in self.rules.values_mut() {
                let before = alts.len();
                alts.retain(|alt| {
                    alt.iter()
                        .filter_map(Symbol::nt_name)
                        .all(|n| defined.contains(n))
                });
                changed |= alts.len() != before;
            }
            let before = self.rules.len();
            self.rules.retain(|_, a| !a.is_empty());
            changed |= self.rules.len() != before;
            if !changed {
                break;
            }
        }
        let keep: HashSet<String> = self.reachable().into_iter().collect();
        self.rules.retain(|n, _| keep.contains(n));
    }

    /// Reorders definitions by first visit from the start symbol, then the
    /// unreachable ones in their current order.
    pub fn sort_reachable(&mut self) {
        let order = self.reachable();
        let mut rules = IndexMap::new();
        for nt in &order {
            if let Some(alts) = self.rules.shift_remove(nt) {
                rules.insert(nt.clone(), alts);
            }
        }
        rules.extend(self.rules.drain(..));
        self.rules = rules;
    }

    /// Whether `nt` can reach itself.
    pub fn is_recursive(&self, nt: &str) -> bool {
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = self.references(nt).into_iter().collect();
        while let Some(n) = stack.pop() {
            if n == nt {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.references(n));
            }
        }
        false
    }

    /// Nonterminals deriving the empty string.
    pub fn nullable(&self) -> HashSet<String> {
        let mut null: HashSet<String> = HashSet::new();
        loop {
            let mut changed = false;
            for (nt, alts) in &self.rules {
                if null.contains(nt) {
                    continue;
                }
                if alts
                    .iter()
                    .any(|alt| alt.iter().all(|s| symbol_nullable(s, &null)))
                {
                    null.insert(nt.clone());
                    changed = true;
                }
            }
            if !changed {
                return null;
            }
        }
    }

    /// Length of the shortest string each nonterminal derives; absent when
    /// a nonterminal derives no finite string.
    pub fn min_lengths(&self) -> HashMap<String, usize> {
        let mut best: HashMap<String, usize> = HashMap::new();
        loop {
            let mut changed = false;
            for (nt, alts) in &self.rules {
                for alt in alts {
                    if let Some(len) = alt_min_len(alt, &best) {
                        if best.get(nt).map_or(true, |b| len < *b) {
                            best.insert(nt.clone(), len);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return best;
            }
        }
    }

    /// Number of nonterminals with a definition.
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grammar serializes")
    }

    pub fn from_json(text: &str) -> Result<Grammar, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Renames nonterminals through `map`; unmapped names stay.
    pub fn rename(&self, map: &HashMap<String, String>) -> Grammar {
        let re = |n: &String| map.get(n).cloned().unwrap_or_else(|| n.clone());
        let mut g = Grammar::new(re(&self.start));
        for (nt, alts) in &self.rules {
            for alt in alts {
                let alt = alt
                    .iter()
                    .map(|s| match &s.kind {
                        SymKind::Nt(n) => Symbol::nt(re(n)).with_rep(s.rep),
                        _ => s.clone(),
                    })
                    .collect();
                g.add(&re(nt), alt);
            }
        }
        g
    }
}

fn symbol_nullable(s: &Symbol, null: &HashSet<String>) -> bool {
    if s.rep.min() == 0 {
        return true;
    }
    match &s.kind {
        SymKind::Nt(n) => null.contains(n),
        SymKind::Lit(b) => b.is_empty(),
        SymKind::Class(_) => false,
    }
}

/// Shortest yield of one alternative under known per-nonterminal minima.
pub(crate) fn alt_min_len(alt: &[Symbol], best: &HashMap<String, usize>) -> Option<usize> {
    let mut total = 0usize;
    for s in alt {
        let one = match &s.kind {
            SymKind::Nt(n) => *best.get(n)?,
            SymKind::Lit(b) => b.len(),
            SymKind::Class(_) => 1,
        };
        total += one * s.rep.min();
    }
    Some(total)
}

mod byteset_serde {
    use super::ByteSet;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(set: &ByteSet, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&set.to_hex_ranges())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ByteSet, D::Error> {
        let text = String::deserialize(d)?;
        ByteSet::from_hex_ranges(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("bad byte ranges `{text}`")))
    }
}
