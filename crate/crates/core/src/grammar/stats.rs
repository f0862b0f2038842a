//! Size measures for grammars.

use serde::Serialize;

use super::{Grammar, Rep, SymKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrammarStats {
    /// Defined nonterminals.
    pub nonterminals: usize,
    /// Alternatives over all nonterminals.
    pub alternatives: usize,
    /// Symbols over all alternatives.
    pub symbols: usize,
    /// Mean symbols per alternative.
    pub mean_alternative_len: f64,
}

/// Counts rules. A nonterminal whose every alternative is a lone character
/// class counts one single-symbol alternative per character.
pub fn stats(g: &Grammar) -> GrammarStats {
    let mut alternatives = 0;
    let mut symbols = 0;
    for alts in g.rules.values() {
        let class_only = !alts.is_empty()
            && alts.iter().all(|a| {
                a.len() == 1 && a[0].rep == Rep::One && matches!(a[0].kind, SymKind::Class(_))
            });
        if class_only {
            let mut chars = crate::symcore::ByteSet::EMPTY;
            for a in alts {
                if let SymKind::Class(c) = &a[0].kind {
                    chars = chars.union(c);
                }
            }
            alternatives += chars.len();
            symbols += chars.len();
        } else {
            alternatives += alts.len();
            symbols += alts.iter().map(Vec::len).sum::<usize>();
        }
    }
    GrammarStats {
        nonterminals: g.rules.len(),
        alternatives,
        symbols,
        mean_alternative_len: if alternatives == 0 {
            0.0
        } else {
            symbols as f64 / alternatives as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_bnf;

    #[test]
    fn counts() {
        let g = parse_bnf("<start> ::= <d> 'x' | ''\n<d> ::= /[0-9]/\n").unwrap();
        let s = stats(&g);
        assert_eq!(s.nonterminals, 2);
        assert_eq!(s.alternatives, 12);
        assert_eq!(s.symbols, 12);
        assert!((s.mean_alternative_len - 1.0).abs() < 1e-9);
    }
}
