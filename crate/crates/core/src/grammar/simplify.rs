//! Language-preserving grammar cleanup.

use std::collections::{BTreeSet, HashSet};

use super::{Alternative, Grammar, Rep, SymKind, Symbol};

#[derive(Debug, Clone, Default)]
pub struct SimplifyOptions {
    /// Nonterminals never inlined.
    pub keep: BTreeSet<String>,
    /// Merge alternatives differing by one symbol into an optional.
    pub optionals: bool,
}

/// Inlines single-alternative, terminal-only nonterminals and optionally
/// folds alternative pairs differing by one nonterminal into `?` symbols,
/// to a fixed point.
pub fn simplify(g: &Grammar, opts: &SimplifyOptions) -> Grammar {
    let mut g = g.clone();
    loop {
        let mut changed = inline_pass(&mut g, opts);
        if opts.optionals {
            changed |= optional_pass(&mut g);
        }
        if !changed {
            break;
        }
    }
    g.prune();
    g.sort_reachable();
    g
}

fn inlinable(g: &Grammar, nt: &str, opts: &SimplifyOptions) -> Option<Alternative> {
    if nt == g.start || opts.keep.contains(nt) {
        return None;
    }
    match g.alternatives(nt) {
        [alt] if alt.iter().all(|s| !matches!(s.kind, SymKind::Nt(_))) => Some(alt.clone()),
        _ => None,
    }
}

fn inline_pass(g: &mut Grammar, opts: &SimplifyOptions) -> bool {
    let targets: Vec<(String, Alternative)> = g
        .rules
        .keys()
        .filter_map(|nt| inlinable(g, nt, opts).map(|a| (nt.clone(), a)))
        .collect();
    let mut changed = false;
    for (target, body) in targets {
        let mut next = Grammar::new(g.start.clone());
        for (nt, alts) in &g.rules {
            for alt in alts {
                let mut out = Vec::with_capacity(alt.len());
                for s in alt {
                    match (&s.kind, s.rep) {
                        (SymKind::Nt(n), Rep::One) if *n == target => {
                            out.extend(body.iter().cloned());
                            changed = true;
                        }
                        (SymKind::Nt(n), rep) if *n == target && body.len() == 1 && body[0].rep == Rep::One => {
                            out.push(body[0].clone().with_rep(rep));
                            changed = true;
                        }
                        _ => out.push(s.clone()),
                    }
                }
                next.add(nt, out);
            }
            if alts.is_empty() {
                next.rules.insert(nt.clone(), Vec::new());
            }
        }
        *g = next;
    }
    if changed {
        g.prune();
    }
    changed
}

/// Position where `long` equals `short` with one nonterminal inserted.
fn inserted_symbol(short: &[Symbol], long: &[Symbol]) -> Option<usize> {
    if long.len() != short.len() + 1 {
        return None;
    }
    let k = short
        .iter()
        .zip(long)
        .position(|(a, b)| a != b)
        .unwrap_or(short.len());
    let is_nt = matches!(long[k].kind, SymKind::Nt(_));
    (is_nt && long[k].rep == Rep::One && short[k..] == long[k + 1..]).then_some(k)
}

fn optional_pass(g: &mut Grammar) -> bool {
    let mut changed = false;
    for alts in g.rules.values_mut() {
        'search: loop {
            for i in 0..alts.len() {
                for j in 0..alts.len() {
                    if i == j {
                        continue;
                    }
                    if let Some(k) = inserted_symbol(&alts[i], &alts[j]) {
                        let mut merged = alts[j].clone();
                        merged[k].rep = Rep::Opt;
                        let (lo, hi) = (i.min(j), i.max(j));
                        alts.remove(hi);
                        alts[lo] = merged;
                        let mut seen = HashSet::new();
                        alts.retain(|a| seen.insert(a.clone()));
                        changed = true;
                        continue 'search;
                    }
                }
            }
            break;
        }
    }
    changed
}
