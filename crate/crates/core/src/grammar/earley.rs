//! Earley recognition with derivation recovery. Quantified symbols are
//! rewritten into helper rules first and folded back into the tree.

use std::collections::{HashMap, HashSet};

use super::{DerivationTree, Grammar, Rep, SymKind, Symbol};
use crate::symcore::ByteSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ISym {
    Nt(u32),
    Term(ByteSet),
}

#[derive(Debug, Clone)]
enum Origin {
    /// A grammar nonterminal.
    User(String),
    /// Wraps a terminal that carries a quantifier.
    Atom,
    Opt,
    Star,
    Plus,
}

#[derive(Debug, Clone)]
struct IRule {
    lhs: u32,
    syms: Vec<ISym>,
    /// Index into the original alternative, per internal symbol.
    source: Vec<usize>,
    /// Alternative index in the original grammar, for user rules.
    alt: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Accepted(DerivationTree),
    /// Length of the longest prefix that can still be extended to a sentence.
    Rejected { furthest: usize },
}

impl ParseOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ParseOutcome::Accepted(_))
    }
}

/// A grammar prepared for repeated parsing.
#[derive(Debug, Clone)]
pub struct EarleyParser {
    origins: Vec<Origin>,
    rules: Vec<IRule>,
    by_lhs: Vec<Vec<u32>>,
    nullable: Vec<bool>,
    start: Option<u32>,
}

type Item = (u32, u32, u32);

struct Chart {
    sets: Vec<Vec<Item>>,
    /// Per set: completed `(rule, origin)` pairs.
    done: Vec<HashSet<(u32, u32)>>,
}

impl EarleyParser {
    pub fn new(g: &Grammar) -> EarleyParser {
        let mut p = EarleyParser {
            origins: Vec::new(),
            rules: Vec::new(),
            by_lhs: Vec::new(),
            nullable: Vec::new(),
            start: None,
        };
        let mut ids: HashMap<String, u32> = HashMap::new();
        for name in g.rules.keys() {
            let id = p.origins.len() as u32;
            p.origins.push(Origin::User(name.clone()));
            ids.insert(name.clone(), id);
        }
        p.by_lhs = vec![Vec::new(); p.origins.len()];
        let mut helpers: HashMap<(Symbol, Rep), u32> = HashMap::new();
        for (name, alts) in &g.rules {
            let lhs = ids[name];
            for (ai, alt) in alts.iter().enumerate() {
                let mut syms = Vec::new();
                let mut source = Vec::new();
                for (si, sym) in alt.iter().enumerate() {
                    for s in p.lower(sym, &ids, &mut helpers) {
                        syms.push(s);
                        source.push(si);
                    }
                }
                p.push_rule(lhs, syms, source, ai);
            }
        }
        p.start = ids.get(&g.start).copied();
        p.compute_nullable();
        p
    }

    fn push_rule(&mut self, lhs: u32, syms: Vec<ISym>, source: Vec<usize>, alt: usize) {
        let id = self.rules.len() as u32;
        self.rules.push(IRule {
            lhs,
            syms,
            source,
            alt,
        });
        self.by_lhs[lhs as usize].push(id);
    }

    fn new_nt(&mut self, origin: Origin) -> u32 {
        self.origins.push(origin);
        self.by_lhs.push(Vec::new());
        (self.origins.len() - 1) as u32
    }

    /// Internal symbols for one grammar symbol. A nonterminal missing from
    /// the grammar lowers to an empty class and so never matches.
    fn lower(
        &mut self,
        sym: &Symbol,
        ids: &HashMap<String, u32>,
        helpers: &mut HashMap<(Symbol, Rep), u32>,
    ) -> Vec<ISym> {
        let base_one = || match &sym.kind {
            SymKind::Nt(n) => vec![ids
                .get(n)
                .map(|i| ISym::Nt(*i))
                .unwrap_or(ISym::Term(ByteSet::EMPTY))],
            SymKind::Lit(b) => b.iter().map(|c| ISym::Term(ByteSet::singleton(*c))).collect(),
            SymKind::Class(c) => vec![ISym::Term(*c)],
        };
        if sym.rep == Rep::One {
            return base_one();
        }
        let plain = sym.clone().with_rep(Rep::One);
        let key = (plain.clone(), sym.rep);
        if let Some(&h) = helpers.get(&key) {
            return vec![ISym::Nt(h)];
        }
        let base = match &sym.kind {
            SymKind::Nt(_) => base_one()[0],
            _ => {
                let atom_key = (plain.clone(), Rep::One);
                match helpers.get(&atom_key) {
                    Some(&a) => ISym::Nt(a),
                    None => {
                        let a = self.new_nt(Origin::Atom);
                        let syms = base_one();
                        let n = syms.len();
                        self.push_rule(a, syms, vec![0; n], 0);
                        helpers.insert(atom_key, a);
                        ISym::Nt(a)
                    }
                }
            }
        };
        let h = match sym.rep {
            Rep::Opt => {
                let h = self.new_nt(Origin::Opt);
                self.push_rule(h, vec![], vec![], 0);
                self.push_rule(h, vec![base], vec![0], 1);
                h
            }
            Rep::Star => {
                let h = self.new_nt(Origin::Star);
                self.push_rule(h, vec![], vec![], 0);
                self.push_rule(h, vec![base, ISym::Nt(h)], vec![0, 0], 1);
                h
            }
            Rep::Plus => {
                let star = self.lower(&plain.clone().with_rep(Rep::Star), ids, helpers)[0];
                let h = self.new_nt(Origin::Plus);
                self.push_rule(h, vec![base, star], vec![0, 0], 0);
                h
            }
            Rep::One => unreachable!(),
        };
        helpers.insert(key, h);
        vec![ISym::Nt(h)]
    }

    fn compute_nullable(&mut self) {
        self.nullable = vec![false; self.origins.len()];
        loop {
            let mut changed = false;
            for r in &self.rules {
                if !self.nullable[r.lhs as usize]
                    && r.syms.iter().all(|s| match s {
                        ISym::Nt(n) => self.nullable[*n as usize],
                        ISym::Term(_) => false,
                    })
                {
                    self.nullable[r.lhs as usize] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn chart(&self, input: &[u8]) -> Chart {
        let n = input.len();
        let mut sets: Vec<Vec<Item>> = vec![Vec::new(); n + 1];
        let mut seen: Vec<HashSet<Item>> = vec![HashSet::new(); n + 1];
        let mut done: Vec<HashSet<(u32, u32)>> = vec![HashSet::new(); n + 1];
        // waiting[i][nt]: items in set i with the dot before nt
        let mut waiting: Vec<HashMap<u32, Vec<Item>>> = vec![HashMap::new(); n + 1];
        let Some(start) = self.start else {
            return Chart { sets, done };
        };
        let add = |sets: &mut Vec<Vec<Item>>, seen: &mut Vec<HashSet<Item>>, i: usize, it: Item| {
            if seen[i].insert(it) {
                sets[i].push(it);
            }
        };
        for &r in &self.by_lhs[start as usize] {
            add(&mut sets, &mut seen, 0, (r, 0, 0));
        }
        for i in 0..=n {
            let mut k = 0;
            while k < sets[i].len() {
                let (r, d, o) = sets[i][k];
                k += 1;
                let rule = &self.rules[r as usize];
                match rule.syms.get(d as usize) {
                    None => {
                        done[i].insert((r, o));
                        let parents = waiting[o as usize]
                            .get(&rule.lhs)
                            .cloned()
                            .unwrap_or_default();
                        for (pr, pd, po) in parents {
                            add(&mut sets, &mut seen, i, (pr, pd + 1, po));
                        }
                    }
                    Some(ISym::Nt(b)) => {
                        waiting[i].entry(*b).or_default().push((r, d, o));
                        for &r2 in &self.by_lhs[*b as usize] {
                            add(&mut sets, &mut seen, i, (r2, 0, i as u32));
                        }
                        if self.nullable[*b as usize] {
                            add(&mut sets, &mut seen, i, (r, d + 1, o));
                        }
                    }
                    Some(ISym::Term(set)) => {
                        if i < n && set.contains(input[i]) {
                            add(&mut sets, &mut seen, i + 1, (r, d + 1, o));
                        }
                    }
                }
            }
        }
        Chart { sets, done }
    }

    fn accepted(&self, chart: &Chart, n: usize) -> bool {
        let Some(start) = self.start else { return false };
        self.by_lhs[start as usize]
            .iter()
            .any(|r| chart.done[n].contains(&(*r, 0)))
    }

    pub fn accepts(&self, input: &[u8]) -> bool {
        self.accepted(&self.chart(input), input.len())
    }

    pub fn parse(&self, input: &[u8]) -> ParseOutcome {
        let chart = self.chart(input);
        let n = input.len();
        if !self.accepted(&chart, n) {
            let furthest = (0..=n).rev().find(|i| !chart.sets[*i].is_empty()).unwrap_or(0);
            return ParseOutcome::Rejected { furthest };
        }
        let mut ex = Extractor {
            p: self,
            input,
            chart: &chart,
            memo: HashMap::new(),
            active: HashSet::new(),
        };
        let start = self.start.expect("accepted implies start");
        let tree = ex
            .derive(start, 0, n as u32)
            .expect("accepted input has a derivation");
        ParseOutcome::Accepted(self.fold(&tree))
    }

    fn fold(&self, t: &IDeriv) -> DerivationTree {
        let rule = &self.rules[t.rule as usize];
        match &self.origins[rule.lhs as usize] {
            Origin::User(name) => {
                let width = rule.source.iter().map(|s| s + 1).max().unwrap_or(0);
                let mut items: Vec<Vec<DerivationTree>> = vec![Vec::new(); width];
                for (child, &s) in t.children.iter().zip(&rule.source) {
                    match child {
                        IChild::Byte(b) => match items[s].last_mut() {
                            Some(DerivationTree::Leaf(bytes)) => bytes.push(*b),
                            _ => items[s].push(DerivationTree::Leaf(vec![*b])),
                        },
                        IChild::Node(sub) => {
                            let lhs = self.rules[sub.rule as usize].lhs as usize;
                            match self.origins[lhs] {
                                Origin::User(_) => items[s].push(self.fold(sub)),
                                _ => items[s].extend(self.repetitions(sub)),
                            }
                        }
                    }
                }
                DerivationTree::Node {
                    nt: name.clone(),
                    alt: rule.alt,
                    items,
                }
            }
            _ => panic!("helper rules are folded by their parent"),
        }
    }

    fn repetitions(&self, t: &IDeriv) -> Vec<DerivationTree> {
        let rule = &self.rules[t.rule as usize];
        match self.origins[rule.lhs as usize] {
            Origin::Atom => {
                let bytes = t
                    .children
                    .iter()
                    .map(|c| match c {
                        IChild::Byte(b) => *b,
                        IChild::Node(_) => unreachable!("atoms hold terminals"),
                    })
                    .collect();
                vec![DerivationTree::Leaf(bytes)]
            }
            Origin::User(_) => vec![self.fold(t)],
            Origin::Opt | Origin::Star | Origin::Plus => {
                let mut out = Vec::new();
                for c in &t.children {
                    if let IChild::Node(sub) = c {
                        let lhs = self.rules[sub.rule as usize].lhs as usize;
                        match self.origins[lhs] {
                            Origin::User(_) => out.push(self.fold(sub)),
                            _ => out.extend(self.repetitions(sub)),
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
enum IChild {
    Byte(u8),
    Node(IDeriv),
}

#[derive(Debug, Clone)]
struct IDeriv {
    rule: u32,
    children: Vec<IChild>,
}

struct Extractor<'a> {
    p: &'a EarleyParser,
    input: &'a [u8],
    chart: &'a Chart,
    memo: HashMap<(u32, u32, u32, u32), bool>,
    active: HashSet<(u32, u32, u32)>,
}

impl Extractor<'_> {
    fn completed(&self, rule: u32, from: u32, to: u32) -> bool {
        self.chart.done[to as usize].contains(&(rule, from))
    }

    fn nt_completed(&self, nt: u32, from: u32, to: u32) -> bool {
        self.p.by_lhs[nt as usize]
            .iter()
            .any(|r| self.completed(*r, from, to))
    }

    /// Whether symbols `k..` of `rule` can span `p..j`.
    fn can_match(&mut self, rule: u32, k: u32, p: u32, j: u32) -> bool {
        let syms = &self.p.rules[rule as usize].syms;
        if k as usize == syms.len() {
            return p == j;
        }
        if let Some(&v) = self.memo.get(&(rule, k, p, j)) {
            return v;
        }
        let v = match syms[k as usize] {
            ISym::Term(set) => {
                p < j && set.contains(self.input[p as usize]) && self.can_match(rule, k + 1, p + 1, j)
            }
            ISym::Nt(b) => (p..=j).any(|q| self.nt_completed(b, p, q) && self.can_match(rule, k + 1, q, j)),
        };
        self.memo.insert((rule, k, p, j), v);
        v
    }

    fn derive(&mut self, nt: u32, i: u32, j: u32) -> Option<IDeriv> {
        if !self.active.insert((nt, i, j)) {
            return None;
        }
        let mut result = None;
        for &r in &self.p.by_lhs[nt as usize] {
            if self.completed(r, i, j) && self.can_match(r, 0, i, j) {
                if let Some(children) = self.build(r, 0, i, j) {
                    result = Some(IDeriv { rule: r, children });
                    break;
                }
            }
        }
        self.active.remove(&(nt, i, j));
        result
    }

    fn build(&mut self, rule: u32, k: u32, p: u32, j: u32) -> Option<Vec<IChild>> {
        let syms = &self.p.rules[rule as usize].syms;
        if k as usize == syms.len() {
            return (p == j).then(Vec::new);
        }
        match syms[k as usize] {
            ISym::Term(_) => {
                let mut rest = self.build(rule, k + 1, p + 1, j)?;
                rest.insert(0, IChild::Byte(self.input[p as usize]));
                Some(rest)
            }
            ISym::Nt(b) => {
                for q in p..=j {
                    if self.nt_completed(b, p, q) && self.can_match(rule, k + 1, q, j) {
                        if let Some(sub) = self.derive(b, p, q) {
                            if let Some(mut rest) = self.build(rule, k + 1, q, j) {
                                rest.insert(0, IChild::Node(sub));
                                return Some(rest);
                            }
                        }
                    }
                }
                None
            }
        }
    }
}

/// Parses `input` with `g`, returning a derivation or the furthest position.
pub fn parse_with_grammar(g: &Grammar, input: &[u8]) -> ParseOutcome {
    EarleyParser::new(g).parse(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_bnf;

    fn g(text: &str) -> Grammar {
        parse_bnf(text).unwrap()
    }

    #[test]
    fn fig9_language() {
        let gr = g(r#"
<start> ::= <parse>
<parse> ::= <value>
<value> ::= '[' <array>
<array> ::= <L1>
<L1> ::= <L1_continue> <L1> | <L1_exit>
<L1_continue> ::= /[0-9]/ ','
<L1_exit> ::= '"' '"' ']'
"#);
        let p = EarleyParser::new(&gr);
        assert!(p.accepts(b"[0,\"\"]"));
        assert!(p.accepts(b"[1,5,8,\"\"]"));
        assert!(!p.accepts(b"[0,"));
        match p.parse(b"[0,") {
            ParseOutcome::Rejected { furthest } => assert_eq!(furthest, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_string() {
        let gr = g("<start> ::= ''");
        assert!(EarleyParser::new(&gr).accepts(b""));
        assert!(!EarleyParser::new(&gr).accepts(b"a"));
    }

    #[test]
    fn quantifiers_fold_into_repetitions() {
        let gr = g("<start> ::= 'ab'* <d>+ <x>?\n<d> ::= /[0-9]/\n<x> ::= 'x'\n");
        let out = parse_with_grammar(&gr, b"abab12");
        let ParseOutcome::Accepted(t) = out else { panic!() };
        assert_eq!(t.yield_bytes(), b"abab12");
        assert!(t.conforms(&gr));
        let DerivationTree::Node { items, .. } = &t else { panic!() };
        assert_eq!(items[0].len(), 2);
        assert_eq!(items[1].len(), 2);
        assert_eq!(items[2].len(), 0);
    }

    #[test]
    fn ambiguity_prefers_first_alternative() {
        let gr = g("<start> ::= <a> | <b>\n<a> ::= 'x'\n<b> ::= 'x'\n");
        let ParseOutcome::Accepted(t) = parse_with_grammar(&gr, b"x") else { panic!() };
        let DerivationTree::Node { alt, .. } = t else { panic!() };
        assert_eq!(alt, 0);
    }

    #[test]
    fn nullable_cycles_terminate() {
        let gr = g("<start> ::= <a> 'x'\n<a> ::= <b> | ''\n<b> ::= <a>\n");
        let ParseOutcome::Accepted(t) = parse_with_grammar(&gr, b"x") else { panic!() };
        assert!(t.conforms(&gr));
    }
}
