//! Generalization of observed token instances into string categories.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::bytes::Regex;
use serde::Serialize;

use crate::grammar::{parse_bnf, Alternative, Grammar, Rep, SymKind, Symbol};
use crate::symcore::ByteSet;

const BUILTIN: &str = include_str!("categories.txt");

/// Token nonterminals with at most this many distinct instances are kept
/// as literal alternatives.
pub const VERBATIM_LIMIT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("category table line {line}: {msg}")]
pub struct CategoryError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone)]
pub struct Category {
    pub name: String,
    pub rank: usize,
    matcher: Regex,
    /// Rule body for a token in this category.
    pub body: Alternative,
    /// Nonterminals the body refers to.
    pub support: Grammar,
}

impl Category {
    pub fn matches(&self, instance: &[u8]) -> bool {
        self.matcher.is_match(instance)
    }
}

#[derive(Debug, Clone)]
pub struct CategoryTable {
    pub categories: Vec<Category>,
}

impl CategoryTable {
    pub fn builtin() -> CategoryTable {
        CategoryTable::parse(BUILTIN).expect("builtin category table is valid")
    }

    pub fn load(path: &Path) -> Result<CategoryTable, CategoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| CategoryError {
            line: 0,
            msg: e.to_string(),
        })?;
        CategoryTable::parse(&text)
    }

    pub fn parse(text: &str) -> Result<CategoryTable, CategoryError> {
        struct Pending {
            name: String,
            line: usize,
            pattern: Option<String>,
            body: Option<String>,
            rules: String,
        }
        let mut pending: Vec<Pending> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: &str| CategoryError {
                line: i + 1,
                msg: msg.to_string(),
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                pending.push(Pending {
                    name: name.trim().to_string(),
                    line: i + 1,
                    pattern: None,
                    body: None,
                    rules: String::new(),
                });
                continue;
            }
            let cur = pending.last_mut().ok_or_else(|| err("entry before any [category]"))?;
            if let Some(p) = line.strip_prefix("pattern").map(str::trim_start).and_then(|l| l.strip_prefix('=')) {
                cur.pattern = Some(p.trim().to_string());
            } else if let Some(u) = line.strip_prefix("use").map(str::trim_start).and_then(|l| l.strip_prefix('=')) {
                cur.body = Some(u.trim().to_string());
            } else if line.starts_with('<') {
                cur.rules.push_str(raw);
                cur.rules.push('\n');
            } else {
                return Err(err("expected `pattern =`, `use =` or a rule"));
            }
        }
        let mut categories = Vec::new();
        for (rank, p) in pending.into_iter().enumerate() {
            let err = |msg: String| CategoryError { line: p.line, msg };
            let pattern = p.pattern.ok_or_else(|| err(format!("[{}] lacks a pattern", p.name)))?;
            let body = p.body.ok_or_else(|| err(format!("[{}] lacks `use`", p.name)))?;
            let matcher = Regex::new(&format!("(?-u)^(?:{pattern})$")).map_err(|e| err(e.to_string()))?;
            let wrapped = format!("<__use> ::= {body}\n{}", p.rules);
            let mut support = parse_bnf(&wrapped).map_err(|e| err(e.to_string()))?;
            let body = support.rules.shift_remove("__use").expect("just defined").remove(0);
            if let Some(first) = support.rules.keys().next().cloned() {
                support.start = first;
            }
            for sym in &body {
                if let SymKind::Nt(n) = &sym.kind {
                    if !support.rules.contains_key(n) {
                        return Err(err(format!("<{n}> is used but not defined")));
                    }
                }
            }
            categories.push(Category {
                name: p.name,
                rank,
                matcher,
                body,
                support,
            });
        }
        if categories.is_empty() {
            return Err(CategoryError {
                line: 0,
                msg: "no categories".into(),
            });
        }
        Ok(CategoryTable { categories })
    }

    /// The least permissive category accepting every instance, or the most
    /// permissive one when none does.
    pub fn match_category<'a>(&self, instances: impl IntoIterator<Item = &'a [u8]> + Clone) -> (&Category, bool) {
        for c in &self.categories {
            if instances.clone().into_iter().all(|i| c.matches(i)) {
                return (c, true);
            }
        }
        (self.categories.last().expect("non-empty"), false)
    }
}

const WHITESPACE: &[u8] = b" \t\r\n";

fn strip_whitespace(s: &[u8]) -> (&[u8], bool) {
    let n = s.iter().take_while(|b| WHITESPACE.contains(b)).count();
    (&s[n..], n > 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TokenRule {
    Verbatim { instances: Vec<String> },
    Category { category: String, covered: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenReport {
    pub token: String,
    pub distinct: usize,
    pub leading_whitespace: bool,
    pub rule: TokenRule,
}

/// Defines each token nonterminal from its observed instances: literals
/// when few, otherwise the category covering all of them. Leading
/// whitespace is factored into an optional prefix over the whitespace
/// bytes observed.
pub fn generalize_tokens(
    g: &Grammar,
    observations: &BTreeMap<String, BTreeSet<Vec<u8>>>,
    table: &CategoryTable,
) -> (Grammar, Vec<TokenReport>) {
    let mut out = g.clone();
    let mut reports = Vec::new();
    for (token, instances) in observations {
        if instances.is_empty() {
            continue;
        }
        let stripped: BTreeSet<&[u8]> = instances.iter().map(|i| strip_whitespace(i).0).collect();
        let ws_bytes: ByteSet = instances
            .iter()
            .flat_map(|i| i.iter().take_while(|b| WHITESPACE.contains(b)).copied())
            .collect();
        let ws = !ws_bytes.is_empty();
        let prefix: Vec<Symbol> = if ws {
            vec![Symbol::class(ws_bytes).with_rep(Rep::Star)]
        } else {
            Vec::new()
        };
        out.rules.shift_remove(token.as_str());
        let rule = if stripped.len() <= VERBATIM_LIMIT {
            for s in &stripped {
                let mut alt = prefix.clone();
                if !s.is_empty() {
                    alt.push(Symbol::lit(s.to_vec()));
                }
                out.add(token, alt);
            }
            TokenRule::Verbatim {
                instances: stripped.iter().map(|s| String::from_utf8_lossy(s).into_owned()).collect(),
            }
        } else {
            let (cat, covered) = table.match_category(stripped.iter().copied());
            let support = rename_apart(&cat.support, &out);
            let body: Alternative = cat
                .body
                .iter()
                .map(|s| match &s.kind {
                    SymKind::Nt(n) => Symbol::nt(support.1.get(n).cloned().unwrap_or_else(|| n.clone())).with_rep(s.rep),
                    _ => s.clone(),
                })
                .collect();
            out.union(&support.0);
            let mut alt = prefix.clone();
            alt.extend(body);
            out.add(token, alt);
            TokenRule::Category {
                category: cat.name.clone(),
                covered,
            }
        };
        reports.push(TokenReport {
            token: token.clone(),
            distinct: stripped.len(),
            leading_whitespace: ws,
            rule,
        });
    }
    (out, reports)
}

/// Renames category helpers that clash with differently defined
/// nonterminals already in `g`.
fn rename_apart(support: &Grammar, g: &Grammar) -> (Grammar, BTreeMap<String, String>) {
    let mut map = std::collections::HashMap::new();
    for (nt, alts) in &support.rules {
        if let Some(existing) = g.rules.get(nt) {
            if existing != alts {
                let mut k = 1;
                let fresh = loop {
                    let cand = format!("{nt}_{k}");
                    if !g.rules.contains_key(&cand) && !support.rules.contains_key(&cand) {
                        break cand;
                    }
                    k += 1;
                };
                map.insert(nt.clone(), fresh);
            }
        }
    }
    let renamed = support.rename(&map);
    (renamed, map.into_iter().collect())
}

/// Concrete strings spelled by a terminal-only alternative, with each
/// class expanded up to `limit` strings in total.
pub fn alternative_instances(alt: &[Symbol], limit: usize) -> Option<BTreeSet<Vec<u8>>> {
    let mut acc: Vec<Vec<u8>> = vec![Vec::new()];
    for s in alt {
        if s.rep != Rep::One {
            return None;
        }
        let options: Vec<Vec<u8>> = match &s.kind {
            SymKind::Nt(_) => return None,
            SymKind::Lit(b) => vec![b.clone()],
            SymKind::Class(c) => c.iter().map(|b| vec![b]).collect(),
        };
        let mut next = Vec::new();
        'outer: for a in &acc {
            for o in &options {
                if next.len() >= limit {
                    break 'outer;
                }
                let mut v = a.clone();
                v.extend_from_slice(o);
                next.push(v);
            }
        }
        acc = next;
    }
    Some(acc.into_iter().collect())
}

/// Instances for nonterminals produced from external functions, taken from
/// their terminal-only alternatives.
pub fn external_observations(g: &Grammar, externals: &[String]) -> BTreeMap<String, BTreeSet<Vec<u8>>> {
    let mut out = BTreeMap::new();
    for (nt, alts) in &g.rules {
        let base = nt.trim_end_matches('\'');
        if !externals.iter().any(|e| e == base) {
            continue;
        }
        let mut all = BTreeSet::new();
        for alt in alts {
            match alternative_instances(alt, 64) {
                Some(i) => all.extend(i),
                None => {
                    all.clear();
                    break;
                }
            }
        }
        if !all.is_empty() {
            out.insert(nt.clone(), all);
        }
    }
    out
}
