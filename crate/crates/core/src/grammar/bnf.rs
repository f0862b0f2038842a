//! BNF text format.
//!
//! ```text
//! <start> ::= <value>
//! <value> ::= '[' <items> ']'
//!           | /[0-9]/+
//!           | ''
//! ```
//!
//! Literals take single or double quotes, classes are `/[...]/`, and any
//! symbol may carry a `?`, `*` or `+` suffix. `#` starts a comment.

use std::fmt::Write as _;

use super::{Alternative, Grammar, Rep, SymKind, Symbol};
use crate::symcore::ByteSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("BNF error at {line}:{col}: {msg}")]
pub struct BnfError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn escape_byte(b: u8, special: &[u8], out: &mut String) {
    match b {
        b'\n' => out.push_str("\\n"),
        b'\t' => out.push_str("\\t"),
        b'\r' => out.push_str("\\r"),
        b'\\' => out.push_str("\\\\"),
        _ if special.contains(&b) => {
            out.push('\\');
            out.push(b as char);
        }
        0x20..=0x7e => out.push(b as char),
        _ => {
            let _ = write!(out, "\\x{b:02x}");
        }
    }
}

pub fn format_literal(bytes: &[u8]) -> String {
    let mut s = String::from("'");
    for &b in bytes {
        escape_byte(b, b"'", &mut s);
    }
    s.push('\'');
    s
}

pub fn format_class(set: &ByteSet) -> String {
    let mut s = String::from("/[");
    for (lo, hi) in set.ranges() {
        escape_byte(lo, b"]-^/", &mut s);
        if hi > lo {
            if hi > lo + 1 {
                s.push('-');
            }
            escape_byte(hi, b"]-^/", &mut s);
        }
    }
    s.push_str("]/");
    s
}

pub fn format_symbol(sym: &Symbol) -> String {
    let body = match &sym.kind {
        SymKind::Nt(n) => format!("<{n}>"),
        SymKind::Lit(b) => format_literal(b),
        SymKind::Class(c) => format_class(c),
    };
    format!("{body}{}", sym.rep.suffix())
}

pub fn format_alternative(alt: &[Symbol]) -> String {
    if alt.is_empty() {
        return "''".to_string();
    }
    alt.iter().map(format_symbol).collect::<Vec<_>>().join(" ")
}

/// Renders the grammar with the start rule first and `::=` aligned.
/// One rule on a single line, e.g. `<a> ::= 'x' | <b>`.
pub fn format_rule(name: &str, alts: &[Alternative]) -> String {
    let body: Vec<String> = alts.iter().map(|a| format_alternative(a)).collect();
    format!("<{name}> ::= {}", body.join(" | "))
}

pub fn to_bnf(g: &Grammar) -> String {
    let mut names: Vec<&String> = Vec::new();
    if g.rules.contains_key(&g.start) {
        names.push(&g.start);
    }
    names.extend(g.rules.keys().filter(|n| **n != g.start));
    let width = names.iter().map(|n| n.len() + 2).max().unwrap_or(0);
    let mut out = String::new();
    for name in names {
        let head = format!("<{name}>");
        for (i, alt) in g.rules[name].iter().enumerate() {
            if i == 0 {
                let _ = writeln!(out, "{head:<width$} ::= {}", format_alternative(alt));
            } else {
                let _ = writeln!(out, "{:<width$}   | {}", "", format_alternative(alt));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Nt(String),
    Def,
    Bar,
    Lit(Vec<u8>),
    Class(ByteSet),
    Quant(Rep),
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, msg: impl Into<String>) -> BnfError {
        BnfError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.i).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.i += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn escape(&mut self) -> Result<u8, BnfError> {
        let e = self.bump().ok_or_else(|| self.err("unterminated escape"))?;
        Ok(match e {
            b'n' => b'\n',
            b't' => b'\t',
            b'r' => b'\r',
            b'0' => 0,
            b'x' => {
                let hex: Vec<u8> = (0..2).filter_map(|_| self.bump()).collect();
                std::str::from_utf8(&hex)
                    .ok()
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| self.err("bad \\x escape"))?
            }
            other => other,
        })
    }

    fn tokens(&mut self) -> Result<Vec<(Tok, usize, usize)>, BnfError> {
        let mut out = Vec::new();
        while let Some(b) = self.peek() {
            let (line, col) = (self.line, self.col);
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b'#' => {
                    while self.peek().is_some_and(|c| c != b'\n') {
                        self.bump();
                    }
                }
                b'<' => {
                    self.bump();
                    let start = self.i;
                    while self.peek().is_some_and(|c| c != b'>' && c != b'\n') {
                        self.bump();
                    }
                    if self.peek() != Some(b'>') || self.i == start {
                        return Err(self.err("unterminated nonterminal"));
                    }
                    let name = String::from_utf8_lossy(&self.src[start..self.i]).into_owned();
                    self.bump();
                    out.push((Tok::Nt(name), line, col));
                }
                b':' => {
                    if self.src[self.i..].starts_with(b"::=") {
                        for _ in 0..3 {
                            self.bump();
                        }
                        out.push((Tok::Def, line, col));
                    } else {
                        return Err(self.err("expected `::=`"));
                    }
                }
                b'|' => {
                    self.bump();
                    out.push((Tok::Bar, line, col));
                }
                b'\'' | b'"' => {
                    let q = b;
                    self.bump();
                    let mut lit = Vec::new();
                    loop {
                        match self.bump() {
                            None => return Err(self.err("unterminated literal")),
                            Some(c) if c == q => break,
                            Some(b'\\') => lit.push(self.escape()?),
                            Some(c) => lit.push(c),
                        }
                    }
                    out.push((Tok::Lit(lit), line, col));
                }
                b'/' => {
                    self.bump();
                    if self.bump() != Some(b'[') {
                        return Err(self.err("expected `[` after `/`"));
                    }
                    let negate = self.peek() == Some(b'^');
                    if negate {
                        self.bump();
                    }
                    let mut set = ByteSet::EMPTY;
                    loop {
                        let lo = match self.bump() {
                            None => return Err(self.err("unterminated class")),
                            Some(b']') => break,
                            Some(b'\\') => self.escape()?,
                            Some(c) => c,
                        };
                        let mut hi = lo;
                        if self.peek() == Some(b'-') && self.src.get(self.i + 1) != Some(&b']') {
                            self.bump();
                            hi = match self.bump() {
                                None => return Err(self.err("unterminated class")),
                                Some(b'\\') => self.escape()?,
                                Some(c) => c,
                            };
                            if hi < lo {
                                return Err(self.err("reversed class range"));
                            }
                        }
                        set = set.union(&ByteSet::range(lo, hi));
                    }
                    if self.bump() != Some(b'/') {
                        return Err(self.err("expected `/` after class"));
                    }
                    if negate {
                        set = ByteSet::FULL
                            .iter()
                            .filter(|c| !set.contains(*c))
                            .collect();
                    }
                    if set.is_empty() {
                        return Err(self.err("empty class"));
                    }
                    out.push((Tok::Class(set), line, col));
                }
                b'?' | b'*' | b'+' => {
                    self.bump();
                    let rep = match b {
                        b'?' => Rep::Opt,
                        b'*' => Rep::Star,
                        _ => Rep::Plus,
                    };
                    out.push((Tok::Quant(rep), line, col));
                }
                other => {
                    return Err(self.err(format!("unexpected character `{}`", other as char)))
                }
            }
        }
        Ok(out)
    }
}

/// Parses BNF text. The start symbol is `<start>` when defined, otherwise
/// the first defined nonterminal.
pub fn parse_bnf(text: &str) -> Result<Grammar, BnfError> {
    let mut lx = Lexer {
        src: text.as_bytes(),
        i: 0,
        line: 1,
        col: 1,
    };
    let toks = lx.tokens()?;
    let err = |k: usize, msg: &str| {
        let (line, col) = toks
            .get(k)
            .map(|t| (t.1, t.2))
            .unwrap_or((lx.line, lx.col));
        BnfError {
            line,
            col,
            msg: msg.to_string(),
        }
    };
    let mut g = Grammar::new("");
    let mut first: Option<String> = None;
    let mut k = 0;
    while k < toks.len() {
        let name = match (&toks[k].0, toks.get(k + 1).map(|t| &t.0)) {
            (Tok::Nt(n), Some(Tok::Def)) => n.clone(),
            _ => return Err(err(k, "expected `<name> ::=`")),
        };
        k += 2;
        first.get_or_insert_with(|| name.clone());
        g.rules.entry(name.clone()).or_default();
        let mut alt: Vec<Symbol> = Vec::new();
        let mut saw_symbol = false;
        loop {
            let at_rule_start = matches!(
                (toks.get(k).map(|t| &t.0), toks.get(k + 1).map(|t| &t.0)),
                (Some(Tok::Nt(_)), Some(Tok::Def))
            );
            match toks.get(k).map(|t| &t.0) {
                None => break,
                Some(_) if at_rule_start => break,
                Some(Tok::Bar) => {
                    if !saw_symbol {
                        return Err(err(k, "empty alternative; write ''"));
                    }
                    g.add(&name, std::mem::take(&mut alt));
                    saw_symbol = false;
                    k += 1;
                }
                Some(Tok::Def) => return Err(err(k, "unexpected `::=`")),
                Some(Tok::Quant(_)) => return Err(err(k, "quantifier without a symbol")),
                Some(t) => {
                    let mut sym = match t {
                        Tok::Nt(n) => Symbol::nt(n.clone()),
                        Tok::Lit(b) => Symbol::lit(b.clone()),
                        Tok::Class(c) => Symbol::class(*c),
                        _ => unreachable!(),
                    };
                    k += 1;
                    if let Some(Tok::Quant(r)) = toks.get(k).map(|t| &t.0) {
                        sym.rep = *r;
                        k += 1;
                    }
                    saw_symbol = true;
                    if sym.kind != SymKind::Lit(Vec::new()) {
                        alt.push(sym);
                    }
                }
            }
        }
        if !saw_symbol {
            return Err(err(k.min(toks.len().saturating_sub(1)), "rule without alternatives"));
        }
        g.add(&name, alt);
    }
    g.start = if g.rules.contains_key("start") {
        "start".to_string()
    } else {
        first.ok_or_else(|| err(0, "no rules"))?
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_escapes() {
        let text = "<start> ::= '\\'' \"x\\\"\" /[\\x01-\\xff]/ <a>?\n<a> ::= '' | /[\\-\\]a-c]/* '\\n'+\n";
        let g = parse_bnf(text).unwrap();
        let again = parse_bnf(&to_bnf(&g)).unwrap();
        assert_eq!(g, again);
        assert_eq!(g.alternatives("a")[0], Vec::<Symbol>::new());
    }

    #[test]
    fn empty_alternative_renders_as_quotes() {
        let g = parse_bnf("<s> ::= '' | '+' | '-'").unwrap();
        assert!(to_bnf(&g).contains("<s> ::= ''"));
        assert_eq!(g.start, "s");
    }

    #[test]
    fn class_rendering() {
        assert_eq!(format_class(&ByteSet::range(b'0', b'9')), "/[0-9]/");
        assert_eq!(format_class(&ByteSet::non_nul()), "/[\\x01-\\xff]/");
        assert_eq!(format_class(&ByteSet::range(b'a', b'b')), "/[ab]/");
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_bnf("<a> ::= 'x'\n<b> ::= 'y").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_bnf("<a> 'x'").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
    }
}
