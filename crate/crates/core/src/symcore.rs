//! Symbolic values and the per-byte domain store used in place of an SMT solver.

use std::collections::BTreeSet;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::subjectlang::ast::{BinOp, UnOp};

/// A subset of 0..=255.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub const EMPTY: ByteSet = ByteSet([0; 4]);
    pub const FULL: ByteSet = ByteSet([u64::MAX; 4]);

    pub fn singleton(b: u8) -> ByteSet {
        let mut s = ByteSet::EMPTY;
        s.insert(b);
        s
    }

    pub fn range(lo: u8, hi: u8) -> ByteSet {
        let mut s = ByteSet::EMPTY;
        for b in lo..=hi {
            s.insert(b);
        }
        s
    }

    /// All bytes except the end-of-input sentinel 0.
    pub fn non_nul() -> ByteSet {
        ByteSet::range(1, 255)
    }

    pub fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1 << (b & 63);
    }

    pub fn remove(&mut self, b: u8) {
        self.0[(b >> 6) as usize] &= !(1 << (b & 63));
    }

    pub fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1 << (b & 63)) != 0
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn union(&self, other: &ByteSet) -> ByteSet {
        let mut r = *self;
        for i in 0..4 {
            r.0[i] |= other.0[i];
        }
        r
    }

    pub fn intersect(&self, other: &ByteSet) -> ByteSet {
        let mut r = *self;
        for i in 0..4 {
            r.0[i] &= other.0[i];
        }
        r
    }

    pub fn is_subset(&self, other: &ByteSet) -> bool {
        self.intersect(other) == *self
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..=255u8).filter(move |b| self.contains(*b))
    }

    pub fn first(&self) -> Option<u8> {
        self.iter().next()
    }

    /// The only member, if there is exactly one.
    pub fn single(&self) -> Option<u8> {
        if self.len() == 1 {
            self.first()
        } else {
            None
        }
    }

    /// Maximal runs of consecutive members.
    pub fn ranges(&self) -> Vec<(u8, u8)> {
        let mut out: Vec<(u8, u8)> = Vec::new();
        for b in self.iter() {
            match out.last_mut() {
                Some((_, hi)) if *hi as u16 + 1 == b as u16 => *hi = b,
                _ => out.push((b, b)),
            }
        }
        out
    }

    /// Compact hex rendering, e.g. `30-39,5f`.
    pub fn to_hex_ranges(&self) -> String {
        self.ranges()
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    format!("{lo:02x}")
                } else {
                    format!("{lo:02x}-{hi:02x}")
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_hex_ranges(s: &str) -> Option<ByteSet> {
        let mut set = ByteSet::EMPTY;
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (lo, hi) = part.split_once('-').unwrap_or((part, part));
            let lo = u8::from_str_radix(lo, 16).ok()?;
            let hi = u8::from_str_radix(hi, 16).ok()?;
            if lo > hi {
                return None;
            }
            set = set.union(&ByteSet::range(lo, hi));
        }
        Some(set)
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ByteSet[{}]", self.to_hex_ranges())
    }
}

impl FromIterator<u8> for ByteSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> ByteSet {
        let mut s = ByteSet::EMPTY;
        for b in iter {
            s.insert(b);
        }
        s
    }
}

/// A symbolic variable: an input byte or (composite mode) a token identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymVar {
    Read(u32),
    TokenRead(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymExpr {
    Var(SymVar),
    Un(UnOp, Val),
    Bin(BinOp, Val, Val),
}

/// A runtime value: concrete integer or symbolic expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Val {
    Int(i64),
    Sym(Rc<SymExpr>),
}

impl Val {
    pub fn var(v: SymVar) -> Val {
        Val::Sym(Rc::new(SymExpr::Var(v)))
    }

    /// The variable if this value is an untransformed symbolic byte.
    pub fn as_var(&self) -> Option<SymVar> {
        match self {
            Val::Sym(e) => match **e {
                SymExpr::Var(v) => Some(v),
                _ => None,
            },
            Val::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Val::Int(v) => Some(*v),
            Val::Sym(_) => None,
        }
    }

    pub fn unary(op: UnOp, a: Val) -> Val {
        match a {
            Val::Int(x) => Val::Int(op.apply(x)),
            s => Val::Sym(Rc::new(SymExpr::Un(op, s))),
        }
    }

    pub fn binary(op: BinOp, a: Val, b: Val) -> Val {
        match (&a, &b) {
            (Val::Int(x), Val::Int(y)) => Val::Int(op.apply(*x, *y)),
            _ => Val::Sym(Rc::new(SymExpr::Bin(op, a, b))),
        }
    }

    /// Evaluates under a full assignment of the variables.
    pub fn eval(&self, env: &dyn Fn(SymVar) -> i64) -> i64 {
        match self {
            Val::Int(v) => *v,
            Val::Sym(e) => match &**e {
                SymExpr::Var(v) => env(*v),
                SymExpr::Un(op, a) => op.apply(a.eval(env)),
                SymExpr::Bin(op, a, b) => op.apply(a.eval(env), b.eval(env)),
            },
        }
    }

    pub fn vars(&self) -> BTreeSet<SymVar> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<SymVar>) {
        if let Val::Sym(e) = self {
            match &**e {
                SymExpr::Var(v) => {
                    out.insert(*v);
                }
                SymExpr::Un(_, a) => a.collect_vars(out),
                SymExpr::Bin(_, a, b) => {
                    a.collect_vars(out);
                    b.collect_vars(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("constraint relates {0} distinct symbolic variables")]
    Unsupported(usize),
    #[error("position {0} was never accessed")]
    NotInTrace(u32),
}

/// Per-variable feasible value sets. Cloning is cheap; writes copy on demand.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainStore {
    input: Rc<Vec<ByteSet>>,
    tokens: Rc<Vec<ByteSet>>,
    /// Initial domain for newly touched token positions.
    token_universe: ByteSet,
}

impl DomainStore {
    pub fn new() -> DomainStore {
        DomainStore::default()
    }

    pub fn with_token_universe(universe: ByteSet) -> DomainStore {
        DomainStore {
            token_universe: universe,
            ..DomainStore::default()
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn token_len(&self) -> usize {
        self.tokens.len()
    }

    /// Makes sure the variable has a domain, creating the unconstrained one.
    pub fn touch(&mut self, v: SymVar) {
        match v {
            SymVar::Read(i) => {
                if self.input.len() <= i as usize {
                    Rc::make_mut(&mut self.input).resize(i as usize + 1, ByteSet::FULL);
                }
            }
            SymVar::TokenRead(k) => {
                if self.tokens.len() <= k as usize {
                    let u = self.token_universe;
                    Rc::make_mut(&mut self.tokens).resize(k as usize + 1, u);
                }
            }
        }
    }

    pub fn get(&self, v: SymVar) -> ByteSet {
        let (list, i, fresh) = match v {
            SymVar::Read(i) => (&self.input, i, ByteSet::FULL),
            SymVar::TokenRead(k) => (&self.tokens, k, self.token_universe),
        };
        list.get(i as usize).copied().unwrap_or(fresh)
    }

    pub fn set(&mut self, v: SymVar, d: ByteSet) {
        self.touch(v);
        match v {
            SymVar::Read(i) => Rc::make_mut(&mut self.input)[i as usize] = d,
            SymVar::TokenRead(k) => Rc::make_mut(&mut self.tokens)[k as usize] = d,
        }
    }

    /// Restricts the store so that `cond` is truthy (`truth`) or zero.
    /// Returns whether the restricted store is still feasible.
    pub fn assert_constraint(&mut self, cond: &Val, truth: bool) -> Result<bool, SolverError> {
        let vars = cond.vars();
        match vars.len() {
            0 => Ok((cond.eval(&|_| 0) != 0) == truth),
            1 => {
                let v = *vars.iter().next().expect("one variable");
                let dom = self.get(v);
                let kept: ByteSet = dom
                    .iter()
                    .filter(|&b| (cond.eval(&|_| b as i64) != 0) == truth)
                    .collect();
                self.set(v, kept);
                Ok(!kept.is_empty())
            }
            n => Err(SolverError::Unsupported(n)),
        }
    }

    /// Values a single-variable expression can take under the store.
    pub fn possible_values(&self, val: &Val) -> Result<BTreeSet<i64>, SolverError> {
        let vars = val.vars();
        match vars.len() {
            0 => Ok([val.eval(&|_| 0)].into_iter().collect()),
            1 => {
                let v = *vars.iter().next().expect("one variable");
                Ok(self.get(v).iter().map(|b| val.eval(&|_| b as i64)).collect())
            }
            n => Err(SolverError::Unsupported(n)),
        }
    }

    /// All feasible values of input position `pos`.
    pub fn solutions(&self, pos: u32) -> Result<ByteSet, SolverError> {
        self.input
            .get(pos as usize)
            .copied()
            .ok_or(SolverError::NotInTrace(pos))
    }

    pub fn token_solutions(&self, k: u32) -> Result<ByteSet, SolverError> {
        self.tokens
            .get(k as usize)
            .copied()
            .ok_or(SolverError::NotInTrace(k))
    }
}
