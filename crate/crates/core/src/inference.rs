//! Parse trees from consumption contexts, and grammars from parse trees.
//!
//! Nonterminals are keyed by function and call site. A function invoked
//! directly inside a loop iteration is further split by whether that
//! iteration continued or exited the loop, matching how the loop itself is
//! split into `_continue` and `_exit` rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use indexmap::IndexMap;

use crate::consumption::{identify_input_consumptions, ConsumptionAssignment};
use crate::grammar::bnf::format_symbol;
use crate::grammar::{Grammar, GrammarError, Symbol};
use crate::symcore::ByteSet;
use crate::symexec::{Context, Trace, TraceMode};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Call { func: Rc<str>, site: u32 },
    Loop(u32),
    Iteration(u32),
    Leaf(ByteSet),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParseTree {
    pub kind: NodeKind,
    pub children: Vec<ParseTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error("context `{0}` does not start at the entry frame")]
    ForeignRoot(String),
    #[error("trace {0} has no content positions")]
    EmptyTrace(usize),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

impl ParseTree {
    fn node(kind: NodeKind) -> ParseTree {
        ParseTree {
            kind,
            children: Vec::new(),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<ByteSet> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<ByteSet>) {
        match &self.kind {
            NodeKind::Leaf(s) => out.push(*s),
            _ => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Indented rendering, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.render(0, &mut out);
        out
    }

    fn render(&self, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        match &self.kind {
            NodeKind::Call { func, site } => out.push_str(&format!("{func}#{site}")),
            NodeKind::Loop(id) => out.push_str(&format!("L{id}")),
            NodeKind::Iteration(i) => out.push_str(&format!("I{i}")),
            NodeKind::Leaf(s) => out.push_str(&format_symbol(&Symbol::class(*s))),
        }
        out.push('\n');
        for c in &self.children {
            c.render(depth + 1, out);
        }
    }
}

fn tree_path(ctx: &Context) -> Vec<NodeKind> {
    let mut path = Vec::new();
    for f in &ctx.frames {
        path.push(NodeKind::Call {
            func: f.func.clone(),
            site: f.site,
        });
        for (id, it) in &f.loops {
            path.push(NodeKind::Loop(*id));
            path.push(NodeKind::Iteration(*it));
        }
    }
    path
}

/// Inserts one path per content position, merging with the most recent
/// sibling when it matches.
pub fn trace_to_tree(trace: &Trace, assignment: &ConsumptionAssignment) -> Result<ParseTree, InferError> {
    let n = trace.content_len();
    if n == 0 {
        return Err(InferError::EmptyTrace(trace.path_id));
    }
    let mut root: Option<ParseTree> = None;
    for i in 0..n {
        let ctx = &assignment.contexts[i];
        let path = tree_path(ctx);
        let root = root.get_or_insert_with(|| ParseTree::node(path[0].clone()));
        if root.kind != path[0] {
            return Err(InferError::ForeignRoot(ctx.to_string()));
        }
        let mut cur = root;
        for kind in &path[1..] {
            let extend = !matches!(cur.children.last(), Some(last) if last.kind == *kind);
            if extend {
                cur.children.push(ParseTree::node(kind.clone()));
            }
            cur = cur.children.last_mut().expect("just ensured");
        }
        cur.children
            .push(ParseTree::node(NodeKind::Leaf(trace.positions[i].solutions)));
    }
    Ok(root.expect("n > 0"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Role {
    Plain,
    Continue(u32),
    Exit(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum NtKey {
    Func { func: Rc<str>, site: u32, role: Role },
    Loop { id: u32, owner: Rc<NtKey>, role: Role },
    Continue(Rc<NtKey>),
    Exit(Rc<NtKey>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum RawSym {
    Key(NtKey),
    Term(ByteSet),
}

/// Grammar under construction, keyed structurally.
#[derive(Debug, Default)]
struct RawGrammar {
    rules: IndexMap<NtKey, Vec<Vec<RawSym>>>,
    loops: IndexMap<NtKey, ()>,
    entry: Option<NtKey>,
}

impl RawGrammar {
    fn add(&mut self, key: NtKey, alt: Vec<RawSym>) {
        let alts = self.rules.entry(key).or_default();
        if !alts.contains(&alt) {
            alts.push(alt);
        }
    }

    fn add_tree(&mut self, tree: &ParseTree) {
        let key = match &tree.kind {
            NodeKind::Call { func, site } => NtKey::Func {
                func: func.clone(),
                site: *site,
                role: Role::Plain,
            },
            _ => unreachable!("trees are rooted at a call"),
        };
        self.entry.get_or_insert_with(|| key.clone());
        self.call(tree, key);
    }

    fn call(&mut self, node: &ParseTree, key: NtKey) {
        let owner = Rc::new(key.clone());
        self.rules.entry(key.clone()).or_default();
        let alt = self.children(&node.children, &owner, Role::Plain);
        self.add(key, alt);
    }

    fn children(&mut self, nodes: &[ParseTree], owner: &Rc<NtKey>, role: Role) -> Vec<RawSym> {
        nodes
            .iter()
            .map(|c| match &c.kind {
                NodeKind::Leaf(s) => RawSym::Term(*s),
                NodeKind::Call { func, site } => {
                    let key = NtKey::Func {
                        func: func.clone(),
                        site: *site,
                        role,
                    };
                    self.call(c, key.clone());
                    RawSym::Key(key)
                }
                NodeKind::Loop(id) => {
                    let key = NtKey::Loop {
                        id: *id,
                        owner: owner.clone(),
                        role,
                    };
                    self.loop_node(c, *id, &key, owner);
                    RawSym::Key(key)
                }
                NodeKind::Iteration(_) => unreachable!("iterations sit under loops"),
            })
            .collect()
    }

    fn loop_node(&mut self, node: &ParseTree, id: u32, key: &NtKey, owner: &Rc<NtKey>) {
        self.loops.insert(key.clone(), ());
        self.rules.entry(key.clone()).or_default();
        let shared = Rc::new(key.clone());
        let last = node.children.len().saturating_sub(1);
        for (i, iter) in node.children.iter().enumerate() {
            let (target, role) = if i == last {
                (NtKey::Exit(shared.clone()), Role::Exit(id))
            } else {
                (NtKey::Continue(shared.clone()), Role::Continue(id))
            };
            let alt = self.children(&iter.children, owner, role);
            self.add(target, alt);
        }
    }

    /// Adds the recursive loop rules, with the continuing alternative
    /// only for loops seen running more than one iteration.
    fn close_loops(&mut self) {
        let loops: Vec<NtKey> = self.loops.keys().cloned().collect();
        for key in loops {
            let shared = Rc::new(key.clone());
            let cont = NtKey::Continue(shared.clone());
            let mut alts = Vec::new();
            if self.rules.contains_key(&cont) {
                alts.push(vec![RawSym::Key(cont), RawSym::Key(key.clone())]);
            }
            alts.push(vec![RawSym::Key(NtKey::Exit(shared))]);
            self.rules.insert(key, alts);
        }
    }

    /// Names by function or loop, primed in order of first appearance.
    fn names(&self) -> HashMap<NtKey, String> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut names = HashMap::new();
        for key in self.rules.keys() {
            let base = match key {
                NtKey::Func { func, .. } => func.to_string(),
                NtKey::Loop { id, .. } => format!("L{id}"),
                NtKey::Continue(_) | NtKey::Exit(_) => continue,
            };
            let rank = seen.entry(base.clone()).or_insert(0);
            let name = format!("{base}{}", "'".repeat(*rank));
            *rank += 1;
            if let NtKey::Loop { .. } = key {
                let shared = Rc::new(key.clone());
                names.insert(NtKey::Continue(shared.clone()), format!("{name}_continue"));
                names.insert(NtKey::Exit(shared), format!("{name}_exit"));
            }
            names.insert(key.clone(), name);
        }
        names
    }
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    /// Display names for token identifiers; others become `T<id>`.
    pub token_names: BTreeMap<i64, String>,
}

impl InferOptions {
    pub fn token_name(&self, id: u8) -> String {
        self.token_names
            .get(&(id as i64))
            .cloned()
            .unwrap_or_else(|| format!("T{id}"))
    }
}

#[derive(Debug, Clone)]
pub struct Inferred {
    pub grammar: Grammar,
    /// Loop nonterminals and their `_continue`/`_exit` rules.
    pub loop_nonterminals: BTreeSet<String>,
    /// Token nonterminals referenced but left for token generalization.
    pub token_nonterminals: BTreeSet<String>,
    pub traces_used: usize,
}

/// Converts one tree; equivalent to [`traces_to_grammar`] on one trace.
pub fn tree_to_grammar(tree: &ParseTree, mode: TraceMode, opts: &InferOptions) -> Inferred {
    let mut raw = RawGrammar::default();
    raw.add_tree(tree);
    finish(raw, mode, opts, 1)
}

fn finish(mut raw: RawGrammar, mode: TraceMode, opts: &InferOptions, used: usize) -> Inferred {
    raw.close_loops();
    let names = raw.names();
    let entry = &names[raw.entry.as_ref().expect("at least one tree")];
    let mut g = Grammar::new("start");
    g.add("start", vec![Symbol::nt(entry.clone())]);
    let mut tokens = BTreeSet::new();
    let mut helpers: Vec<(String, Vec<String>)> = Vec::new();
    for (key, alts) in &raw.rules {
        for alt in alts {
            let syms = alt
                .iter()
                .map(|s| match s {
                    RawSym::Key(k) => Symbol::nt(names[k].clone()),
                    RawSym::Term(set) => match mode {
                        TraceMode::Bytes => Symbol::class(*set),
                        TraceMode::Tokens => {
                            let ids: Vec<String> = set.iter().map(|t| opts.token_name(t)).collect();
                            tokens.extend(ids.iter().cloned());
                            if ids.len() == 1 {
                                Symbol::nt(ids[0].clone())
                            } else {
                                let name = ids.join("_or_");
                                helpers.push((name.clone(), ids));
                                Symbol::nt(name)
                            }
                        }
                    },
                })
                .collect();
            g.add(&names[key], syms);
        }
    }
    for (name, ids) in helpers {
        for id in ids {
            g.add(&name, vec![Symbol::nt(id)]);
        }
    }
    let mut loop_nonterminals = BTreeSet::new();
    for key in raw.loops.keys() {
        let shared = Rc::new(key.clone());
        loop_nonterminals.insert(names[key].clone());
        for k in [NtKey::Continue(shared.clone()), NtKey::Exit(shared)] {
            if let Some(n) = names.get(&k) {
                loop_nonterminals.insert(n.clone());
            }
        }
    }
    Inferred {
        grammar: g,
        loop_nonterminals,
        token_nonterminals: tokens,
        traces_used: used,
    }
}

/// Trees for every accepting trace, merged into one grammar.
pub fn traces_to_grammar(traces: &[Trace], opts: &InferOptions) -> Result<Inferred, InferError> {
    let mut raw = RawGrammar::default();
    let mut used = 0;
    let mut mode = TraceMode::Bytes;
    let mut accepts_empty = false;
    for t in traces.iter().filter(|t| t.accept) {
        if t.content_len() == 0 {
            accepts_empty = true;
            continue;
        }
        let assignment = identify_input_consumptions(t);
        raw.add_tree(&trace_to_tree(t, &assignment)?);
        mode = t.mode;
        used += 1;
    }
    let Some(entry) = raw.entry.clone() else {
        return Err(GrammarError::Empty.into());
    };
    if accepts_empty {
        raw.add(entry, Vec::new());
        used += 1;
    }
    Ok(finish(raw, mode, opts, used))
}
