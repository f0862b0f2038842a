use std::fmt::Write as _;

use super::{Grammar, SymKind};

/// A derivation: which alternative expanded each nonterminal, and the bytes
/// matched by each terminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DerivationTree {
    Node {
        nt: String,
        alt: usize,
        /// One entry per symbol of the alternative, holding its repetitions.
        items: Vec<Vec<DerivationTree>>,
    },
    Leaf(Vec<u8>),
}

impl DerivationTree {
    pub fn nt(&self) -> Option<&str> {
        match self {
            DerivationTree::Node { nt, .. } => Some(nt),
            DerivationTree::Leaf(_) => None,
        }
    }

    pub fn yield_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<u8>) {
        match self {
            DerivationTree::Leaf(b) => out.extend_from_slice(b),
            DerivationTree::Node { items, .. } => {
                for t in items.iter().flatten() {
                    t.collect(out);
                }
            }
        }
    }

    /// Paths to every nonterminal node, children before parents.
    pub fn postorder_paths(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.postorder(&mut path, &mut out);
        out
    }

    fn postorder(&self, path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if let DerivationTree::Node { items, .. } = self {
            for (i, reps) in items.iter().enumerate() {
                for (j, child) in reps.iter().enumerate() {
                    path.push((i, j));
                    child.postorder(path, out);
                    path.pop();
                }
            }
            out.push(path.clone());
        }
    }

    /// The subtree at `path` (pairs of symbol index and repetition index).
    pub fn get(&self, path: &[(usize, usize)]) -> Option<&DerivationTree> {
        let mut cur = self;
        for &(i, j) in path {
            match cur {
                DerivationTree::Node { items, .. } => cur = items.get(i)?.get(j)?,
                DerivationTree::Leaf(_) => return None,
            }
        }
        Some(cur)
    }

    /// A copy with the subtree at `path` replaced.
    pub fn replace(&self, path: &[(usize, usize)], with: DerivationTree) -> DerivationTree {
        let mut out = self.clone();
        let mut cur = &mut out;
        for &(i, j) in path {
            match cur {
                DerivationTree::Node { items, .. } => cur = &mut items[i][j],
                DerivationTree::Leaf(_) => panic!("path runs through a leaf"),
            }
        }
        *cur = with;
        out
    }

    /// Checks that the tree follows the rules of `g`.
    pub fn conforms(&self, g: &Grammar) -> bool {
        match self {
            DerivationTree::Leaf(_) => true,
            DerivationTree::Node { nt, alt, items } => {
                let Some(rule) = g.alternatives(nt).get(*alt) else {
                    return false;
                };
                if rule.len() != items.len() {
                    return false;
                }
                rule.iter().zip(items).all(|(sym, reps)| {
                    let count_ok = reps.len() >= sym.rep.min()
                        && sym.rep.max().map_or(true, |m| reps.len() <= m);
                    count_ok
                        && reps.iter().all(|r| match (&sym.kind, r) {
                            (SymKind::Nt(n), DerivationTree::Node { nt, .. }) => {
                                n == nt && r.conforms(g)
                            }
                            (SymKind::Lit(b), DerivationTree::Leaf(l)) => b == l,
                            (SymKind::Class(c), DerivationTree::Leaf(l)) => {
                                l.len() == 1 && c.contains(l[0])
                            }
                            _ => false,
                        })
                })
            }
        }
    }

    /// Indented rendering for debugging.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.render(0, &mut out);
        out
    }

    fn render(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match self {
            DerivationTree::Leaf(b) => {
                let _ = writeln!(out, "{pad}{}", super::bnf::format_literal(b));
            }
            DerivationTree::Node { nt, alt, items } => {
                let _ = writeln!(out, "{pad}<{nt}> #{alt}");
                for t in items.iter().flatten() {
                    t.render(depth + 1, out);
                }
            }
        }
    }
}
