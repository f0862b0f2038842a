//! Random sentence generation from a grammar.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Alternative, DerivationTree, Grammar, Rep, SymKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzConfig {
    pub count: usize,
    /// Depth after which generation closes off with the shallowest choices.
    pub max_depth: usize,
    /// Upper bound on repetitions for `*` and `+`.
    pub max_repeat: usize,
    pub unique: bool,
    pub seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            count: 1000,
            max_depth: 12,
            max_repeat: 4,
            unique: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzOutput {
    pub inputs: Vec<(Vec<u8>, DerivationTree)>,
    /// Set when fewer distinct inputs than requested could be found.
    pub exhausted: bool,
}

/// Generates inputs from the start symbol.
pub fn fuzz(g: &Grammar, config: &FuzzConfig) -> FuzzOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gen = Generator::new(g, config.max_depth, config.max_repeat);
    let mut inputs = Vec::new();
    let mut seen = HashSet::new();
    let attempts = config.count.saturating_mul(50).max(1);
    if !gen.productive(&g.start) {
        return FuzzOutput {
            inputs,
            exhausted: config.count > 0,
        };
    }
    for _ in 0..attempts {
        if inputs.len() == config.count {
            break;
        }
        let tree = gen.tree(&g.start, &mut rng);
        let bytes = tree.yield_bytes();
        if config.unique && !seen.insert(bytes.clone()) {
            continue;
        }
        inputs.push((bytes, tree));
    }
    let exhausted = inputs.len() < config.count;
    FuzzOutput { inputs, exhausted }
}

/// Expands one nonterminal at random.
pub struct Generator<'g> {
    g: &'g Grammar,
    max_depth: usize,
    max_repeat: usize,
    /// Height of the shallowest finite derivation per nonterminal.
    height: HashMap<String, usize>,
}

impl<'g> Generator<'g> {
    pub fn new(g: &'g Grammar, max_depth: usize, max_repeat: usize) -> Generator<'g> {
        let mut height: HashMap<String, usize> = HashMap::new();
        loop {
            let mut changed = false;
            for (nt, alts) in &g.rules {
                for alt in alts {
                    if let Some(h) = alt_height(alt, &height) {
                        if height.get(nt).map_or(true, |b| h < *b) {
                            height.insert(nt.clone(), h);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Generator {
            g,
            max_depth,
            max_repeat: max_repeat.max(1),
            height,
        }
    }

    /// Whether `nt` derives at least one finite string.
    pub fn productive(&self, nt: &str) -> bool {
        self.height.contains_key(nt)
    }

    pub fn tree(&self, nt: &str, rng: &mut impl Rng) -> DerivationTree {
        self.expand(nt, 0, rng)
    }

    fn expand(&self, nt: &str, depth: usize, rng: &mut impl Rng) -> DerivationTree {
        let alts = self.g.alternatives(nt);
        let usable: Vec<usize> = (0..alts.len())
            .filter(|&i| alt_height(&alts[i], &self.height).is_some())
            .collect();
        assert!(!usable.is_empty(), "<{nt}> derives no finite string");
        let closing = depth >= self.max_depth;
        let pick = if closing {
            *usable
                .iter()
                .min_by_key(|&&i| alt_height(&alts[i], &self.height))
                .expect("non-empty")
        } else {
            usable[rng.gen_range(0..usable.len())]
        };
        let items = alts[pick]
            .iter()
            .map(|sym| {
                let productive = match &sym.kind {
                    SymKind::Nt(n) => self.productive(n),
                    SymKind::Class(c) => !c.is_empty(),
                    SymKind::Lit(_) => true,
                };
                let reps = if closing || !productive {
                    sym.rep.min()
                } else {
                    match sym.rep {
                        Rep::One => 1,
                        Rep::Opt => rng.gen_range(0..=1),
                        Rep::Star => rng.gen_range(0..self.max_repeat),
                        Rep::Plus => rng.gen_range(1..=self.max_repeat),
                    }
                };
                (0..reps)
                    .map(|_| match &sym.kind {
                        SymKind::Nt(n) => self.expand(n, depth + 1, rng),
                        SymKind::Lit(b) => DerivationTree::Leaf(b.clone()),
                        SymKind::Class(c) => {
                            let bytes: Vec<u8> = c.iter().collect();
                            DerivationTree::Leaf(vec![bytes[rng.gen_range(0..bytes.len())]])
                        }
                    })
                    .collect()
            })
            .collect();
        DerivationTree::Node {
            nt: nt.to_string(),
            alt: pick,
            items,
        }
    }
}

fn alt_height(alt: &Alternative, height: &HashMap<String, usize>) -> Option<usize> {
    let mut h = 0;
    for s in alt {
        if s.rep.min() == 0 {
            continue;
        }
        match &s.kind {
            SymKind::Nt(n) => h = h.max(*height.get(n)?),
            SymKind::Class(c) if c.is_empty() => return None,
            _ => {}
        }
    }
    Some(h + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{earley::EarleyParser, parse_bnf};

    #[test]
    fn generated_inputs_parse() {
        let g = parse_bnf("<start> ::= <e>\n<e> ::= <e> '+' <e> | '(' <e> ')' | /[0-9]/+\n").unwrap();
        let out = fuzz(&g, &FuzzConfig { count: 50, ..Default::default() });
        assert_eq!(out.inputs.len(), 50);
        let p = EarleyParser::new(&g);
        for (bytes, tree) in &out.inputs {
            assert!(tree.conforms(&g));
            assert!(p.accepts(bytes), "{}", String::from_utf8_lossy(bytes));
        }
    }

    #[test]
    fn finite_language_exhausts() {
        let g = parse_bnf("<start> ::= 'a' | 'b'\n").unwrap();
        let out = fuzz(&g, &FuzzConfig { count: 5, ..Default::default() });
        assert_eq!(out.inputs.len(), 2);
        assert!(out.exhausted);
    }

    #[test]
    fn seeds_are_deterministic() {
        let g = parse_bnf("<start> ::= /[a-z]/* '!'\n").unwrap();
        let c = FuzzConfig { count: 20, seed: 7, ..Default::default() };
        let a: Vec<_> = fuzz(&g, &c).inputs.into_iter().map(|x| x.0).collect();
        let b: Vec<_> = fuzz(&g, &c).inputs.into_iter().map(|x| x.0).collect();
        assert_eq!(a, b);
    }
}
