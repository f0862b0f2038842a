//! Execution contexts, traces, and the line-delimited trace dump.

use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::symcore::ByteSet;

/// One frame of an execution context: the function, the call site it was
/// entered through, and the loop iterations active in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CtxFrame {
    pub func: Rc<str>,
    pub site: u32,
    /// `(loop id, iteration)` from outermost to innermost.
    pub loops: Vec<(u32, u32)>,
}

/// Serialized call path plus active loop iterations at an input access.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    pub frames: Vec<CtxFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed execution context `{0}`")]
pub struct ContextParseError(pub String);

impl Context {
    /// Form without call-site ids, e.g. `parse:value:array:L1I1`.
    pub fn display_short(&self) -> String {
        self.render(false)
    }

    fn render(&self, sites: bool) -> String {
        let mut parts = Vec::new();
        for f in &self.frames {
            if sites {
                parts.push(format!("{}#{}", f.func, f.site));
            } else {
                parts.push(f.func.to_string());
            }
            for (id, it) in &f.loops {
                parts.push(format!("L{id}I{it}"));
            }
        }
        parts.join(":")
    }

    pub fn parse(s: &str) -> Result<Context, ContextParseError> {
        let err = || ContextParseError(s.to_string());
        let mut frames: Vec<CtxFrame> = Vec::new();
        for part in s.split(':') {
            if let Some(rest) = part.strip_prefix('L').filter(|r| r.contains('I')) {
                let (id, it) = rest.split_once('I').ok_or_else(err)?;
                let (id, it) = (id.parse().map_err(|_| err())?, it.parse().map_err(|_| err())?);
                frames.last_mut().ok_or_else(err)?.loops.push((id, it));
                continue;
            }
            let (name, site) = part.split_once('#').ok_or_else(err)?;
            if name.is_empty() {
                return Err(err());
            }
            frames.push(CtxFrame {
                func: Rc::from(name),
                site: site.parse().map_err(|_| err())?,
                loops: Vec::new(),
            });
        }
        if frames.is_empty() {
            return Err(err());
        }
        Ok(Context { frames })
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(true))
    }
}

/// Whether trace positions are input bytes or token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Bytes,
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionTrace {
    pub access_orders: Vec<u32>,
    /// Parallel to `access_orders`.
    pub contexts: Vec<Rc<Context>>,
    pub solutions: ByteSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub path_id: usize,
    pub accept: bool,
    pub mode: TraceMode,
    pub positions: Vec<PositionTrace>,
    /// The last position is the end-of-input marker (solutions `{0}`).
    pub sentinel: bool,
}

impl Trace {
    /// Positions that carry actual input, excluding the end marker.
    pub fn content_len(&self) -> usize {
        self.positions.len() - self.sentinel as usize
    }

    /// The context recorded together with access order `order`.
    pub fn context_of(&self, order: u32) -> Option<&Rc<Context>> {
        self.positions.iter().find_map(|p| {
            p.access_orders
                .iter()
                .position(|o| *o == order)
                .map(|i| &p.contexts[i])
        })
    }

    /// One arbitrary concrete input this trace stands for (minimal bytes).
    pub fn witness(&self) -> Vec<u8> {
        self.positions[..self.content_len()]
            .iter()
            .map(|p| p.solutions.first().unwrap_or(0))
            .collect()
    }

    pub fn to_record(&self) -> TraceRecord {
        TraceRecord {
            path_id: self.path_id,
            accept: self.accept,
            mode: self.mode,
            sentinel: self.sentinel,
            positions: self
                .positions
                .iter()
                .map(|p| PositionRecord {
                    access_orders: p.access_orders.clone(),
                    contexts: p.contexts.iter().map(|c| c.to_string()).collect(),
                    solutions: p.solutions.to_hex_ranges(),
                })
                .collect(),
        }
    }

    pub fn from_record(r: &TraceRecord) -> Result<Trace, ContextParseError> {
        let mut positions = Vec::new();
        for p in &r.positions {
            let contexts = p
                .contexts
                .iter()
                .map(|c| Context::parse(c).map(Rc::new))
                .collect::<Result<Vec<_>, _>>()?;
            let solutions = ByteSet::from_hex_ranges(&p.solutions)
                .ok_or_else(|| ContextParseError(p.solutions.clone()))?;
            positions.push(PositionTrace {
                access_orders: p.access_orders.clone(),
                contexts,
                solutions,
            });
        }
        Ok(Trace {
            path_id: r.path_id,
            accept: r.accept,
            mode: r.mode,
            positions,
            sentinel: r.sentinel,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositionRecord {
    pub access_orders: Vec<u32>,
    pub contexts: Vec<String>,
    /// Hex ranges such as `30-39`.
    pub solutions: String,
}

/// One line of the trace dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    pub path_id: usize,
    pub accept: bool,
    pub mode: TraceMode,
    pub sentinel: bool,
    pub positions: Vec<PositionRecord>,
}

/// Renders traces as JSON lines.
pub fn dump_traces(traces: &[Trace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(&t.to_record()).expect("trace serializes"));
        out.push('\n');
    }
    out
}

pub fn load_traces(text: &str) -> Result<Vec<Trace>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: TraceRecord = serde_json::from_str(l).map_err(|e| e.to_string())?;
            Trace::from_record(&r).map_err(|e| e.to_string())
        })
        .collect()
}
