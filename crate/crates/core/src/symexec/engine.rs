//! The forking bytecode interpreter over symbolic values.

use std::collections::BTreeSet;
use std::rc::Rc;

use crate::subjectlang::{Op, Slot, SubjectProgram};
use crate::symcore::{ByteSet, DomainStore, SolverError, SymVar, Val};

use super::trace::{Context, CtxFrame};
use super::ExploreConfig;

/// Why a state stopped without reaching a return from its entry function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Death {
    Infeasible,
    LoopBound,
    SafetyBound(String),
    RecursionBound,
    InputLength,
    Unsupported(String),
    Fault(String),
}

#[derive(Debug, Clone)]
pub(crate) struct LoopEntry {
    id: u32,
    iter: u32,
    first: Option<SymVar>,
    processing: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    func: usize,
    pc: usize,
    site: u32,
    locals: Vec<Val>,
    bufs: Vec<Vec<Val>>,
    loops: Vec<LoopEntry>,
}

#[derive(Debug)]
pub(crate) struct Access {
    pub var: SymVar,
    pub order: u32,
    pub ctx: Rc<Context>,
    pub prev: Option<Rc<Access>>,
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    frames: Vec<Frame>,
    stack: Vec<Val>,
    pub globals: Vec<Val>,
    gbufs: Vec<Vec<Val>>,
    pub domains: DomainStore,
    order: u32,
    pub accesses: Option<Rc<Access>>,
    /// Input positions below this are known not to be the end marker.
    nonzero_input: u32,
    nonzero_tokens: u32,
    next_token: u32,
    /// Loops (call path + loop id) already seen processing input.
    marked: Rc<BTreeSet<String>>,
}

/// How calls to the tokenizer are handled.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Detour {
    None,
    /// Calls to `func` return a fresh symbolic token instead of running.
    Proxy { func: usize, sink: Option<u16> },
}

pub(crate) enum Outcome {
    Fork(State, State),
    Returned(State, Val),
    Dead(Death),
}

pub(crate) struct Engine<'a> {
    pub program: &'a SubjectProgram,
    pub config: &'a ExploreConfig,
    pub detour: Detour,
    names: Vec<Rc<str>>,
}

impl<'a> Engine<'a> {
    pub fn new(program: &'a SubjectProgram, config: &'a ExploreConfig, detour: Detour) -> Self {
        let names = program
            .compiled
            .functions
            .iter()
            .map(|f| Rc::from(f.name.as_str()))
            .collect();
        Engine {
            program,
            config,
            detour,
            names,
        }
    }

    pub fn initial_state(&self, func: usize, token_universe: ByteSet) -> State {
        let c = &self.program.compiled;
        State {
            frames: vec![self.new_frame(func, 0)],
            stack: Vec::new(),
            globals: vec![Val::Int(0); c.global_scalars.len()],
            gbufs: c
                .global_buffers
                .iter()
                .map(|(_, n)| vec![Val::Int(0); *n])
                .collect(),
            domains: DomainStore::with_token_universe(token_universe),
            order: 0,
            accesses: None,
            nonzero_input: 0,
            nonzero_tokens: 0,
            next_token: 0,
            marked: Rc::new(BTreeSet::new()),
        }
    }

    fn new_frame(&self, func: usize, site: u32) -> Frame {
        let f = &self.program.compiled.functions[func];
        Frame {
            func,
            pc: 0,
            site,
            locals: vec![Val::Int(0); f.n_locals],
            bufs: f.buffers.iter().map(|&n| vec![Val::Int(0); n]).collect(),
            loops: Vec::new(),
        }
    }

    fn context(&self, st: &State) -> Rc<Context> {
        Rc::new(Context {
            frames: st
                .frames
                .iter()
                .map(|f| CtxFrame {
                    func: self.names[f.func].clone(),
                    site: f.site,
                    loops: f.loops.iter().map(|l| (l.id, l.iter)).collect(),
                })
                .collect(),
        })
    }

    fn loop_key(&self, st: &State, frame: usize, loop_id: u32) -> String {
        let mut key = String::new();
        for f in &st.frames[..=frame] {
            key.push_str(&self.names[f.func]);
            key.push('#');
            key.push_str(&f.site.to_string());
            key.push(':');
        }
        key.push_str(&format!("L{loop_id}"));
        key
    }

    /// Records an access to `var` if `val` is exactly that variable.
    fn observe(&self, st: &mut State, val: &Val) {
        let Some(var) = val.as_var() else { return };
        let ctx = self.context(st);
        let order = st.order;
        st.order += 1;
        st.accesses = Some(Rc::new(Access {
            var,
            order,
            ctx,
            prev: st.accesses.take(),
        }));
        let mut newly = Vec::new();
        for (fi, frame) in st.frames.iter_mut().enumerate() {
            for entry in frame.loops.iter_mut() {
                match entry.first {
                    None => entry.first = Some(var),
                    Some(first) if first != var && !entry.processing => {
                        entry.processing = true;
                        newly.push((fi, entry.id));
                    }
                    _ => {}
                }
            }
        }
        if !newly.is_empty() {
            let keys: Vec<String> = newly
                .iter()
                .map(|&(fi, id)| self.loop_key(st, fi, id))
                .collect();
            let marked = Rc::make_mut(&mut st.marked);
            marked.extend(keys);
        }
    }

    fn concretize(&self, st: &State, val: &Val, what: &str) -> Result<i64, Death> {
        match val {
            Val::Int(v) => Ok(*v),
            Val::Sym(_) => {
                let vals = st
                    .domains
                    .possible_values(val)
                    .map_err(|e| Death::Unsupported(e.to_string()))?;
                if vals.len() == 1 {
                    Ok(*vals.iter().next().expect("one value"))
                } else {
                    Err(Death::Unsupported(format!("symbolic {what}")))
                }
            }
        }
    }

    fn read_input(&self, st: &mut State, idx: i64) -> Result<Val, Death> {
        if idx < 0 {
            return Err(Death::Fault(format!("negative input position {idx}")));
        }
        let idx = idx as u32;
        let known = st.domains.input_len() as u32;
        let end_marker = ByteSet::singleton(0);
        for k in st.nonzero_input..idx.min(known) {
            if st.domains.get(SymVar::Read(k)) == end_marker {
                return Ok(Val::Int(0));
            }
        }
        if idx as usize >= self.config.max_input_len {
            return Err(Death::InputLength);
        }
        for k in st.nonzero_input..idx {
            let mut d = st.domains.get(SymVar::Read(k));
            d.remove(0);
            if d.is_empty() {
                return Err(Death::Infeasible);
            }
            st.domains.set(SymVar::Read(k), d);
        }
        st.nonzero_input = st.nonzero_input.max(idx);
        st.domains.touch(SymVar::Read(idx));
        Ok(Val::var(SymVar::Read(idx)))
    }

    fn next_token(&self, st: &mut State) -> Result<Val, Death> {
        let k = st.next_token;
        let end_marker = ByteSet::singleton(0);
        for j in st.nonzero_tokens..k {
            if st.domains.get(SymVar::TokenRead(j)) == end_marker {
                return Ok(Val::Int(0));
            }
        }
        if k as usize >= self.config.max_input_len {
            return Err(Death::InputLength);
        }
        for j in st.nonzero_tokens..k {
            let mut d = st.domains.get(SymVar::TokenRead(j));
            d.remove(0);
            if d.is_empty() {
                return Err(Death::Infeasible);
            }
            st.domains.set(SymVar::TokenRead(j), d);
        }
        st.nonzero_tokens = k;
        st.next_token += 1;
        st.domains.touch(SymVar::TokenRead(k));
        Ok(Val::var(SymVar::TokenRead(k)))
    }

    /// Runs until the state forks, returns from its entry function, or dies.
    pub fn run(&self, mut st: State) -> Outcome {
        match self.run_inner(&mut st) {
            Ok(Some(fork)) => Outcome::Fork(st, fork),
            Ok(None) => {
                let v = st.stack.pop().expect("return value");
                Outcome::Returned(st, v)
            }
            Err(d) => Outcome::Dead(d),
        }
    }

    /// `Ok(Some(false_state))` on a fork, with `st` as the true branch.
    fn run_inner(&self, st: &mut State) -> Result<Option<State>, Death> {
        let code = &self.program.compiled.functions;
        loop {
            let top = st.frames.len() - 1;
            let frame = &mut st.frames[top];
            let op = code[frame.func].code[frame.pc];
            frame.pc += 1;
            match op {
                Op::Const(v) => st.stack.push(Val::Int(v)),
                Op::Load(slot) => {
                    let v = match slot {
                        Slot::Local(i) => frame.locals[i as usize].clone(),
                        Slot::Global(i) => st.globals[i as usize].clone(),
                    };
                    self.observe(st, &v);
                    st.stack.push(v);
                }
                Op::Store(slot) => {
                    let v = st.stack.pop().expect("stack underflow");
                    match slot {
                        Slot::Local(i) => frame.locals[i as usize] = v,
                        Slot::Global(i) => st.globals[i as usize] = v,
                    }
                }
                Op::LoadIdx(slot) => {
                    let idx = st.stack.pop().expect("stack underflow");
                    let idx = self.concretize(st, &idx, "buffer index")?;
                    let frame = &st.frames[top];
                    let buf = match slot {
                        Slot::Local(i) => &frame.bufs[i as usize],
                        Slot::Global(i) => &st.gbufs[i as usize],
                    };
                    let v = usize::try_from(idx)
                        .ok()
                        .and_then(|i| buf.get(i))
                        .cloned()
                        .ok_or_else(|| Death::Fault(format!("buffer index {idx} out of bounds")))?;
                    self.observe(st, &v);
                    st.stack.push(v);
                }
                Op::StoreIdx(slot) => {
                    let v = st.stack.pop().expect("stack underflow");
                    let idx = st.stack.pop().expect("stack underflow");
                    let idx = self.concretize(st, &idx, "buffer index")?;
                    let frame = &mut st.frames[top];
                    let buf = match slot {
                        Slot::Local(i) => &mut frame.bufs[i as usize],
                        Slot::Global(i) => &mut st.gbufs[i as usize],
                    };
                    let cell = usize::try_from(idx)
                        .ok()
                        .and_then(|i| buf.get_mut(i))
                        .ok_or_else(|| Death::Fault(format!("buffer index {idx} out of bounds")))?;
                    *cell = v;
                }
                Op::Input => {
                    if matches!(self.detour, Detour::Proxy { .. }) {
                        return Err(Death::Unsupported(
                            "parser reads raw input while tokens are proxied".into(),
                        ));
                    }
                    let idx = st.stack.pop().expect("stack underflow");
                    let idx = self.concretize(st, &idx, "input position")?;
                    let v = self.read_input(st, idx)?;
                    self.observe(st, &v);
                    st.stack.push(v);
                }
                Op::Bin(op) => {
                    let b = st.stack.pop().expect("stack underflow");
                    let a = st.stack.pop().expect("stack underflow");
                    st.stack.push(Val::binary(op, a, b));
                }
                Op::Un(op) => {
                    let a = st.stack.pop().expect("stack underflow");
                    st.stack.push(Val::unary(op, a));
                }
                Op::Jump(t) => frame.pc = t,
                Op::JumpIfFalse(t) => {
                    let cond = st.stack.pop().expect("stack underflow");
                    if let Val::Int(v) = cond {
                        if v == 0 {
                            st.frames[top].pc = t;
                        }
                        continue;
                    }
                    let unsupported = |e: SolverError| Death::Unsupported(e.to_string());
                    let mut dt = st.domains.clone();
                    let ok_t = dt.assert_constraint(&cond, true).map_err(unsupported)?;
                    let mut df = st.domains.clone();
                    let ok_f = df.assert_constraint(&cond, false).map_err(unsupported)?;
                    match (ok_t, ok_f) {
                        (true, false) => st.domains = dt,
                        (false, true) => {
                            st.domains = df;
                            st.frames[top].pc = t;
                        }
                        (true, true) => {
                            let mut other = st.clone();
                            other.domains = df;
                            other.frames[top].pc = t;
                            st.domains = dt;
                            return Ok(Some(other));
                        }
                        (false, false) => return Err(Death::Infeasible),
                    }
                }
                Op::Call { func, argc, site } => {
                    let base = st.stack.len() - argc;
                    if let Detour::Proxy { func: tok, sink } = self.detour {
                        if func == tok {
                            st.stack.truncate(base);
                            let v = self.next_token(st)?;
                            match sink {
                                Some(g) => {
                                    st.globals[g as usize] = v;
                                    st.stack.push(Val::Int(0));
                                }
                                None => st.stack.push(v),
                            }
                            continue;
                        }
                    }
                    let depth = st
                        .frames
                        .iter()
                        .filter(|f| f.site == site && f.func == func)
                        .count();
                    if depth + 1 > self.config.recursion_bound {
                        return Err(Death::RecursionBound);
                    }
                    let mut callee = self.new_frame(func, site);
                    for (slot, v) in callee.locals.iter_mut().zip(st.stack.drain(base..)) {
                        *slot = v;
                    }
                    st.frames.push(callee);
                }
                Op::Ret => {
                    st.frames.pop();
                    if st.frames.is_empty() {
                        return Ok(None);
                    }
                }
                Op::Pop => {
                    st.stack.pop();
                }
                Op::LoopEnter(id) => {
                    let key = self.loop_key(st, top, id);
                    let processing = st.marked.contains(&key);
                    st.frames[top].loops.push(LoopEntry {
                        id,
                        iter: 0,
                        first: None,
                        processing,
                    });
                }
                Op::LoopHeader(id) => {
                    let entry = frame
                        .loops
                        .last_mut()
                        .filter(|l| l.id == id)
                        .expect("loop header without entry");
                    entry.iter += 1;
                    if entry.processing && entry.iter > self.config.loop_bound {
                        return Err(Death::LoopBound);
                    }
                    if entry.iter > self.config.safety_loop_bound {
                        let f = &code[frame.func];
                        return Err(Death::SafetyBound(format!(
                            "loop L{id} in `{}` (line {}) exceeded {} iterations",
                            f.name,
                            f.lines[frame.pc - 1],
                            self.config.safety_loop_bound
                        )));
                    }
                }
                Op::LoopExit(id) => {
                    let popped = frame.loops.pop();
                    debug_assert_eq!(popped.map(|l| l.id), Some(id));
                }
            }
        }
    }
}
