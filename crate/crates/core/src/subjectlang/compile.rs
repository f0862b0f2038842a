//! Lowering of the syntax tree to a small stack bytecode shared by the
//! concrete interpreter and the symbolic executor.

use std::collections::HashMap;

use super::ast::*;
use super::SubjectError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Local(u16),
    Global(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Const(i64),
    Load(Slot),
    Store(Slot),
    /// Pops an index, pushes the buffer cell.
    LoadIdx(Slot),
    /// Pops a value, then an index.
    StoreIdx(Slot),
    /// Pops a position, pushes the input byte there.
    Input,
    Bin(BinOp),
    Un(UnOp),
    Jump(usize),
    JumpIfFalse(usize),
    Call { func: usize, argc: usize, site: u32 },
    Ret,
    Pop,
    LoopEnter(u32),
    LoopHeader(u32),
    LoopExit(u32),
}

#[derive(Debug, Clone)]
pub struct CompiledFn {
    pub name: String,
    pub arity: usize,
    pub n_locals: usize,
    /// Sizes of the function's local buffers, by slot.
    pub buffers: Vec<usize>,
    pub code: Vec<Op>,
    /// Source line for each op, for diagnostics.
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub functions: Vec<CompiledFn>,
    pub global_scalars: Vec<String>,
    pub global_buffers: Vec<(String, usize)>,
}

impl Compiled {
    pub fn func_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn global_scalar(&self, name: &str) -> Option<u16> {
        self.global_scalars
            .iter()
            .position(|g| g == name)
            .map(|i| i as u16)
    }
}

pub(crate) fn compile(
    globals: &[GlobalDef],
    functions: &[FunctionDef],
) -> Result<Compiled, SubjectError> {
    let mut global_scalars = Vec::new();
    let mut global_buffers = Vec::new();
    for g in globals {
        let taken = global_scalars.contains(&g.name)
            || global_buffers.iter().any(|(n, _)| n == &g.name);
        if taken {
            return Err(SubjectError::Duplicate(g.name.clone()));
        }
        match g.size {
            Some(n) => global_buffers.push((g.name.clone(), n)),
            None => global_scalars.push(g.name.clone()),
        }
    }
    let fn_index: HashMap<&str, (usize, usize)> = functions
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), (i, f.params.len())))
        .collect();
    if fn_index.len() != functions.len() {
        let mut seen = std::collections::HashSet::new();
        for f in functions {
            if !seen.insert(&f.name) {
                return Err(SubjectError::Duplicate(f.name.clone()));
            }
        }
    }
    let mut out = Vec::new();
    for f in functions {
        let mut fc = FnCompiler {
            fn_index: &fn_index,
            global_scalars: &global_scalars,
            global_buffers: &global_buffers,
            locals: HashMap::new(),
            bufs: HashMap::new(),
            buffers: Vec::new(),
            code: Vec::new(),
            lines: Vec::new(),
            line: f.line,
            breaks: Vec::new(),
            func: &f.name,
        };
        for p in &f.params {
            let n = fc.locals.len() as u16;
            fc.locals.entry(p.clone()).or_insert(n);
        }
        fc.declare(&f.body)?;
        fc.block(&f.body)?;
        fc.emit(Op::Const(0));
        fc.emit(Op::Ret);
        out.push(CompiledFn {
            name: f.name.clone(),
            arity: f.params.len(),
            n_locals: fc.locals.len(),
            buffers: fc.buffers,
            code: fc.code,
            lines: fc.lines,
        });
    }
    Ok(Compiled {
        functions: out,
        global_scalars,
        global_buffers,
    })
}

struct FnCompiler<'a> {
    fn_index: &'a HashMap<&'a str, (usize, usize)>,
    global_scalars: &'a [String],
    global_buffers: &'a [(String, usize)],
    locals: HashMap<String, u16>,
    bufs: HashMap<String, u16>,
    buffers: Vec<usize>,
    code: Vec<Op>,
    lines: Vec<usize>,
    line: usize,
    /// Pending `break` jumps, one list per enclosing loop.
    breaks: Vec<Vec<usize>>,
    func: &'a str,
}

impl FnCompiler<'_> {
    fn emit(&mut self, op: Op) -> usize {
        self.code.push(op);
        self.lines.push(self.line);
        self.code.len() - 1
    }

    fn patch(&mut self, at: usize, target: usize) {
        self.code[at] = match self.code[at] {
            Op::Jump(_) => Op::Jump(target),
            Op::JumpIfFalse(_) => Op::JumpIfFalse(target),
            other => other,
        };
    }

    /// Collects local scalar and buffer declarations ahead of use.
    fn declare(&mut self, body: &[Stmt]) -> Result<(), SubjectError> {
        for s in body {
            match &s.kind {
                StmtKind::Var(name, _) => {
                    let n = self.locals.len() as u16;
                    self.locals.entry(name.clone()).or_insert(n);
                }
                StmtKind::Buf(name, size) => {
                    if let Some(&slot) = self.bufs.get(name) {
                        if self.buffers[slot as usize] != *size {
                            return Err(SubjectError::Duplicate(format!("{}::{name}", self.func)));
                        }
                    } else {
                        self.bufs.insert(name.clone(), self.buffers.len() as u16);
                        self.buffers.push(*size);
                    }
                }
                StmtKind::If(_, a, b) => {
                    self.declare(a)?;
                    self.declare(b)?;
                }
                StmtKind::While { body, .. } => self.declare(body)?,
                _ => {}
            }
        }
        Ok(())
    }

    fn unresolved(&self, name: &str) -> SubjectError {
        SubjectError::Unresolved {
            name: name.to_string(),
            func: self.func.to_string(),
            line: self.line,
        }
    }

    fn scalar(&self, name: &str) -> Result<Slot, SubjectError> {
        if let Some(&i) = self.locals.get(name) {
            return Ok(Slot::Local(i));
        }
        self.global_scalars
            .iter()
            .position(|g| g == name)
            .map(|i| Slot::Global(i as u16))
            .ok_or_else(|| self.unresolved(name))
    }

    fn buffer(&self, name: &str) -> Result<Slot, SubjectError> {
        if let Some(&i) = self.bufs.get(name) {
            return Ok(Slot::Local(i));
        }
        self.global_buffers
            .iter()
            .position(|(g, _)| g == name)
            .map(|i| Slot::Global(i as u16))
            .ok_or_else(|| self.unresolved(name))
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), SubjectError> {
        for s in body {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), SubjectError> {
        self.line = s.line;
        match &s.kind {
            StmtKind::Var(name, init) => {
                match init {
                    Some(e) => self.expr(e)?,
                    None => {
                        self.emit(Op::Const(0));
                    }
                }
                let slot = self.scalar(name)?;
                self.emit(Op::Store(slot));
            }
            StmtKind::Buf(..) => {}
            StmtKind::Assign(name, e) => {
                self.expr(e)?;
                let slot = self.scalar(name)?;
                self.emit(Op::Store(slot));
            }
            StmtKind::Store(name, idx, e) => {
                let slot = self.buffer(name)?;
                self.expr(idx)?;
                self.expr(e)?;
                self.emit(Op::StoreIdx(slot));
            }
            StmtKind::If(cond, then, els) => {
                self.expr(cond)?;
                let jf = self.emit(Op::JumpIfFalse(0));
                self.block(then)?;
                if els.is_empty() {
                    let end = self.code.len();
                    self.patch(jf, end);
                } else {
                    let jend = self.emit(Op::Jump(0));
                    let else_start = self.code.len();
                    self.patch(jf, else_start);
                    self.block(els)?;
                    let end = self.code.len();
                    self.patch(jend, end);
                }
            }
            StmtKind::While {
                loop_id,
                cond,
                body,
            } => {
                self.emit(Op::LoopEnter(*loop_id));
                let header = self.emit(Op::LoopHeader(*loop_id));
                self.expr(cond)?;
                let jf = self.emit(Op::JumpIfFalse(0));
                self.breaks.push(vec![jf]);
                self.block(body)?;
                self.emit(Op::Jump(header));
                let exit = self.emit(Op::LoopExit(*loop_id));
                for j in self.breaks.pop().unwrap_or_default() {
                    self.patch(j, exit);
                }
            }
            StmtKind::Break => {
                let j = self.emit(Op::Jump(0));
                match self.breaks.last_mut() {
                    Some(list) => list.push(j),
                    None => {
                        return Err(SubjectError::Syntax {
                            line: s.line,
                            col: 1,
                            msg: "`break` outside of a loop".into(),
                        })
                    }
                }
            }
            StmtKind::Return(value) => {
                match value {
                    Some(e) => self.expr(e)?,
                    None => {
                        self.emit(Op::Const(0));
                    }
                }
                self.emit(Op::Ret);
            }
            StmtKind::Expr(e) => {
                self.expr(e)?;
                self.emit(Op::Pop);
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<(), SubjectError> {
        match e {
            Expr::Int(v) => {
                self.emit(Op::Const(*v));
            }
            Expr::Var(name) => {
                let slot = self.scalar(name)?;
                self.emit(Op::Load(slot));
            }
            Expr::Index(name, idx) => {
                let slot = self.buffer(name)?;
                self.expr(idx)?;
                self.emit(Op::LoadIdx(slot));
            }
            Expr::Input(idx) => {
                self.expr(idx)?;
                self.emit(Op::Input);
            }
            Expr::Call { name, args, site } => {
                let &(func, arity) = self
                    .fn_index
                    .get(name.as_str())
                    .ok_or_else(|| self.unresolved(name))?;
                if arity != args.len() {
                    return Err(SubjectError::Arity {
                        name: name.clone(),
                        expected: arity,
                        found: args.len(),
                        line: self.line,
                    });
                }
                for a in args {
                    self.expr(a)?;
                }
                self.emit(Op::Call {
                    func,
                    argc: args.len(),
                    site: *site,
                });
            }
            Expr::Unary(op, a) => {
                self.expr(a)?;
                self.emit(Op::Un(*op));
            }
            Expr::Binary(op, a, b) => {
                self.expr(a)?;
                self.expr(b)?;
                self.emit(Op::Bin(*op));
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                let is_and = matches!(e, Expr::And(..));
                // Both operands become branches, so each comparison forks on its own.
                self.expr(a)?;
                let j1 = self.emit(Op::JumpIfFalse(0));
                if is_and {
                    self.expr(b)?;
                    let j2 = self.emit(Op::JumpIfFalse(0));
                    self.emit(Op::Const(1));
                    let jend = self.emit(Op::Jump(0));
                    let f = self.emit(Op::Const(0));
                    self.patch(j1, f);
                    self.patch(j2, f);
                    let end = self.code.len();
                    self.patch(jend, end);
                } else {
                    self.emit(Op::Const(1));
                    let jend1 = self.emit(Op::Jump(0));
                    let rhs = self.code.len();
                    self.patch(j1, rhs);
                    self.expr(b)?;
                    let j2 = self.emit(Op::JumpIfFalse(0));
                    self.emit(Op::Const(1));
                    let jend2 = self.emit(Op::Jump(0));
                    let f = self.emit(Op::Const(0));
                    self.patch(j2, f);
                    let end = self.code.len();
                    self.patch(jend1, end);
                    self.patch(jend2, end);
                }
            }
        }
        Ok(())
    }
}
