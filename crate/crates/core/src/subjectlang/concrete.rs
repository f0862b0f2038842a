use serde::Serialize;

use super::compile::{Op, Slot};
use super::SubjectProgram;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
const MAX_CALL_DEPTH: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseVerdict {
    pub accepted: bool,
    /// Value returned by the entry function, if it returned.
    pub status: Option<i64>,
    /// Number of distinct input positions below the input length that were read.
    pub positions_read: usize,
    pub budget_exceeded: bool,
    /// Runtime fault such as an out-of-bounds buffer access.
    pub fault: Option<String>,
}

struct Frame {
    func: usize,
    pc: usize,
    locals: Vec<i64>,
    bufs: Vec<Vec<i64>>,
}

impl Frame {
    fn new(program: &SubjectProgram, func: usize) -> Frame {
        let f = &program.compiled.functions[func];
        Frame {
            func,
            pc: 0,
            locals: vec![0; f.n_locals],
            bufs: f.buffers.iter().map(|&n| vec![0; n]).collect(),
        }
    }
}

/// Runs `func` concretely on `input`; globals start zeroed.
pub fn run_function(
    program: &SubjectProgram,
    func: usize,
    input: &[u8],
    budget: u64,
) -> ParseVerdict {
    let c = &program.compiled;
    let mut globals = vec![0i64; c.global_scalars.len()];
    let mut gbufs: Vec<Vec<i64>> = c.global_buffers.iter().map(|(_, n)| vec![0; *n]).collect();
    let mut frames = vec![Frame::new(program, func)];
    let mut stack: Vec<i64> = Vec::new();
    let mut read = vec![false; input.len()];
    let mut steps = 0u64;

    let finish = |status: Option<i64>, budget_exceeded: bool, fault: Option<String>, read: &[bool]| {
        ParseVerdict {
            accepted: status == Some(0) && fault.is_none() && !budget_exceeded,
            status,
            positions_read: read.iter().filter(|r| **r).count(),
            budget_exceeded,
            fault,
        }
    };

    loop {
        steps += 1;
        if steps > budget {
            return finish(None, true, None, &read);
        }
        let top = frames.len() - 1;
        let frame = &mut frames[top];
        let op = c.functions[frame.func].code[frame.pc];
        frame.pc += 1;
        let fault_at = |frame: &Frame, what: String| {
            let f = &c.functions[frame.func];
            format!("{} in `{}` at line {}", what, f.name, f.lines[frame.pc - 1])
        };
        match op {
            Op::Const(v) => stack.push(v),
            Op::Load(Slot::Local(i)) => stack.push(frame.locals[i as usize]),
            Op::Load(Slot::Global(i)) => stack.push(globals[i as usize]),
            Op::Store(slot) => {
                let v = stack.pop().expect("stack underflow");
                match slot {
                    Slot::Local(i) => frame.locals[i as usize] = v,
                    Slot::Global(i) => globals[i as usize] = v,
                }
            }
            Op::LoadIdx(slot) => {
                let idx = stack.pop().expect("stack underflow");
                let buf = match slot {
                    Slot::Local(i) => &frame.bufs[i as usize],
                    Slot::Global(i) => &gbufs[i as usize],
                };
                match usize::try_from(idx).ok().and_then(|i| buf.get(i)) {
                    Some(v) => stack.push(*v),
                    None => {
                        let msg = fault_at(frame, format!("buffer index {idx} out of bounds"));
                        return finish(None, false, Some(msg), &read);
                    }
                }
            }
            Op::StoreIdx(slot) => {
                let v = stack.pop().expect("stack underflow");
                let idx = stack.pop().expect("stack underflow");
                let ok = {
                    let buf = match slot {
                        Slot::Local(i) => &mut frame.bufs[i as usize],
                        Slot::Global(i) => &mut gbufs[i as usize],
                    };
                    match usize::try_from(idx).ok().and_then(|i| buf.get_mut(i)) {
                        Some(cell) => {
                            *cell = v;
                            true
                        }
                        None => false,
                    }
                };
                if !ok {
                    let msg = fault_at(frame, format!("buffer index {idx} out of bounds"));
                    return finish(None, false, Some(msg), &read);
                }
            }
            Op::Input => {
                let idx = stack.pop().expect("stack underflow");
                if idx < 0 {
                    let msg = fault_at(frame, format!("negative input position {idx}"));
                    return finish(None, false, Some(msg), &read);
                }
                let v = match input.get(idx as usize) {
                    Some(b) => {
                        read[idx as usize] = true;
                        *b as i64
                    }
                    None => 0,
                };
                stack.push(v);
            }
            Op::Bin(op) => {
                let b = stack.pop().expect("stack underflow");
                let a = stack.pop().expect("stack underflow");
                stack.push(op.apply(a, b));
            }
            Op::Un(op) => {
                let a = stack.pop().expect("stack underflow");
                stack.push(op.apply(a));
            }
            Op::Jump(t) => frame.pc = t,
            Op::JumpIfFalse(t) => {
                if stack.pop().expect("stack underflow") == 0 {
                    frame.pc = t;
                }
            }
            Op::Call { func, argc, .. } => {
                if frames.len() >= MAX_CALL_DEPTH {
                    let msg = fault_at(&frames[top], "call depth limit exceeded".to_string());
                    return finish(None, false, Some(msg), &read);
                }
                let mut callee = Frame::new(program, func);
                let base = stack.len() - argc;
                callee.locals[..argc].copy_from_slice(&stack[base..]);
                stack.truncate(base);
                frames.push(callee);
            }
            Op::Ret => {
                frames.pop();
                if frames.is_empty() {
                    let v = stack.pop().expect("stack underflow");
                    return finish(Some(v), false, None, &read);
                }
            }
            Op::Pop => {
                stack.pop();
            }
            Op::LoopEnter(_) | Op::LoopHeader(_) | Op::LoopExit(_) => {}
        }
    }
}
