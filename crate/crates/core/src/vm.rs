//! A small register machine for input parsers. Programs are written in a
//! line-oriented assembly; execution tracks which input bytes flow into
//! each instruction's operands and emits one trace tuple per tainted
//! instruction execution.
//!
//! ```text
//! fn main               # first function is the entry point
//!   mov i, 0
//! loop:                 # label starts a basic block
//!   @I1 read c, 1       # explicit instruction id
//!   beq c, 10, done, loop
//! done:
//!   halt
//! end
//! ```

use crate::trace_model::{BlockDoc, ByteInterval, CallDoc, CfgDoc, CfgPackage, FunctionDoc, TaintTrace};
use smallvec::SmallVec;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Link(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operand {
    Reg(u16),
    Imm(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mem {
    pub base: Operand,
    pub offset: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Ge,
    Gt,
    Le,
}

impl Cmp {
    fn holds(self, a: u64, b: u64) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Ge => a >= b,
            Cmp::Gt => a > b,
            Cmp::Le => a <= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Mov(u16, Operand),
    Bin(BinOp, u16, Operand, Operand),
    Read(u16, Operand),
    Peek(u16),
    ReadV(u16, Operand),
    ReadUntil(u16, Operand),
    ReadDec(u16),
    Eof(u16),
    Tell(u16),
    Seek(Operand),
    Ld(u16, Mem),
    St(Mem, Operand),
    Use(Vec<Operand>),
    Call(usize),
    Br(Cmp, Operand, Operand, usize, usize),
    Switch(Operand, Vec<(u64, usize)>, usize),
    Jmp(usize),
    Ret,
    Halt,
    Fail,
}

impl Op {
    fn is_terminator(&self) -> bool {
        matches!(self, Op::Br(..) | Op::Switch(..) | Op::Jmp(_) | Op::Ret | Op::Halt | Op::Fail)
    }

    fn targets(&self) -> Vec<usize> {
        match self {
            Op::Br(_, _, _, t, f) => vec![*t, *f],
            Op::Switch(_, cases, d) => cases.iter().map(|c| c.1).chain([*d]).collect(),
            Op::Jmp(t) => vec![*t],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Insn {
    pub id: String,
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: String,
    pub func: usize,
    /// Instruction index range `[start, end)`; the last one is the terminator.
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Func {
    pub name: String,
    pub entry: usize,
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub insns: Vec<Insn>,
    pub blocks: Vec<Block>,
    pub funcs: Vec<Func>,
    pub regs: Vec<String>,
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\\' if quoted && !escaped => {
                escaped = true;
                continue;
            }
            '\'' if !escaped => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut escaped = false;
    for ch in s.chars() {
        if quoted {
            cur.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '\'' {
                quoted = false;
            }
            continue;
        }
        match ch {
            '\'' => {
                quoted = true;
                cur.push(ch);
            }
            ',' => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_char_literal(s: &str) -> Option<u64> {
    let inner = s.strip_prefix('\'')?.strip_suffix('\'')?;
    let mut bytes = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        let b = if c == '\\' {
            match chars.next()? {
                'n' => b'\n',
                'r' => b'\r',
                't' => b'\t',
                '0' => 0,
                '\\' => b'\\',
                '\'' => b'\'',
                'x' => {
                    let h: String = chars.by_ref().take(2).collect();
                    u8::from_str_radix(&h, 16).ok()?
                }
                _ => return None,
            }
        } else if c.is_ascii() {
            c as u8
        } else {
            return None;
        };
        bytes.push(b);
    }
    if bytes.is_empty() || bytes.len() > 8 {
        return None;
    }
    Some(bytes.iter().rev().fold(0u64, |acc, &b| (acc << 8) | b as u64))
}

fn parse_imm(s: &str) -> Option<u64> {
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(h, 16).ok();
    }
    if s.starts_with('\'') {
        return parse_char_literal(s);
    }
    s.parse().ok()
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct RawInsn {
    line: usize,
    id: Option<String>,
    mnemonic: String,
    operands: Vec<String>,
}

struct RawBlock {
    label: String,
    insns: Vec<RawInsn>,
}

struct RawFunc {
    name: String,
    blocks: Vec<RawBlock>,
}

struct Assembler {
    regs: Vec<String>,
    reg_index: HashMap<String, u16>,
}

impl Assembler {
    fn reg(&mut self, name: &str) -> u16 {
        if let Some(&r) = self.reg_index.get(name) {
            return r;
        }
        let r = self.regs.len() as u16;
        self.regs.push(name.to_string());
        self.reg_index.insert(name.to_string(), r);
        r
    }
}

pub fn assemble(text: &str) -> Result<Program, AsmError> {
    let mut funcs: Vec<RawFunc> = Vec::new();
    let mut open = false;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let syntax = |msg: String| AsmError::Syntax { line: line_no, msg };
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("fn ") {
            if open {
                return Err(syntax("nested function".into()));
            }
            let name = name.trim();
            if !is_ident(name) {
                return Err(syntax(format!("bad function name `{name}`")));
            }
            funcs.push(RawFunc { name: name.to_string(), blocks: Vec::new() });
            open = true;
            continue;
        }
        if !open {
            return Err(syntax("instruction outside a function".into()));
        }
        let func = funcs.last_mut().unwrap();
        if line == "end" {
            open = false;
            continue;
        }
        if let Some(label) = line.strip_suffix(':') {
            let label = label.trim();
            if !is_ident(label) {
                return Err(syntax(format!("bad label `{label}`")));
            }
            if func.blocks.iter().any(|b| b.label == label) {
                return Err(syntax(format!("duplicate label `{label}`")));
            }
            func.blocks.push(RawBlock { label: label.to_string(), insns: Vec::new() });
            continue;
        }
        let (id, rest) = match line.strip_prefix('@') {
            Some(r) => {
                let (id, rest) = r.split_once(char::is_whitespace).ok_or_else(|| syntax("id without instruction".into()))?;
                (Some(id.to_string()), rest.trim())
            }
            None => (None, line),
        };
        let (mnemonic, ops) = match rest.split_once(char::is_whitespace) {
            Some((m, o)) => (m, o.trim()),
            None => (rest, ""),
        };
        let needs_block = match func.blocks.last() {
            None => true,
            Some(b) => b.insns.last().is_some_and(|i| is_terminator_name(&i.mnemonic)),
        };
        if needs_block {
            let label = if func.blocks.is_empty() { "entry".to_string() } else { format!("b{}", func.blocks.len()) };
            func.blocks.push(RawBlock { label, insns: Vec::new() });
        }
        func.blocks.last_mut().unwrap().insns.push(RawInsn {
            line: line_no,
            id,
            mnemonic: mnemonic.to_string(),
            operands: split_operands(ops),
        });
    }
    if open {
        return Err(AsmError::Link("missing `end`".into()));
    }
    if funcs.is_empty() {
        return Err(AsmError::Link("program has no functions".into()));
    }
    link(funcs)
}

fn is_terminator_name(m: &str) -> bool {
    matches!(m, "beq" | "bne" | "blt" | "bge" | "bgt" | "ble" | "switch" | "jmp" | "ret" | "halt" | "fail")
}

fn link(funcs: Vec<RawFunc>) -> Result<Program, AsmError> {
    let fn_index: HashMap<String, usize> = funcs.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
    if fn_index.len() != funcs.len() {
        return Err(AsmError::Link("duplicate function name".into()));
    }
    let mut asm = Assembler { regs: Vec::new(), reg_index: HashMap::new() };
    let mut prog = Program { insns: Vec::new(), blocks: Vec::new(), funcs: Vec::new(), regs: Vec::new() };
    let mut label_index: Vec<HashMap<String, usize>> = Vec::new();
    for (fi, f) in funcs.iter().enumerate() {
        let mut labels = HashMap::new();
        let mut ids = Vec::new();
        for b in &f.blocks {
            labels.insert(b.label.clone(), prog.blocks.len());
            ids.push(prog.blocks.len());
            prog.blocks.push(Block { id: format!("{}.{}", f.name, b.label), func: fi, start: 0, end: 0 });
        }
        if ids.is_empty() {
            return Err(AsmError::Link(format!("function {} is empty", f.name)));
        }
        prog.funcs.push(Func { name: f.name.clone(), entry: ids[0], blocks: ids });
        label_index.push(labels);
    }
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (fi, f) in funcs.iter().enumerate() {
        let mut auto = 0usize;
        let fblocks = prog.funcs[fi].blocks.clone();
        for (bi, b) in f.blocks.iter().enumerate() {
            let gb = fblocks[bi];
            prog.blocks[gb].start = prog.insns.len();
            for ri in &b.insns {
                let syntax = |msg: String| AsmError::Syntax { line: ri.line, msg };
                let op = parse_op(&mut asm, ri, &label_index[fi], &fn_index).map_err(syntax)?;
                let id = match &ri.id {
                    Some(id) => id.clone(),
                    None => {
                        auto += 1;
                        format!("{}:{}", f.name, auto)
                    }
                };
                if seen_ids.insert(id.clone(), ri.line).is_some() {
                    return Err(syntax(format!("duplicate instruction id {id}")));
                }
                prog.insns.push(Insn { id, op });
            }
            let terminated = prog.insns.len() > prog.blocks[gb].start && prog.insns.last().unwrap().op.is_terminator();
            if !terminated {
                match fblocks.get(bi + 1) {
                    Some(&next) => {
                        auto += 1;
                        let id = format!("{}:{}", f.name, auto);
                        seen_ids.insert(id.clone(), 0);
                        prog.insns.push(Insn { id, op: Op::Jmp(next) });
                    }
                    None => return Err(AsmError::Link(format!("block {} falls off the end", prog.blocks[gb].id))),
                }
            }
            prog.blocks[gb].end = prog.insns.len();
        }
    }
    prog.regs = asm.regs;
    Ok(prog)
}

fn parse_op(asm: &mut Assembler, ri: &RawInsn, labels: &HashMap<String, usize>, fns: &HashMap<String, usize>) -> Result<Op, String> {
    let ops = &ri.operands;
    let arity = |n: usize| -> Result<(), String> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {n} operands, got {}", ri.mnemonic, ops.len()))
        }
    };
    let label = |s: &str| labels.get(s).copied().ok_or_else(|| format!("unknown label `{s}`"));
    fn operand(asm: &mut Assembler, s: &str) -> Result<Operand, String> {
        if let Some(v) = parse_imm(s) {
            Ok(Operand::Imm(v))
        } else if is_ident(s) {
            Ok(Operand::Reg(asm.reg(s)))
        } else {
            Err(format!("bad operand `{s}`"))
        }
    }
    fn dest(asm: &mut Assembler, s: &str) -> Result<u16, String> {
        if is_ident(s) {
            Ok(asm.reg(s))
        } else {
            Err(format!("bad destination `{s}`"))
        }
    }
    fn mem(asm: &mut Assembler, s: &str) -> Result<Mem, String> {
        let inner = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(|| format!("bad memory operand `{s}`"))?;
        let (base, off) = match inner.split_once('+') {
            Some((b, o)) => (b.trim(), parse_imm(o.trim()).ok_or_else(|| format!("bad offset in `{s}`"))?),
            None => (inner.trim(), 0),
        };
        Ok(Mem { base: operand(asm, base)?, offset: off })
    }
    let m = ri.mnemonic.as_str();
    let bin = match m {
        "add" => Some(BinOp::Add),
        "sub" => Some(BinOp::Sub),
        "mul" => Some(BinOp::Mul),
        "div" => Some(BinOp::Div),
        "rem" => Some(BinOp::Rem),
        "and" => Some(BinOp::And),
        "or" => Some(BinOp::Or),
        "xor" => Some(BinOp::Xor),
        "shl" => Some(BinOp::Shl),
        "shr" => Some(BinOp::Shr),
        _ => None,
    };
    if let Some(b) = bin {
        arity(3)?;
        return Ok(Op::Bin(b, dest(asm, &ops[0])?, operand(asm, &ops[1])?, operand(asm, &ops[2])?));
    }
    let cmp = match m {
        "beq" => Some(Cmp::Eq),
        "bne" => Some(Cmp::Ne),
        "blt" => Some(Cmp::Lt),
        "bge" => Some(Cmp::Ge),
        "bgt" => Some(Cmp::Gt),
        "ble" => Some(Cmp::Le),
        _ => None,
    };
    if let Some(c) = cmp {
        arity(4)?;
        return Ok(Op::Br(c, operand(asm, &ops[0])?, operand(asm, &ops[1])?, label(&ops[2])?, label(&ops[3])?));
    }
    Ok(match m {
        "mov" => {
            arity(2)?;
            Op::Mov(dest(asm, &ops[0])?, operand(asm, &ops[1])?)
        }
        "read" => {
            arity(2)?;
            Op::Read(dest(asm, &ops[0])?, operand(asm, &ops[1])?)
        }
        "readv" => {
            arity(2)?;
            Op::ReadV(dest(asm, &ops[0])?, operand(asm, &ops[1])?)
        }
        "readuntil" => {
            arity(2)?;
            Op::ReadUntil(dest(asm, &ops[0])?, operand(asm, &ops[1])?)
        }
        "peek" | "readdec" | "eof" | "tell" => {
            arity(1)?;
            let d = dest(asm, &ops[0])?;
            match m {
                "peek" => Op::Peek(d),
                "readdec" => Op::ReadDec(d),
                "eof" => Op::Eof(d),
                _ => Op::Tell(d),
            }
        }
        "seek" => {
            arity(1)?;
            Op::Seek(operand(asm, &ops[0])?)
        }
        "ld" => {
            arity(2)?;
            Op::Ld(dest(asm, &ops[0])?, mem(asm, &ops[1])?)
        }
        "st" => {
            arity(2)?;
            Op::St(mem(asm, &ops[0])?, operand(asm, &ops[1])?)
        }
        "use" => {
            if ops.is_empty() {
                return Err("`use` needs operands".into());
            }
            Op::Use(ops.iter().map(|o| operand(asm, o)).collect::<Result<_, _>>()?)
        }
        "call" => {
            arity(1)?;
            Op::Call(*fns.get(&ops[0]).ok_or_else(|| format!("unknown function `{}`", ops[0]))?)
        }
        "switch" => {
            if ops.len() < 2 {
                return Err("`switch` needs a value and a default".into());
            }
            let a = operand(asm, &ops[0])?;
            let mut cases = Vec::new();
            for c in &ops[1..ops.len() - 1] {
                let (v, l) = c.rsplit_once(':').ok_or_else(|| format!("bad case `{c}`"))?;
                let v = parse_imm(v.trim()).ok_or_else(|| format!("bad case value `{v}`"))?;
                cases.push((v, label(l.trim())?));
            }
            Op::Switch(a, cases, label(&ops[ops.len() - 1])?)
        }
        "jmp" => {
            arity(1)?;
            Op::Jmp(label(&ops[0])?)
        }
        "ret" | "halt" | "fail" => {
            arity(0)?;
            match m {
                "ret" => Op::Ret,
                "halt" => Op::Halt,
                _ => Op::Fail,
            }
        }
        other => return Err(format!("unknown instruction `{other}`")),
    })
}

impl Program {
    pub fn block_of_insn(&self, pc: usize) -> usize {
        self.blocks.partition_point(|b| b.end <= pc)
    }

    pub fn cfg_doc(&self) -> CfgDoc {
        let mut edges = Vec::new();
        let mut calls = Vec::new();
        let mut exits: BTreeMap<String, Vec<String>> = self.funcs.iter().map(|f| (f.name.clone(), Vec::new())).collect();
        for b in &self.blocks {
            for insn in &self.insns[b.start..b.end] {
                if let Op::Call(f) = insn.op {
                    calls.push(CallDoc { site: insn.id.clone(), callee: self.funcs[f].name.clone() });
                }
            }
            let term = &self.insns[b.end - 1].op;
            let mut seen = BTreeSet::new();
            for t in term.targets() {
                if seen.insert(t) {
                    edges.push([b.id.clone(), self.blocks[t].id.clone()]);
                }
            }
            if matches!(term, Op::Ret | Op::Halt | Op::Fail) {
                exits.get_mut(&self.funcs[b.func].name).unwrap().push(b.id.clone());
            }
        }
        CfgDoc {
            functions: self
                .funcs
                .iter()
                .map(|f| FunctionDoc { id: f.name.clone(), entry: self.blocks[f.entry].id.clone() })
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDoc { id: b.id.clone(), insns: self.insns[b.start..b.end].iter().map(|i| i.id.clone()).collect() })
                .collect(),
            edges,
            calls,
            exits,
        }
    }

    pub fn cfg(&self) -> CfgPackage {
        CfgPackage::from_doc(&self.cfg_doc()).expect("assembled programs export valid graphs")
    }
}

/// Abstract taint carried by registers and memory cells.
pub trait TaintDomain: Clone + Default + std::fmt::Debug {
    fn range(start: u32, end: u32) -> Self;
    fn is_empty(&self) -> bool;
    fn union_with(&mut self, other: &Self);
}

/// Normalized interval set; the production domain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Intervals(pub SmallVec<[ByteInterval; 2]>);

impl TaintDomain for Intervals {
    fn range(start: u32, end: u32) -> Intervals {
        let mut v = SmallVec::new();
        if start < end {
            v.push(ByteInterval { start, end });
        }
        Intervals(v)
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn union_with(&mut self, other: &Intervals) {
        if other.0.is_empty() || self.0 == other.0 {
            return;
        }
        if self.0.is_empty() {
            self.0 = other.0.clone();
            return;
        }
        self.0.extend(other.0.iter().copied());
        self.0.sort_unstable();
        let mut out: SmallVec<[ByteInterval; 2]> = SmallVec::new();
        for iv in self.0.drain(..) {
            match out.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => out.push(iv),
            }
        }
        self.0 = out;
    }
}

/// Explicit byte sets; slow, used as a reference for the interval domain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ByteSet(pub BTreeSet<u32>);

impl TaintDomain for ByteSet {
    fn range(start: u32, end: u32) -> ByteSet {
        ByteSet((start..end).collect())
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn union_with(&mut self, other: &ByteSet) {
        self.0.extend(other.0.iter().copied());
    }
}

impl ByteSet {
    pub fn intervals(&self) -> Vec<ByteInterval> {
        let mut out: Vec<ByteInterval> = Vec::new();
        for &b in &self.0 {
            match out.last_mut() {
                Some(last) if last.end == b => last.end = b + 1,
                _ => out.push(ByteInterval { start: b, end: b + 1 }),
            }
        }
        out
    }
}

/// No tracking at all, for plain acceptance runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NoTaint;

impl TaintDomain for NoTaint {
    fn range(_: u32, _: u32) -> NoTaint {
        NoTaint
    }

    fn is_empty(&self) -> bool {
        true
    }

    fn union_with(&mut self, _: &NoTaint) {}
}

/// Receives contexts and tuples as the machine runs.
pub trait Sink<T> {
    fn context(&mut self, path: &[u32]) -> u32;
    fn tuple(&mut self, addr: u32, ctx: u32, taint: &T);
}

impl Sink<Intervals> for TaintTrace {
    fn context(&mut self, path: &[u32]) -> u32 {
        self.intern_context(path)
    }

    fn tuple(&mut self, addr: u32, ctx: u32, taint: &Intervals) {
        self.push(addr, ctx, &taint.0);
    }
}

/// Keeps contexts and tuples in memory, for any domain.
#[derive(Debug, Default)]
pub struct Collect<T> {
    pub contexts: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, u32>,
    pub tuples: Vec<(u32, u32, T)>,
}

impl<T: Clone> Sink<T> for Collect<T> {
    fn context(&mut self, path: &[u32]) -> u32 {
        if let Some(&i) = self.index.get(path) {
            return i;
        }
        let i = self.contexts.len() as u32;
        self.contexts.push(path.to_vec());
        self.index.insert(path.to_vec(), i);
        i
    }

    fn tuple(&mut self, addr: u32, ctx: u32, taint: &T) {
        self.tuples.push((addr, ctx, taint.clone()));
    }
}

#[derive(Debug, Default)]
pub struct Discard;

impl<T> Sink<T> for Discard {
    fn context(&mut self, _: &[u32]) -> u32 {
        0
    }

    fn tuple(&mut self, _: u32, _: u32, _: &T) {}
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Accepted,
    Rejected(String),
    Trapped(String),
}

impl Status {
    pub fn accepted(&self) -> bool {
        matches!(self, Status::Accepted)
    }
}

#[derive(Clone, Debug)]
pub struct VmConfig {
    pub step_budget: u64,
    pub max_depth: usize,
    pub record_transitions: bool,
}

impl Default for VmConfig {
    fn default() -> VmConfig {
        VmConfig { step_budget: 200_000_000, max_depth: 10_000, record_transitions: false }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: Status,
    pub steps: u64,
    /// Observed intraprocedural block transitions.
    pub transitions: BTreeSet<(usize, usize)>,
}

struct Frame {
    ret_pc: usize,
    ret_block: usize,
    func: usize,
    ctx: u32,
    path: Vec<u32>,
}

struct Machine<'a, T, S> {
    input: &'a [u8],
    pos: usize,
    regs: Vec<u64>,
    taint: Vec<T>,
    mem: HashMap<u64, (u64, T)>,
    sink: &'a mut S,
    empty: T,
}

impl<'a, T: TaintDomain, S: Sink<T>> Machine<'a, T, S> {
    fn val(&self, o: Operand) -> (u64, &T) {
        match o {
            Operand::Reg(r) => (self.regs[r as usize], &self.taint[r as usize]),
            Operand::Imm(v) => (v, &self.empty),
        }
    }

    fn emit(&mut self, pc: usize, ctx: u32, t: &T) {
        if !t.is_empty() {
            self.sink.tuple(pc as u32, ctx, t);
        }
    }

    fn set(&mut self, d: u16, v: u64, t: T) {
        self.regs[d as usize] = v;
        self.taint[d as usize] = t;
    }

    fn read_bytes(&mut self, n: usize) -> Option<(u64, T)> {
        if self.pos + n > self.input.len() {
            return None;
        }
        let bytes = &self.input[self.pos..self.pos + n];
        let v = bytes.iter().take(8).rev().fold(0u64, |a, &b| (a << 8) | b as u64);
        let t = T::range(self.pos as u32, (self.pos + n) as u32);
        self.pos += n;
        Some((v, t))
    }
}

/// Runs a program on an input, reporting tuples to `sink`.
pub fn execute<T: TaintDomain, S: Sink<T>>(prog: &Program, input: &[u8], config: &VmConfig, sink: &mut S) -> Outcome {
    let mut m = Machine {
        input,
        pos: 0,
        regs: vec![0; prog.regs.len()],
        taint: vec![T::default(); prog.regs.len()],
        mem: HashMap::new(),
        sink,
        empty: T::default(),
    };
    let mut transitions = BTreeSet::new();
    let mut frames: Vec<Frame> = Vec::new();
    let mut func = 0usize;
    let mut block = prog.funcs[0].entry;
    let mut pc = prog.blocks[block].start;
    let mut path: Vec<u32> = Vec::new();
    let mut ctx = m.sink.context(&path);
    let mut steps = 0u64;
    let reject = |s: &str| Status::Rejected(s.to_string());
    let status = loop {
        steps += 1;
        if steps > config.step_budget {
            break Status::Trapped("step budget exhausted".into());
        }
        let mut next_block: Option<usize> = None;
        match &prog.insns[pc].op {
            Op::Mov(d, s) => {
                let (v, t) = m.val(*s);
                let t = t.clone();
                m.emit(pc, ctx, &t);
                m.set(*d, v, t);
            }
            Op::Bin(op, d, a, b) => {
                let (x, ta) = m.val(*a);
                let (y, tb) = m.val(*b);
                let mut t = ta.clone();
                t.union_with(tb);
                let v = match op {
                    BinOp::Add => x.wrapping_add(y),
                    BinOp::Sub => x.wrapping_sub(y),
                    BinOp::Mul => x.wrapping_mul(y),
                    BinOp::Div | BinOp::Rem if y == 0 => break reject("division by zero"),
                    BinOp::Div => x / y,
                    BinOp::Rem => x % y,
                    BinOp::And => x & y,
                    BinOp::Or => x | y,
                    BinOp::Xor => x ^ y,
                    BinOp::Shl => x.checked_shl(y as u32).unwrap_or(0),
                    BinOp::Shr => x.checked_shr(y as u32).unwrap_or(0),
                };
                m.emit(pc, ctx, &t);
                m.set(*d, v, t);
            }
            Op::Read(d, n) => {
                let (n, tn) = m.val(*n);
                let tn = tn.clone();
                m.emit(pc, ctx, &tn);
                if n > 8 {
                    break Status::Trapped("read wider than a register".into());
                }
                match m.read_bytes(n as usize) {
                    Some((v, t)) => m.set(*d, v, t),
                    None => break reject("unexpected end of input"),
                }
            }
            Op::ReadV(d, n) => {
                let (n, tn) = m.val(*n);
                let tn = tn.clone();
                m.emit(pc, ctx, &tn);
                if n as usize > m.input.len() - m.pos {
                    break reject("blob extends past end of input");
                }
                let (v, t) = m.read_bytes(n as usize).unwrap();
                m.set(*d, v, t);
            }
            Op::Peek(d) => match m.input.get(m.pos) {
                Some(&b) => {
                    let t = T::range(m.pos as u32, m.pos as u32 + 1);
                    m.set(*d, b as u64, t)
                }
                None => m.set(*d, u64::MAX, T::default()),
            },
            Op::ReadUntil(d, delim) => {
                let (delim, td) = m.val(*delim);
                let td = td.clone();
                m.emit(pc, ctx, &td);
                let rest = &m.input[m.pos..];
                match rest.iter().position(|&b| b as u64 == delim) {
                    Some(k) => {
                        let t = T::range(m.pos as u32, (m.pos + k) as u32);
                        m.pos += k;
                        m.set(*d, k as u64, t);
                    }
                    None => break reject("delimiter not found"),
                }
            }
            Op::ReadDec(d) => {
                let rest = &m.input[m.pos..];
                let k = rest.iter().take_while(|b| b.is_ascii_digit()).count();
                if k == 0 {
                    break reject("expected a decimal number");
                }
                let v = rest[..k].iter().fold(0u64, |a, &b| a.wrapping_mul(10).wrapping_add((b - b'0') as u64));
                let t = T::range(m.pos as u32, (m.pos + k) as u32);
                m.pos += k;
                m.set(*d, v, t);
            }
            Op::Eof(d) => {
                let v = (m.pos >= m.input.len()) as u64;
                m.set(*d, v, T::default());
            }
            Op::Tell(d) => {
                let v = m.pos as u64;
                m.set(*d, v, T::default());
            }
            Op::Seek(a) => {
                let (v, t) = m.val(*a);
                let t = t.clone();
                m.emit(pc, ctx, &t);
                if v > m.input.len() as u64 {
                    break reject("seek past end of input");
                }
                m.pos = v as usize;
            }
            Op::Ld(d, mem) => {
                let (base, tb) = m.val(mem.base);
                let mut t = tb.clone();
                let addr = base.wrapping_add(mem.offset);
                let (v, vt) = m.mem.get(&addr).cloned().unwrap_or_default();
                t.union_with(&vt);
                m.emit(pc, ctx, &t);
                m.set(*d, v, vt);
            }
            Op::St(mem, v) => {
                let (base, tb) = m.val(mem.base);
                let (x, tx) = m.val(*v);
                let mut t = tb.clone();
                t.union_with(tx);
                let tx = tx.clone();
                m.emit(pc, ctx, &t);
                m.mem.insert(base.wrapping_add(mem.offset), (x, tx));
            }
            Op::Use(ops) => {
                let mut t = T::default();
                for o in ops {
                    t.union_with(m.val(*o).1);
                }
                m.emit(pc, ctx, &t);
            }
            Op::Call(f) => {
                if frames.len() >= config.max_depth {
                    break Status::Trapped("call depth exceeded".into());
                }
                let outer = frames.iter().find(|fr| fr.func == *f).map(|fr| fr.path.clone());
                let outer = outer.or_else(|| (func == *f).then(|| path.clone()));
                let new_path = outer.unwrap_or_else(|| {
                    let mut p = path.clone();
                    p.push(pc as u32);
                    p
                });
                frames.push(Frame { ret_pc: pc + 1, ret_block: block, func, ctx, path: std::mem::replace(&mut path, new_path) });
                ctx = m.sink.context(&path);
                func = *f;
                block = prog.funcs[*f].entry;
                pc = prog.blocks[block].start;
                continue;
            }
            Op::Br(c, a, b, t, f) => {
                let (x, ta) = m.val(*a);
                let (y, tb) = m.val(*b);
                let mut tt = ta.clone();
                tt.union_with(tb);
                m.emit(pc, ctx, &tt);
                next_block = Some(if c.holds(x, y) { *t } else { *f });
            }
            Op::Switch(a, cases, d) => {
                let (x, ta) = m.val(*a);
                let ta = ta.clone();
                m.emit(pc, ctx, &ta);
                next_block = Some(cases.iter().find(|c| c.0 == x).map_or(*d, |c| c.1));
            }
            Op::Jmp(t) => next_block = Some(*t),
            Op::Ret => match frames.pop() {
                Some(fr) => {
                    pc = fr.ret_pc;
                    block = fr.ret_block;
                    func = fr.func;
                    ctx = fr.ctx;
                    path = fr.path;
                    continue;
                }
                None => break Status::Accepted,
            },
            Op::Halt => break Status::Accepted,
            Op::Fail => break reject("program rejected the input"),
        }
        match next_block {
            Some(nb) => {
                if config.record_transitions {
                    transitions.insert((block, nb));
                }
                block = nb;
                pc = prog.blocks[nb].start;
            }
            None => pc += 1,
        }
    };
    Outcome { status, steps, transitions }
}

/// Runs with interval taint and returns the trace.
pub fn trace(prog: &Program, input: &[u8], config: &VmConfig) -> (TaintTrace, Outcome) {
    let mut t = TaintTrace::new(input.to_vec());
    for insn in &prog.insns {
        t.names.intern(&insn.id);
    }
    let out = execute::<Intervals, _>(prog, input, config, &mut t);
    (t, out)
}

/// Runs without taint tracking.
pub fn accepts(prog: &Program, input: &[u8], config: &VmConfig) -> Outcome {
    execute::<NoTaint, _>(prog, input, config, &mut Discard)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ECHO: &str = "
fn main
  @R read c, 1
  beq c, 'x', ok, bad
ok:
  halt
bad:
  fail
end
";

    #[test]
    fn branch_on_read_byte_is_traced() {
        let p = assemble(ECHO).unwrap();
        let (t, out) = trace(&p, b"x", &VmConfig::default());
        assert_eq!(out.status, Status::Accepted);
        assert_eq!(t.len(), 1);
        assert_eq!(t.names.name(t.get(0).addr), "main:1");
        assert_eq!(t.get(0).taints, &[ByteInterval::new(0, 1)]);
        let (_, out) = trace(&p, b"y", &VmConfig::default());
        assert!(matches!(out.status, Status::Rejected(_)));
    }

    #[test]
    fn char_literals_pack_little_endian() {
        assert_eq!(parse_char_literal("'BM'"), Some(0x4D42));
        assert_eq!(parse_char_literal("'\\n'"), Some(10));
        assert_eq!(parse_char_literal("','"), Some(44));
        assert_eq!(split_operands("c, ',', a"), vec!["c", "','", "a"]);
    }

    #[test]
    fn arithmetic_unions_taint() {
        let p = assemble(
            "fn main\n  read a, 1\n  read b, 2\n  add s, a, b\n  use s\n  halt\nend\n",
        )
        .unwrap();
        let (t, _) = trace(&p, b"\x01\x02\x00", &VmConfig::default());
        let last = t.get(t.len() - 1);
        assert_eq!(last.taints, &[ByteInterval::new(0, 3)]);
    }

    #[test]
    fn recursion_reuses_outer_context() {
        let src = "
fn main
  mov k, 3
  @site call rec
  halt
end
fn rec
  beq k, 0, out, more
more:
  sub k, k, 1
  read c, 1
  use c
  @inner call rec
  ret
out:
  ret
end
";
        let p = assemble(src).unwrap();
        let (t, out) = trace(&p, b"abc", &VmConfig::default());
        assert_eq!(out.status, Status::Accepted);
        let ctxs: BTreeSet<Vec<&str>> = t.iter().map(|x| t.context_names(x.ctx)).collect();
        assert_eq!(ctxs.len(), 1);
        assert_eq!(ctxs.into_iter().next().unwrap(), vec!["site"]);
        t.validate().unwrap();
    }

    #[test]
    fn cfg_export_lists_exits_and_calls() {
        let p = assemble("fn main\n  call f\n  halt\nend\nfn f\n  ret\nend\n").unwrap();
        let doc = p.cfg_doc();
        assert_eq!(doc.calls.len(), 1);
        assert_eq!(doc.exits["main"], vec!["main.entry".to_string()]);
        assert_eq!(doc.exits["f"], vec!["f.entry".to_string()]);
        p.cfg();
    }

    #[test]
    fn budget_traps() {
        let p = assemble("fn main\nl:\n  jmp l\nend\n").unwrap();
        let out = accepts(&p, b"", &VmConfig { step_budget: 100, ..Default::default() });
        assert!(matches!(out.status, Status::Trapped(_)));
    }

    #[test]
    fn readdec_and_readuntil() {
        let p = assemble("fn main\n  readdec n\n  read c, 1\n  readuntil s, ';'\n  use n, s\n  halt\nend\n").unwrap();
        let (t, out) = trace(&p, b"123,ab;", &VmConfig::default());
        assert_eq!(out.status, Status::Accepted);
        let last = t.get(t.len() - 1);
        assert_eq!(last.taints, &[ByteInterval::new(0, 3), ByteInterval::new(4, 6)]);
    }
}
