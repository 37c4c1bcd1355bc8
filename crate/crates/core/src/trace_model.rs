//! Taint traces and exported control-flow graphs.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Invalid(String),
}

/// Half-open byte range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ByteInterval {
    pub start: u32,
    pub end: u32,
}

impl ByteInterval {
    pub fn new(start: u32, end: u32) -> ByteInterval {
        debug_assert!(start < end);
        ByteInterval { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &ByteInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &ByteInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..self.end as usize
    }
}

impl fmt::Display for ByteInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Sorts, then merges overlapping or touching intervals.
pub fn normalize_intervals(ivs: &mut Vec<ByteInterval>) {
    if ivs.len() < 2 {
        return;
    }
    ivs.sort_unstable();
    let mut out: Vec<ByteInterval> = Vec::with_capacity(ivs.len());
    for iv in ivs.drain(..) {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    *ivs = out;
}

/// Interned name table shared by instruction addresses and call sites.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }

    pub fn get(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.names[i as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Ordered call sites, truncated at recursion.
pub type CallingContext = Vec<u32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceTuple {
    pub addr: u32,
    pub ctx: u32,
    first: u32,
    count: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct TupleRef<'a> {
    pub addr: u32,
    pub ctx: u32,
    pub taints: &'a [ByteInterval],
}

/// A dynamic taint trace. Names and contexts are interned so that long
/// traces stay compact; intervals of all tuples live in one buffer.
#[derive(Clone, Debug, Default)]
pub struct TaintTrace {
    pub input: Vec<u8>,
    pub names: Interner,
    contexts: Vec<CallingContext>,
    context_index: HashMap<CallingContext, u32>,
    tuples: Vec<TraceTuple>,
    intervals: Vec<ByteInterval>,
}

impl PartialEq for TaintTrace {
    fn eq(&self, other: &TaintTrace) -> bool {
        if self.input != other.input || self.tuples.len() != other.tuples.len() {
            return false;
        }
        self.iter().zip(other.iter()).all(|(a, b)| {
            let sa: HashSet<&ByteInterval> = a.taints.iter().collect();
            let sb: HashSet<&ByteInterval> = b.taints.iter().collect();
            self.names.name(a.addr) == other.names.name(b.addr)
                && self.context_names(a.ctx) == other.context_names(b.ctx)
                && sa == sb
        })
    }
}

impl TaintTrace {
    pub fn new(input: Vec<u8>) -> TaintTrace {
        TaintTrace { input, ..Default::default() }
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn intern_context(&mut self, ctx: &[u32]) -> u32 {
        if let Some(&i) = self.context_index.get(ctx) {
            return i;
        }
        let i = self.contexts.len() as u32;
        self.contexts.push(ctx.to_vec());
        self.context_index.insert(ctx.to_vec(), i);
        i
    }

    pub fn context(&self, ctx: u32) -> &[u32] {
        &self.contexts[ctx as usize]
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    pub fn context_names(&self, ctx: u32) -> Vec<&str> {
        self.context(ctx).iter().map(|&c| self.names.name(c)).collect()
    }

    /// Appends a tuple; `taints` should already be normalized.
    pub fn push(&mut self, addr: u32, ctx: u32, taints: &[ByteInterval]) {
        let first = self.intervals.len() as u32;
        self.intervals.extend_from_slice(taints);
        self.tuples.push(TraceTuple { addr, ctx, first, count: taints.len() as u32 });
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn get(&self, i: usize) -> TupleRef<'_> {
        let t = &self.tuples[i];
        TupleRef {
            addr: t.addr,
            ctx: t.ctx,
            taints: &self.intervals[t.first as usize..(t.first + t.count) as usize],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TupleRef<'_>> + '_ {
        (0..self.tuples.len()).map(move |i| self.get(i))
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        if self.tuples.is_empty() {
            return Err(LoadError::Invalid("trace has no tuples".into()));
        }
        let n = self.input.len() as u32;
        for (k, t) in self.iter().enumerate() {
            if t.taints.is_empty() {
                return Err(LoadError::Invalid(format!("tuple {k} has no taint intervals")));
            }
            for iv in t.taints {
                if iv.start >= iv.end || iv.end > n {
                    return Err(LoadError::Invalid(format!(
                        "tuple {k} interval {iv} outside input of length {n}"
                    )));
                }
            }
        }
        for (i, ctx) in self.contexts.iter().enumerate() {
            let mut seen = HashSet::new();
            if !ctx.iter().all(|c| seen.insert(*c)) {
                return Err(LoadError::Invalid(format!("context {i} repeats a call site")));
            }
        }
        Ok(())
    }

    pub fn to_doc(&self) -> TraceDoc {
        TraceDoc {
            input_len: self.input.len(),
            input_b64: B64.encode(&self.input),
            tuples: self
                .iter()
                .map(|t| TupleDoc {
                    i: self.names.name(t.addr).to_string(),
                    c: self.context_names(t.ctx).iter().map(|s| s.to_string()).collect(),
                    t: t.taints.iter().map(|iv| [iv.start, iv.end]).collect(),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &TraceDoc) -> Result<TaintTrace, LoadError> {
        let input = B64
            .decode(doc.input_b64.as_bytes())
            .map_err(|e| LoadError::Parse(format!("input_b64: {e}")))?;
        if input.len() != doc.input_len {
            return Err(LoadError::Invalid(format!(
                "input_len {} does not match decoded length {}",
                doc.input_len,
                input.len()
            )));
        }
        let mut trace = TaintTrace::new(input);
        let mut ivs = Vec::new();
        for td in &doc.tuples {
            let addr = trace.names.intern(&td.i);
            let ctx: Vec<u32> = td.c.iter().map(|s| trace.names.intern(s)).collect();
            let ctx = trace.intern_context(&ctx);
            ivs.clear();
            for &[s, e] in &td.t {
                if s >= e {
                    return Err(LoadError::Invalid(format!("empty or reversed interval [{s},{e})")));
                }
                ivs.push(ByteInterval { start: s, end: e });
            }
            trace.push(addr, ctx, &ivs);
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<TaintTrace, LoadError> {
        let doc: TraceDoc = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        TaintTrace::from_doc(&doc)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceDoc {
    pub input_len: usize,
    pub input_b64: String,
    pub tuples: Vec<TupleDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TupleDoc {
    pub i: String,
    pub c: Vec<String>,
    pub t: Vec<[u32; 2]>,
}

fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|e| LoadError::Io { path: path.display().to_string(), source: e })
}

pub fn load_trace(path: &Path) -> Result<TaintTrace, LoadError> {
    TaintTrace::from_json(&read_file(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDoc {
    pub id: String,
    pub entry: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDoc {
    pub id: String,
    pub insns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallDoc {
    pub site: String,
    pub callee: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgDoc {
    pub functions: Vec<FunctionDoc>,
    pub blocks: Vec<BlockDoc>,
    pub edges: Vec<[String; 2]>,
    pub calls: Vec<CallDoc>,
    pub exits: BTreeMap<String, Vec<String>>,
}

/// Control-flow graphs of all procedures with resolved cross references.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfgPackage {
    pub functions: Vec<Function>,
    pub blocks: Vec<Block>,
    pub block_index: HashMap<String, usize>,
    pub insn_block: HashMap<String, usize>,
    /// Intraprocedural successors per block index.
    pub succs: Vec<Vec<usize>>,
    /// (call-site block, call-site instruction, callee function index).
    pub calls: Vec<(usize, String, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub id: String,
    pub entry: usize,
    pub exits: Vec<usize>,
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: String,
    pub insns: Vec<String>,
    pub function: Option<usize>,
}

impl CfgPackage {
    pub fn from_doc(doc: &CfgDoc) -> Result<CfgPackage, LoadError> {
        let mut block_index = HashMap::new();
        let mut insn_block = HashMap::new();
        let mut blocks = Vec::new();
        for (i, b) in doc.blocks.iter().enumerate() {
            if block_index.insert(b.id.clone(), i).is_some() {
                return Err(LoadError::Invalid(format!("duplicate block {}", b.id)));
            }
            for insn in &b.insns {
                if insn_block.insert(insn.clone(), i).is_some() {
                    return Err(LoadError::Invalid(format!("instruction {insn} belongs to two blocks")));
                }
            }
            blocks.push(Block { id: b.id.clone(), insns: b.insns.clone(), function: None });
        }
        let lookup = |id: &str| {
            block_index
                .get(id)
                .copied()
                .ok_or_else(|| LoadError::Invalid(format!("dangling block reference {id}")))
        };
        let mut succs = vec![Vec::new(); blocks.len()];
        for [a, b] in &doc.edges {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if !succs[a].contains(&b) {
                succs[a].push(b);
            }
        }
        let mut functions = Vec::new();
        let mut fn_index = HashMap::new();
        for f in &doc.functions {
            let entry = block_index
                .get(&f.entry)
                .copied()
                .ok_or_else(|| LoadError::Invalid(format!("function {} has no entry block {}", f.id, f.entry)))?;
            fn_index.insert(f.id.clone(), functions.len());
            functions.push(Function { id: f.id.clone(), entry, exits: Vec::new(), blocks: Vec::new() });
        }
        for (fi, f) in functions.iter_mut().enumerate() {
            let mut stack = vec![f.entry];
            while let Some(b) = stack.pop() {
                match blocks[b].function {
                    Some(owner) if owner == fi => continue,
                    Some(owner) => {
                        return Err(LoadError::Invalid(format!(
                            "block {} reachable from functions {} and {}",
                            blocks[b].id, doc.functions[owner].id, f.id
                        )))
                    }
                    None => {}
                }
                blocks[b].function = Some(fi);
                f.blocks.push(b);
                stack.extend(succs[b].iter().copied());
            }
            f.blocks.sort_unstable();
        }
        for (fname, exits) in &doc.exits {
            let fi = *fn_index
                .get(fname)
                .ok_or_else(|| LoadError::Invalid(format!("exits name unknown function {fname}")))?;
            for e in exits {
                let b = lookup(e)?;
                functions[fi].exits.push(b);
            }
        }
        for b in &blocks {
            if b.function.is_none() {
                log::warn!("block {} is unreachable from every function entry", b.id);
            }
        }
        let mut calls = Vec::new();
        for c in &doc.calls {
            let b = *insn_block
                .get(&c.site)
                .ok_or_else(|| LoadError::Invalid(format!("dangling call site {}", c.site)))?;
            let f = *fn_index
                .get(&c.callee)
                .ok_or_else(|| LoadError::Invalid(format!("call to unknown function {}", c.callee)))?;
            calls.push((b, c.site.clone(), f));
        }
        Ok(CfgPackage { functions, blocks, block_index, insn_block, succs, calls })
    }

    pub fn to_doc(&self) -> CfgDoc {
        let mut edges = Vec::new();
        for (a, ss) in self.succs.iter().enumerate() {
            for &b in ss {
                edges.push([self.blocks[a].id.clone(), self.blocks[b].id.clone()]);
            }
        }
        CfgDoc {
            functions: self
                .functions
                .iter()
                .map(|f| FunctionDoc { id: f.id.clone(), entry: self.blocks[f.entry].id.clone() })
                .collect(),
            blocks: self.blocks.iter().map(|b| BlockDoc { id: b.id.clone(), insns: b.insns.clone() }).collect(),
            edges,
            calls: self
                .calls
                .iter()
                .map(|(_, site, f)| CallDoc { site: site.clone(), callee: self.functions[*f].id.clone() })
                .collect(),
            exits: self
                .functions
                .iter()
                .map(|f| (f.id.clone(), f.exits.iter().map(|&b| self.blocks[b].id.clone()).collect()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("cfg serializes")
    }

    pub fn from_json(text: &str) -> Result<CfgPackage, LoadError> {
        let doc: CfgDoc = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        CfgPackage::from_doc(&doc)
    }

    pub fn block_of(&self, insn: &str) -> Option<usize> {
        self.insn_block.get(insn).copied()
    }
}

pub fn load_cfg(path: &Path) -> Result<CfgPackage, LoadError> {
    CfgPackage::from_json(&read_file(path)?)
}
