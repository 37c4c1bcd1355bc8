//! Random input generation from a structure with relations, and acceptance
//! measurement against a parser program.
//!
//! Generation draws a concrete instance tree top-down, choosing array counts
//! and variable lengths so that relations sharing a source agree, then
//! commits source field values from the finished layout and re-checks the
//! whole input against the grammar.

use crate::semantics::{evaluate, violations, FieldView, Model, RelKind};
use crate::structure::{matches_sequence, parse_field_label, Inst, InstanceTree, NodeKind, StructureDoc};
use crate::tokens::{token_matches, Token, Unit};
use crate::trace_model::ByteInterval;
use crate::vm::{self, Program, Status, VmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("relations cannot be satisfied: {0}")]
    Unsatisfiable(String),
    #[error("unsupported relation layout: {0}")]
    Unsupported(String),
    #[error("generated input failed its own grammar: {0}")]
    SelfCheck(String),
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub max_array_count: u64,
    pub max_varlen_size: usize,
    pub retries: usize,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig { max_array_count: 16, max_varlen_size: 64, retries: 32 }
    }
}

/// Copy of the structure without relations.
pub fn strip(doc: &StructureDoc) -> StructureDoc {
    let mut d = doc.clone();
    d.relations.clear();
    d
}

type Chain = Vec<(usize, usize)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Local,
    ByIndex,
}

#[derive(Clone, Debug)]
struct Plan {
    kind: RelKind,
    target: usize,
    sources: Vec<usize>,
    adjust: i64,
    mode: Mode,
    /// Arrays above the common ancestor of target and sources.
    outer_arrays: BTreeSet<usize>,
}

struct Plans {
    int: Vec<Plan>,
    /// Bytes forced on tag nodes of record-type alternatives.
    forced: HashMap<usize, Vec<u8>>,
    /// Bytes that may not occur inside a field (its terminators).
    excluded: HashMap<usize, Vec<Vec<u8>>>,
    /// Arrays whose counts must agree (by-index pairings), as group ids.
    link: HashMap<usize, usize>,
    source_fields: BTreeSet<usize>,
}

fn is_array(doc: &StructureDoc, n: usize) -> bool {
    matches!(doc.nodes[n].kind, NodeKind::Array { .. })
}

fn lca(doc: &StructureDoc, a: usize, b: usize) -> usize {
    let mut pa = vec![a];
    pa.extend(doc.ancestors(a));
    let mut cur = Some(b);
    while let Some(c) = cur {
        if pa.contains(&c) {
            return c;
        }
        cur = doc.nodes[c].parent;
    }
    doc.root
}

fn arrays_between(doc: &StructureDoc, top: usize, below: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = doc.nodes[below].parent;
    while let Some(c) = cur {
        if c == top {
            break;
        }
        if is_array(doc, c) {
            out.push(c);
        }
        cur = doc.nodes[c].parent;
    }
    out
}

fn make_plans(doc: &StructureDoc) -> Result<Plans, GenError> {
    let mut plans = Plans {
        int: Vec::new(),
        forced: HashMap::new(),
        excluded: HashMap::new(),
        link: HashMap::new(),
        source_fields: BTreeSet::new(),
    };
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for r in &doc.relations {
        match r.kind {
            RelKind::Terminator => {
                let t = parse_field_label(&r.target).ok_or_else(|| GenError::Unsupported(r.target.clone()))?;
                let s = parse_field_label(&r.sources[0]).ok_or_else(|| GenError::Unsupported(r.sources[0].clone()))?;
                if let Some(bytes) = doc.tokens.get(&s).and_then(|t| t.literal_bytes()) {
                    plans.excluded.entry(t).or_default().push(bytes);
                }
            }
            RelKind::RecordType => {
                let a = doc.node_by_id(&r.target).ok_or_else(|| GenError::Unsupported(r.target.clone()))?;
                let tag = parse_field_label(&r.sources[0]).ok_or_else(|| GenError::Unsupported(r.sources[0].clone()))?;
                let NodeKind::Array { body } = doc.nodes[a].kind else {
                    return Err(GenError::Unsupported(format!("record type on {}", r.target)));
                };
                let NodeKind::Option { alternatives } = &doc.nodes[body].kind else {
                    return Err(GenError::Unsupported(format!("record type on {}", r.target)));
                };
                for (alt_id, bytes) in &r.tags {
                    let alt = *alternatives
                        .iter()
                        .find(|&&x| doc.nodes[x].id == *alt_id)
                        .ok_or_else(|| GenError::Unsupported(alt_id.clone()))?;
                    let tag_node = match &doc.nodes[alt].kind {
                        NodeKind::Record { children } => children
                            .iter()
                            .copied()
                            .find(|&c| matches!(doc.nodes[c].kind, NodeKind::Atomic { field } if field == tag)),
                        NodeKind::Atomic { field } if *field == tag => Some(alt),
                        _ => None,
                    }
                    .ok_or_else(|| GenError::Unsupported(format!("tag {} missing in {alt_id}", r.sources[0])))?;
                    plans.forced.insert(tag_node, bytes.clone());
                }
            }
            _ => {
                let mut sources = Vec::new();
                for s in &r.sources {
                    let f = parse_field_label(s).ok_or_else(|| GenError::Unsupported(s.clone()))?;
                    if doc.field_nodes(f).len() != 1 {
                        return Err(GenError::Unsupported(format!("source {s} occurs at several places")));
                    }
                    plans.source_fields.insert(f);
                    sources.push(f);
                }
                for t in doc.target_nodes(&r.target) {
                    let mut mode = None;
                    let mut outer = BTreeSet::new();
                    for &f in &sources {
                        let sn = doc.field_nodes(f)[0];
                        let l = lca(doc, t, sn);
                        if l == t || l == sn || is_array(doc, l) {
                            return Err(GenError::Unsupported(format!("{} nests its source {}", r.target, f)));
                        }
                        let a_s = arrays_between(doc, l, sn);
                        let a_t = arrays_between(doc, l, t);
                        let m = if a_s.is_empty() {
                            Mode::Local
                        } else if a_s.len() == 1 && a_t.len() == 1 {
                            let (x, y) = (a_s[0], a_t[0]);
                            match groups.iter_mut().find(|g| g.contains(&x) || g.contains(&y)) {
                                Some(g) => {
                                    g.insert(x);
                                    g.insert(y);
                                }
                                None => groups.push([x, y].into_iter().collect()),
                            }
                            Mode::ByIndex
                        } else {
                            return Err(GenError::Unsupported(format!("cannot pair {} with {}", r.target, r.sources[0])));
                        };
                        if mode.is_some_and(|x| x != m) {
                            return Err(GenError::Unsupported(format!("mixed pairing for {}", r.target)));
                        }
                        mode = Some(m);
                        outer.extend(doc.ancestors(l).into_iter().filter(|&a| is_array(doc, a)));
                    }
                    plans.int.push(Plan {
                        kind: r.kind,
                        target: t,
                        sources: sources.clone(),
                        adjust: r.adjust,
                        mode: mode.unwrap_or(Mode::Local),
                        outer_arrays: outer,
                    });
                }
            }
        }
    }
    for (g, members) in groups.iter().enumerate() {
        for &a in members {
            plans.link.insert(a, g);
        }
    }
    Ok(plans)
}

struct Gen<'a> {
    doc: &'a StructureDoc,
    plans: &'a Plans,
    config: &'a GenConfig,
    rng: &'a mut ChaCha8Rng,
    insts: Vec<Inst>,
    seq: Vec<usize>,
    bytes: Vec<Vec<u8>>,
    chains: Vec<Chain>,
    chain: Chain,
    values: HashMap<(usize, Chain), u64>,
    link_counts: HashMap<(usize, Chain), u64>,
}

const HARD_COUNT_CAP: u64 = 4096;

fn conflict(msg: impl Into<String>) -> GenError {
    GenError::Unsatisfiable(msg.into())
}

impl Gen<'_> {
    fn key(&self, plan: &Plan, field: usize) -> (usize, Chain) {
        let chain: Chain = self.chain.iter().copied().filter(|(a, _)| plan.outer_arrays.contains(a)).collect();
        (field, chain)
    }

    fn local_plans(&self, target: usize, kinds: &[RelKind]) -> Vec<&Plan> {
        self.plans
            .int
            .iter()
            .filter(|p| p.target == target && p.mode == Mode::Local && kinds.contains(&p.kind))
            .collect()
    }

    fn array_count(&mut self, node: usize) -> Result<u64, GenError> {
        let max = self.config.max_array_count.max(1);
        let mut c: Option<u64> = None;
        let set = |c: &mut Option<u64>, v: i128| -> Result<(), GenError> {
            if v < 1 || v > HARD_COUNT_CAP as i128 {
                return Err(conflict(format!("array count {v} out of range")));
            }
            match c {
                Some(x) if *x as i128 != v => Err(conflict(format!("array count {x} vs {v}"))),
                _ => {
                    *c = Some(v as u64);
                    Ok(())
                }
            }
        };
        let link_key = self.plans.link.get(&node).map(|&g| (g, self.chain.clone()));
        if let Some(k) = &link_key {
            if let Some(&v) = self.link_counts.get(k) {
                set(&mut c, v as i128)?;
            }
        }
        let products: Vec<Plan> = self.local_plans(node, &[RelKind::Product]).into_iter().cloned().collect();
        for p in &products {
            let keys: Vec<(usize, Chain)> = p.sources.iter().map(|&s| self.key(p, s)).collect();
            let known: Vec<Option<u64>> = keys.iter().map(|k| self.values.get(k).copied()).collect();
            let unknown = known.iter().filter(|k| k.is_none()).count();
            let known_prod: i128 = known.iter().flatten().map(|&v| v as i128).product();
            if unknown == 0 {
                set(&mut c, known_prod)?;
                continue;
            }
            match c {
                Some(cv) if unknown == 1 => {
                    if known_prod == 0 || cv as i128 % known_prod != 0 {
                        return Err(conflict("product factor does not divide the count"));
                    }
                    let k = known.iter().position(|k| k.is_none()).unwrap();
                    self.values.insert(keys[k].clone(), (cv as i128 / known_prod) as u64);
                }
                Some(_) => return Err(conflict("count fixed before product factors")),
                None => {
                    let hi = ((max as f64).powf(1.0 / p.sources.len() as f64).floor() as u64).max(2);
                    let mut prod = known_prod;
                    for (k, kn) in known.iter().enumerate() {
                        if kn.is_none() {
                            let v = self.rng.gen_range(2..=hi);
                            self.values.insert(keys[k].clone(), v);
                            prod *= v as i128;
                        }
                    }
                    set(&mut c, prod)?;
                }
            }
        }
        let counts: Vec<Plan> = self.local_plans(node, &[RelKind::Count]).into_iter().cloned().collect();
        for p in &counts {
            if let Some(&v) = self.values.get(&self.key(p, p.sources[0])) {
                set(&mut c, v as i128 + p.adjust as i128)?;
            }
        }
        let moduli: Vec<Plan> = self.local_plans(node, &[RelKind::Modulus]).into_iter().cloned().collect();
        for p in &moduli {
            if let Some(&v) = self.values.get(&self.key(p, p.sources[0])) {
                let d = v as i128 + p.adjust as i128;
                if d < 2 {
                    return Err(conflict("modulus divisor below 2"));
                }
                match c {
                    Some(cv) if (cv as i128) % d != 0 || cv as i128 <= d => return Err(conflict("count not a multiple")),
                    Some(_) => {}
                    None => {
                        let m = self.rng.gen_range(2..=((max as i128 / d).max(2) as u64));
                        set(&mut c, d * m as i128)?;
                    }
                }
            }
        }
        let c = match c {
            Some(c) => c,
            None if moduli.is_empty() => self.rng.gen_range(1..=max),
            None => {
                let d = self.rng.gen_range(2..=4u64);
                d * self.rng.gen_range(2..=((max / d).max(2)))
            }
        };
        for p in &counts {
            let k = self.key(p, p.sources[0]);
            if !self.values.contains_key(&k) {
                let v = c as i128 - p.adjust as i128;
                if v < 0 {
                    return Err(conflict("negative count source"));
                }
                self.values.insert(k, v as u64);
            }
        }
        for p in &moduli {
            let k = self.key(p, p.sources[0]);
            if !self.values.contains_key(&k) {
                let divisors: Vec<u64> = (2..c).filter(|d| c % d == 0).collect();
                if divisors.is_empty() {
                    return Err(conflict("count has no divisor"));
                }
                let d = divisors[self.rng.gen_range(0..divisors.len())];
                let v = d as i128 - p.adjust as i128;
                if v < 0 {
                    return Err(conflict("negative modulus source"));
                }
                self.values.insert(k, v as u64);
            }
        }
        if let Some(k) = link_key {
            self.link_counts.insert(k, c);
        }
        Ok(c)
    }

    fn atomic_bytes(&mut self, node: usize, field: usize) -> Result<Vec<u8>, GenError> {
        if let Some(b) = self.plans.forced.get(&node) {
            return Ok(b.clone());
        }
        let token: Token = self.doc.tokens.get(&field).cloned().unwrap_or_else(|| "[ALL +]".parse().unwrap());
        let excluded: Vec<Vec<u8>> = self.plans.excluded.get(&field).cloned().unwrap_or_default();
        let single: Vec<u8> = excluded.iter().filter(|e| e.len() == 1).map(|e| e[0]).collect();
        let len = if token.plus {
            let sizes: Vec<Plan> = self.local_plans(node, &[RelKind::Size]).into_iter().cloned().collect();
            let mut len: Option<usize> = None;
            for p in &sizes {
                if let Some(&v) = self.values.get(&self.key(p, p.sources[0])) {
                    let l = v as i128 + p.adjust as i128;
                    if l < token.min_len() as i128 || len.is_some_and(|x| x as i128 != l) {
                        return Err(conflict("size disagrees with token"));
                    }
                    len = Some(l as usize);
                }
            }
            let len = match len {
                Some(l) => l,
                None => {
                    let lo = token.min_len();
                    self.rng.gen_range(lo..=self.config.max_varlen_size.max(lo))
                }
            };
            for p in &sizes {
                let k = self.key(p, p.sources[0]);
                self.values.entry(k).or_insert((len as i128 - p.adjust as i128).max(0) as u64);
            }
            len
        } else {
            token.min_len()
        };
        let mut pools: Vec<Vec<u8>> = Vec::with_capacity(token.units.len());
        for u in &token.units {
            let pool: Vec<u8> = match u {
                Unit::Lit(b) => vec![*b],
                Unit::Class(c) => c.members().into_iter().filter(|b| !single.contains(b)).collect(),
            };
            if pool.is_empty() {
                return Err(conflict(format!("token {token} exhausted by terminators")));
            }
            pools.push(pool);
        }
        for _ in 0..64 {
            let mut out = Vec::with_capacity(len);
            for i in 0..len {
                let pool = &pools[i.min(pools.len() - 1)];
                out.push(pool[self.rng.gen_range(0..pool.len())]);
            }
            if excluded.iter().all(|e| e.len() <= 1 || !out.windows(e.len()).any(|w| w == e.as_slice())) {
                return Ok(out);
            }
        }
        Err(conflict("could not avoid terminator bytes"))
    }

    fn gen(&mut self, node: usize, parent: Option<usize>) -> Result<usize, GenError> {
        let me = self.insts.len();
        self.insts.push(Inst { node, lo: self.seq.len(), hi: 0, children: vec![], parent });
        let mut children = Vec::new();
        match self.doc.nodes[node].kind.clone() {
            NodeKind::Atomic { field } => {
                let b = self.atomic_bytes(node, field)?;
                self.seq.push(field);
                self.bytes.push(b);
                self.chains.push(self.chain.clone());
            }
            NodeKind::Record { children: cs } => {
                for c in cs {
                    children.push(self.gen(c, Some(me))?);
                }
            }
            NodeKind::Array { body } => {
                let count = self.array_count(node)?;
                for k in 0..count as usize {
                    self.chain.push((node, k));
                    let r = self.gen(body, Some(me));
                    self.chain.pop();
                    children.push(r?);
                }
            }
            NodeKind::Option { alternatives } => {
                let k = self.rng.gen_range(0..alternatives.len());
                children.push(self.gen(alternatives[k], Some(me))?);
            }
        }
        self.insts[me].children = children;
        self.insts[me].hi = self.seq.len();
        Ok(me)
    }
}

fn encode(value: u64, token: &Token) -> Result<Vec<u8>, GenError> {
    if token.is_digits() {
        let s = value.to_string();
        return Ok(match token.fixed_len() {
            Some(w) if s.len() <= w => format!("{value:0w$}").into_bytes(),
            _ => s.into_bytes(),
        });
    }
    let width = token.fixed_len().unwrap_or(8).min(8);
    if width < 8 && value >> (8 * width) != 0 {
        return Err(conflict(format!("{value} does not fit in {width} bytes")));
    }
    Ok(value.to_le_bytes()[..width].to_vec())
}

/// A generated input with the instance tree it was laid out from.
#[derive(Clone, Debug)]
pub struct Generated {
    pub bytes: Vec<u8>,
    pub sequence: Vec<usize>,
    pub spans: Vec<ByteInterval>,
    pub tree: InstanceTree,
    /// Sequence positions whose bytes were set by relations.
    pub committed: BTreeSet<usize>,
}

fn layout(bytes: &[Vec<u8>]) -> (Vec<u8>, Vec<ByteInterval>) {
    let mut out = Vec::new();
    let mut spans = Vec::with_capacity(bytes.len());
    for b in bytes {
        let s = out.len() as u32;
        out.extend_from_slice(b);
        spans.push(ByteInterval { start: s, end: out.len() as u32 });
    }
    (out, spans)
}

fn with_tree(doc: &StructureDoc, tree: &InstanceTree, seq: &[usize]) -> StructureDoc {
    let mut d = doc.clone();
    d.instances = Some(tree.clone());
    d.sequence = seq.to_vec();
    d
}

fn attempt(doc: &StructureDoc, plans: &Plans, config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Generated, GenError> {
    let mut g = Gen {
        doc,
        plans,
        config,
        rng,
        insts: Vec::new(),
        seq: Vec::new(),
        bytes: Vec::new(),
        chains: Vec::new(),
        chain: Vec::new(),
        values: HashMap::new(),
        link_counts: HashMap::new(),
    };
    let root = g.gen(doc.root, None)?;
    let tree = InstanceTree { insts: std::mem::take(&mut g.insts), root };
    let seq = std::mem::take(&mut g.seq);
    let mut bytes = std::mem::take(&mut g.bytes);
    let mut fixed: BTreeMap<usize, u64> = BTreeMap::new();
    for (pos, &f) in seq.iter().enumerate() {
        if let Some(&v) = g.values.get(&(f, g.chains[pos].clone())) {
            fixed.insert(pos, v);
        }
    }
    let gdoc = with_tree(doc, &tree, &seq);
    let mut commits = fixed.clone();
    let mut settled = false;
    for _ in 0..16 {
        for (&pos, &v) in &commits {
            bytes[pos] = encode(v, &doc.tokens[&seq[pos]])?;
        }
        let (input, spans) = layout(&bytes);
        let model = Model::new(&gdoc, FieldView { input: &input, spans: &spans });
        let mut next = fixed.clone();
        for p in &plans.int {
            if !matches!(p.kind, RelKind::Count | RelKind::Size | RelKind::Offset) {
                continue;
            }
            let pairing = model
                .pairing(p.sources[0], p.target)
                .ok_or_else(|| GenError::SelfCheck(format!("no pairing for {}", doc.nodes[p.target].id)))?;
            for (&t, &s) in pairing.targets.iter().zip(&pairing.sources) {
                let prop = match p.kind {
                    RelKind::Count => model.count(t),
                    RelKind::Size => model.size(t),
                    _ => model.offset(t),
                } as i128;
                let want = prop - p.adjust as i128;
                if want < 0 {
                    return Err(conflict("negative source value"));
                }
                let pos = tree.insts[s].lo;
                if let Some(&old) = next.get(&pos) {
                    if old as i128 != want {
                        return Err(conflict(format!("source at {pos} needs {old} and {want}")));
                    }
                }
                next.insert(pos, want as u64);
            }
        }
        if next == commits {
            settled = true;
            break;
        }
        commits = next;
    }
    if !settled {
        return Err(conflict("layout did not settle"));
    }
    let (input, spans) = layout(&bytes);
    let committed: BTreeSet<usize> = commits.keys().copied().collect();
    self_check(&gdoc, &input, &spans, &committed)?;
    Ok(Generated { bytes: input, sequence: seq, spans, tree, committed })
}

/// Tiling, tokens (except committed sources), shape and relations.
fn self_check(gdoc: &StructureDoc, input: &[u8], spans: &[ByteInterval], committed: &BTreeSet<usize>) -> Result<(), GenError> {
    let mut pos = 0u32;
    for s in spans {
        if s.start != pos {
            return Err(GenError::SelfCheck(format!("spans break at {pos}")));
        }
        pos = s.end;
    }
    if pos as usize != input.len() {
        return Err(GenError::SelfCheck("spans do not cover the input".into()));
    }
    for (p, &f) in gdoc.sequence.iter().enumerate() {
        if committed.contains(&p) {
            continue;
        }
        if let Some(t) = gdoc.tokens.get(&f) {
            if !token_matches(t, &input[spans[p].range()]) {
                return Err(GenError::SelfCheck(format!("F{f} bytes do not match {t}")));
            }
        }
    }
    if !matches_sequence(gdoc, &gdoc.sequence) {
        return Err(GenError::SelfCheck("field sequence outside the structure".into()));
    }
    let model = Model::new(gdoc, FieldView { input, spans });
    if !evaluate(&model, &gdoc.relations) {
        return Err(GenError::SelfCheck(violations(&model, &gdoc.relations).join("; ")));
    }
    Ok(())
}

/// One input from the grammar; retries on conflicting draws.
pub fn generate(doc: &StructureDoc, config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Generated, GenError> {
    let plans = make_plans(doc)?;
    let mut last = None;
    for _ in 0..config.retries.max(1) {
        match attempt(doc, &plans, config, rng) {
            Ok(g) => return Ok(g),
            Err(e @ GenError::Unsupported(_)) => return Err(e),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AcceptanceReport {
    pub generated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub trapped: usize,
    pub errors: usize,
    pub first_error: Option<String>,
    pub first_rejection: Option<String>,
}

impl AcceptanceReport {
    /// Accepted over generated; `None` when nothing was generated.
    pub fn ratio(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.accepted as f64 / self.generated as f64)
    }
}

/// Generates `n` inputs (seeded per sample) and runs each through the program.
pub fn acceptance(prog: &Program, doc: &StructureDoc, n: usize, seed: u64, config: &GenConfig, vm_config: &VmConfig) -> AcceptanceReport {
    let mut report = AcceptanceReport::default();
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        match generate(doc, config, &mut rng) {
            Ok(g) => {
                report.generated += 1;
                match vm::accepts(prog, &g.bytes, vm_config).status {
                    Status::Accepted => report.accepted += 1,
                    Status::Rejected(why) => {
                        report.rejected += 1;
                        report.first_rejection.get_or_insert_with(|| format!("{why}: {:?}", String::from_utf8_lossy(&g.bytes)));
                    }
                    Status::Trapped(_) => report.trapped += 1,
                }
            }
            Err(e) => {
                report.errors += 1;
                report.first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::parse_grammar;

    const SUM: &str = "atomic F0 = [0x34]
atomic F1 = [0x2C]
atomic F2 = [DIGIT] WHERE F2.terminator = F3.bytes OR F2.terminator = F4.bytes
atomic F3 = [0x2C]
atomic F4 = [0x0A]
record S0 {
  F0
  F1
  array A0 {
    record S1 {
      F2
      F3
    }
  } WHERE A0.count = int(F0.bytes) - 1
  F2
  F4
}
";

    #[test]
    fn count_relation_is_honoured() {
        let doc = parse_grammar(SUM).unwrap();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate(&doc, &GenConfig::default(), &mut rng).unwrap();
            let text = String::from_utf8(g.bytes).unwrap();
            let parts: Vec<&str> = text.trim_end().split(',').collect();
            let first: usize = parts[0].parse().unwrap();
            assert_eq!(parts.len() - 1, first, "{text}");
        }
    }

    #[test]
    fn encode_widths() {
        let d: Token = "[DIGIT]".parse().unwrap();
        assert_eq!(encode(7, &d).unwrap(), b"7");
        assert_eq!(encode(12, &d).unwrap(), b"12");
        let b: Token = "[ALL ALL]".parse().unwrap();
        assert_eq!(encode(0x1234, &b).unwrap(), vec![0x34, 0x12]);
        assert!(encode(0x10000, &b).is_err());
    }

    #[test]
    fn ratio_of_nothing_is_none() {
        assert_eq!(AcceptanceReport::default().ratio(), None);
    }
}
