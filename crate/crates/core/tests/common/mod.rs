//! Brute-force reference implementations and random generators shared by
//! the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use taintgram::field_partition::Value;
use taintgram::structure::{NodeKind, StructureDoc};
use taintgram::tig::Tig;
use taintgram::tokens::{Class, Token, Unit};
use taintgram::trace_model::{BlockDoc, ByteInterval, CallDoc, CfgDoc, CfgPackage, FunctionDoc};
use taintgram::vm::{execute, ByteSet, Collect, Intervals, Program, VmConfig};

// Control dependence

/// Functions with a fallthrough chain (so every block is reachable and
/// reaches the last block, always an exit), random extra edges, random
/// additional exits and calls into the same or later functions.
pub fn random_cfg<R: Rng>(rng: &mut R, max_blocks: usize) -> CfgPackage {
    let total = rng.gen_range(1..=max_blocks);
    let nfuncs = rng.gen_range(1..=total.min(3));
    let mut sizes = vec![1usize; nfuncs];
    for _ in nfuncs..total {
        sizes[rng.gen_range(0..nfuncs)] += 1;
    }
    let mut doc = CfgDoc { functions: vec![], blocks: vec![], edges: vec![], calls: vec![], exits: BTreeMap::new() };
    let name = |f: usize, k: usize| format!("f{f}b{k}");
    for (f, &m) in sizes.iter().enumerate() {
        doc.functions.push(FunctionDoc { id: format!("f{f}"), entry: name(f, 0) });
        let mut exits = vec![name(f, m - 1)];
        for k in 0..m {
            let b = name(f, k);
            doc.blocks.push(BlockDoc { id: b.clone(), insns: vec![format!("{b}i0"), format!("{b}i1")] });
            if k + 1 < m {
                doc.edges.push([b.clone(), name(f, k + 1)]);
            }
            for _ in 0..2 {
                if rng.gen_bool(0.4) {
                    doc.edges.push([b.clone(), name(f, rng.gen_range(0..m))]);
                }
            }
            if k + 1 < m && rng.gen_bool(0.15) {
                exits.push(b.clone());
            }
            if rng.gen_bool(0.3) {
                let callee = rng.gen_range(f..nfuncs);
                doc.calls.push(CallDoc { site: format!("{b}i0"), callee: format!("f{callee}") });
            }
        }
        doc.exits.insert(format!("f{f}"), exits);
    }
    CfgPackage::from_doc(&doc).expect("generated graph is valid")
}

fn reaches_exit_avoiding(cfg: &CfgPackage, fi: usize, from: usize, avoid: usize) -> bool {
    let exits: BTreeSet<usize> = cfg.functions[fi].exits.iter().copied().collect();
    if from == avoid {
        return false;
    }
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(b) = stack.pop() {
        if exits.contains(&b) {
            return true;
        }
        for &s in &cfg.succs[b] {
            if s != avoid && seen.insert(s) {
                stack.push(s);
            }
        }
    }
    false
}

/// `y` postdominates `z`: every path from `z` to the function exit meets `y`.
pub fn postdominates(cfg: &CfgPackage, fi: usize, y: usize, z: usize) -> bool {
    z == y || !reaches_exit_avoiding(cfg, fi, z, y)
}

/// Path definition: `y` depends on `x` when some path from `x` to `y` runs
/// through nodes postdominated by `y` only, and `y` does not strictly
/// postdominate `x`.
pub fn control_dependent(cfg: &CfgPackage, fi: usize, x: usize, y: usize) -> bool {
    if y != x && postdominates(cfg, fi, y, x) {
        return false;
    }
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = cfg.succs[x].iter().copied().filter(|&s| postdominates(cfg, fi, y, s)).collect();
    while let Some(b) = stack.pop() {
        if b == y {
            return true;
        }
        if !seen.insert(b) {
            continue;
        }
        for &s in &cfg.succs[b] {
            if postdominates(cfg, fi, y, s) {
                stack.push(s);
            }
        }
    }
    false
}

/// Guard sets per block: intraprocedural dependences by path search, then
/// unguarded callee blocks take the guards of every call site.
pub fn icdg_oracle(cfg: &CfgPackage) -> Vec<BTreeSet<usize>> {
    let n = cfg.blocks.len();
    let mut guards = vec![BTreeSet::new(); n];
    for (fi, f) in cfg.functions.iter().enumerate() {
        for &x in &f.blocks {
            for &y in &f.blocks {
                if control_dependent(cfg, fi, x, y) {
                    guards[y].insert(x);
                }
            }
        }
    }
    let unguarded: Vec<bool> = guards.iter().map(|g| g.is_empty()).collect();
    loop {
        let mut changed = false;
        for (site, _, callee) in &cfg.calls {
            let inherited = guards[*site].clone();
            for &b in &cfg.functions[*callee].blocks {
                if unguarded[b] {
                    let before = guards[b].len();
                    guards[b].extend(inherited.iter().copied());
                    changed |= guards[b].len() != before;
                }
            }
        }
        if !changed {
            return guards;
        }
    }
}

pub fn guards_from_edges(edges: &[BTreeSet<usize>]) -> Vec<BTreeSet<usize>> {
    let mut guards = vec![BTreeSet::new(); edges.len()];
    for (g, ds) in edges.iter().enumerate() {
        for &d in ds {
            guards[d].insert(g);
        }
    }
    guards
}

// Taint interval graph

pub fn random_values<R: Rng>(rng: &mut R, max_values: usize, max_len: u32) -> (Vec<Value>, usize) {
    let len = rng.gen_range(1..=max_len);
    let count = rng.gen_range(0..=max_values);
    let values = (0..count)
        .map(|_| {
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(a + 1..=len);
            let mut uses: Vec<(u32, u32)> = (0..rng.gen_range(1..=3)).map(|_| (rng.gen_range(0..6), rng.gen_range(0..2))).collect();
            uses.sort_unstable();
            uses.dedup();
            Value { interval: ByteInterval::new(a, b), uses }
        })
        .collect();
    (values, len as usize)
}

fn strictly_contains(a: &ByteInterval, b: &ByteInterval) -> bool {
    a.contains(b) && a != b
}

/// Tiling, laminarity, parent edges equal to the transitive reduction of
/// strict containment, and that every input interval is covered by nodes
/// inside it carrying at least its uses.
pub fn check_tig(values: &[Value], len: usize, tig: &Tig) -> Result<(), String> {
    let nodes = &tig.nodes;
    let root = &nodes[tig.root];
    if root.interval != ByteInterval::new(0, len as u32) || root.parent.is_some() {
        return Err("root does not span the input".into());
    }
    // A root without a value over an otherwise empty tree holds one gap
    // spanning the same bytes; leave it out of the order checks.
    let shadow: Option<usize> = match root.children.as_slice() {
        [g] if root.value.is_none() && nodes[*g].gap && nodes[*g].interval == root.interval => Some(*g),
        _ => None,
    };
    for (i, n) in nodes.iter().enumerate() {
        if n.interval.is_empty() {
            return Err(format!("node {i} is empty"));
        }
        if n.children.is_empty() {
            continue;
        }
        let mut pos = n.interval.start;
        for &c in &n.children {
            if nodes[c].parent != Some(i) {
                return Err(format!("child {c} does not point back to {i}"));
            }
            if nodes[c].interval.start != pos {
                return Err(format!("children of {i} leave a hole or overlap at {pos}"));
            }
            pos = nodes[c].interval.end;
        }
        if pos != n.interval.end {
            return Err(format!("children of {i} stop at {pos}"));
        }
    }
    let ids: Vec<usize> = (0..nodes.len()).filter(|&i| Some(i) != shadow).collect();
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            let (x, y) = (&nodes[a].interval, &nodes[b].interval);
            if x == y {
                return Err(format!("nodes {a} and {b} share an interval"));
            }
            if x.overlaps(y) && !x.contains(y) && !y.contains(x) {
                return Err(format!("nodes {a} and {b} cross"));
            }
        }
    }
    for &b in &ids {
        if b == tig.root {
            continue;
        }
        let iv = &nodes[b].interval;
        let covers: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&a| strictly_contains(&nodes[a].interval, iv))
            .filter(|&a| !ids.iter().any(|&c| strictly_contains(&nodes[a].interval, &nodes[c].interval) && strictly_contains(&nodes[c].interval, iv)))
            .collect();
        if covers != vec![nodes[b].parent.unwrap_or(usize::MAX)] {
            return Err(format!("node {b}: parent {:?}, reduction gives {covers:?}", nodes[b].parent));
        }
    }
    for o in values {
        for x in o.interval.start..o.interval.end {
            let ok = nodes.iter().any(|n| {
                !n.gap
                    && n.interval.start <= x
                    && x < n.interval.end
                    && o.interval.contains(&n.interval)
                    && n.value.is_some_and(|v| o.uses.iter().all(|u| tig.values[v].uses.contains(u)))
            });
            if !ok {
                return Err(format!("byte {x} of {:?} has no fragment carrying its uses", o.interval));
            }
        }
    }
    for n in nodes.iter().filter(|n| n.gap) {
        let parent = &nodes[n.parent.expect("gaps have parents")].interval;
        if values.iter().any(|o| o.interval.overlaps(&n.interval) && !o.interval.contains(parent)) {
            return Err(format!("gap {:?} covers tainted bytes", n.interval));
        }
    }
    Ok(())
}

// Structure folding

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Atom(usize),
    Array(Vec<Term>),
}

/// Every (period, start) with two equal adjacent blocks; the smallest period
/// wins, then the leftmost start.
pub fn brute_square<T: PartialEq>(s: &[T]) -> Option<(usize, usize)> {
    let mut all = Vec::new();
    for i in 0..s.len() {
        for p in 1..=(s.len() - i) / 2 {
            if s[i..i + p] == s[i + p..i + 2 * p] {
                all.push((p, i));
            }
        }
    }
    all.into_iter().min()
}

/// Folds tandem repeats until none is left: every maximal run of the chosen
/// block becomes one array, and adjacent equal arrays merge.
pub fn fold_squares(seq: &[usize]) -> Vec<Term> {
    let mut items: Vec<Term> = seq.iter().map(|&f| Term::Atom(f)).collect();
    while let Some((p, i)) = brute_square(&items) {
        let body: Vec<Term> = items[i..i + p].to_vec();
        let arr = Term::Array(body.clone());
        let mut out: Vec<Term> = Vec::new();
        let mut j = 0;
        while j < items.len() {
            let item = if j + p <= items.len() && items[j..j + p] == body[..] {
                while j + p <= items.len() && items[j..j + p] == body[..] {
                    j += p;
                }
                arr.clone()
            } else {
                j += 1;
                items[j - 1].clone()
            };
            let merge = matches!(item, Term::Array(_)) && out.last() == Some(&item);
            if !merge {
                out.push(item);
            }
        }
        items = out;
    }
    items
}

pub fn terms_text(items: &[Term]) -> String {
    let one = |t: &Term| match t {
        Term::Atom(f) => format!("F{f}"),
        Term::Array(body) => format!("[{}]", terms_text(body)),
    };
    if items.len() == 1 {
        one(&items[0])
    } else {
        format!("({})", items.iter().map(one).collect::<Vec<_>>().join(" "))
    }
}

pub fn doc_text(doc: &StructureDoc, n: usize) -> String {
    match &doc.nodes[n].kind {
        NodeKind::Atomic { field } => format!("F{field}"),
        NodeKind::Record { children } => format!("({})", children.iter().map(|&c| doc_text(doc, c)).collect::<Vec<_>>().join(" ")),
        NodeKind::Array { body } => format!("[{}]", doc_text(doc, *body)),
        NodeKind::Option { alternatives } => {
            format!("<{}>", alternatives.iter().map(|&c| doc_text(doc, c)).collect::<Vec<_>>().join("|"))
        }
    }
}

pub fn has_options(doc: &StructureDoc) -> bool {
    doc.nodes.iter().any(|n| matches!(n.kind, NodeKind::Option { .. }))
}

/// Compares the folder with the reference where the reference leaves no
/// repeated top-level term (so variant folding has nothing to do).
/// Returns whether a comparison took place.
pub fn check_folding(seq: &[usize], doc: &StructureDoc) -> Result<bool, String> {
    let reference = fold_squares(seq);
    let distinct = reference.iter().enumerate().all(|(i, t)| !reference[..i].contains(t));
    if !distinct {
        return Ok(false);
    }
    let (want, got) = (terms_text(&reference), doc_text(doc, doc.root));
    if want != got {
        return Err(format!("{seq:?}: folded to {got}, reference {want}"));
    }
    Ok(true)
}

pub fn random_sequence<R: Rng>(rng: &mut R, alphabet: usize, max_len: usize) -> Vec<usize> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
}

// Tokens

fn classes_holding(bytes: &[u8]) -> Vec<Class> {
    Class::ALL_CLASSES.iter().copied().filter(|c| bytes.iter().all(|&b| c.contains(b))).collect()
}

fn check_unit(unit: Unit, bytes: &[u8]) -> Result<(), String> {
    let first = bytes[0];
    if bytes.iter().all(|&b| b == first) {
        return if unit == Unit::Lit(first) { Ok(()) } else { Err(format!("{unit} for constant 0x{first:02X}")) };
    }
    let Unit::Class(c) = unit else { return Err(format!("literal {unit} for varying bytes")) };
    let holding = classes_holding(bytes);
    if !holding.contains(&c) {
        return Err(format!("{} misses some of {bytes:?}", c.name()));
    }
    let best = holding.iter().map(|h| h.cardinality()).min().unwrap();
    if c.cardinality() > best {
        return Err(format!("{} is not the least class for {bytes:?}", c.name()));
    }
    Ok(())
}

/// Soundness (every sample matches) and minimality (no smaller literal or
/// class at any position holds all observed bytes).
pub fn check_token(samples: &[Vec<u8>], token: &Token) -> Result<(), String> {
    for s in samples {
        if !taintgram::tokens::token_matches(token, s) {
            return Err(format!("{token} rejects {s:?}"));
        }
    }
    let len = samples[0].len();
    if samples.iter().all(|s| s.len() == len) {
        if token.plus || token.units.len() != len {
            return Err(format!("{token} for samples of fixed length {len}"));
        }
        for (i, &u) in token.units.iter().enumerate() {
            let column: Vec<u8> = samples.iter().map(|s| s[i]).collect();
            check_unit(u, &column)?;
        }
    } else {
        if !token.plus || token.units.len() != 1 {
            return Err(format!("{token} for samples of varying length"));
        }
        let all: Vec<u8> = samples.iter().flatten().copied().collect();
        check_unit(token.units[0], &all)?;
    }
    Ok(())
}

/// Sample sets drawn from a random pool of classes so that narrow classes
/// come up often.
pub fn random_samples<R: Rng>(rng: &mut R) -> Vec<Vec<u8>> {
    let pool: Vec<u8> = match rng.gen_range(0..4) {
        0 => Class::ALL_CLASSES[rng.gen_range(0..Class::ALL_CLASSES.len())].members(),
        1 => (0..rng.gen_range(1..4)).map(|_| rng.gen()).collect(),
        2 => b"0123456789abcdefABCDEF".to_vec(),
        _ => (0..=255u8).collect(),
    };
    let fixed = rng.gen_bool(0.6);
    let len = rng.gen_range(1..=6);
    (0..rng.gen_range(1..=8))
        .map(|_| {
            let l = if fixed { len } else { rng.gen_range(1..=6) };
            (0..l).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
        })
        .collect()
}

// Tracing

/// Per-byte shadow execution must agree with the interval domain, tuples
/// must carry normalized intervals inside the input, and every observed
/// block transition must be a graph edge.
pub fn check_run(prog: &Program, input: &[u8]) -> Result<(), String> {
    let config = VmConfig { record_transitions: true, ..VmConfig::default() };
    let mut fast: Collect<Intervals> = Collect::default();
    let mut slow: Collect<ByteSet> = Collect::default();
    let a = execute(prog, input, &config, &mut fast);
    let b = execute(prog, input, &config, &mut slow);
    if a.status != b.status || fast.tuples.len() != slow.tuples.len() || fast.contexts != slow.contexts {
        return Err(format!("domains disagree on the run: {:?} vs {:?}", a.status, b.status));
    }
    for ((addr, ctx, iv), (addr2, ctx2, bytes)) in fast.tuples.iter().zip(&slow.tuples) {
        if (addr, ctx) != (addr2, ctx2) {
            return Err(format!("tuple order differs at {addr}"));
        }
        let ivs: Vec<ByteInterval> = iv.0.to_vec();
        if ivs != bytes.intervals() {
            return Err(format!("insn {addr}: intervals {ivs:?}, bytes {:?}", bytes.0));
        }
        if ivs.is_empty() || ivs.windows(2).any(|w| w[0].end >= w[1].start) {
            return Err(format!("insn {addr}: intervals not normalized {ivs:?}"));
        }
        if ivs.iter().any(|i| i.is_empty() || i.end as usize > input.len()) {
            return Err(format!("insn {addr}: interval outside the input"));
        }
    }
    let cfg = prog.cfg();
    for &(x, y) in &a.transitions {
        if !cfg.succs[x].contains(&y) {
            return Err(format!("transition {} -> {} is not an edge", cfg.blocks[x].id, cfg.blocks[y].id));
        }
    }
    Ok(())
}
