//! Structure AST built from a field sequence by folding tandem repeats into
//! arrays and heterogeneous repeats into arrays of options; rendering and
//! parsing of the grammar text; sequence matching against the AST.

use crate::field_partition::SourceIndex;
use crate::semantics::{RelKind, Relation};
use crate::tokens::Token;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Atomic { field: usize },
    Record { children: Vec<usize> },
    Array { body: usize },
    Option { alternatives: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(flatten)]
    pub kind: NodeKind,
    pub parent: Option<usize>,
}

/// One occurrence of a node over a range of sequence positions `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inst {
    pub node: usize,
    pub lo: usize,
    pub hi: usize,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceTree {
    pub insts: Vec<Inst>,
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDoc {
    pub nodes: Vec<Node>,
    pub root: usize,
    pub tokens: BTreeMap<usize, Token>,
    pub relations: Vec<Relation>,
    /// Field sequence the structure was built from (empty when parsed).
    #[serde(default)]
    pub sequence: Vec<usize>,
    /// Arrays followed by a partial copy of their element.
    #[serde(default)]
    pub spills: Vec<String>,
    #[serde(skip)]
    pub instances: Option<InstanceTree>,
}

pub fn field_label(f: usize) -> String {
    format!("F{f}")
}

pub fn parse_field_label(s: &str) -> Option<usize> {
    s.strip_prefix('F')?.parse().ok()
}

impl StructureDoc {
    pub fn node_by_id(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// All nodes a relation path names: every occurrence for a field id.
    pub fn target_nodes(&self, id: &str) -> Vec<usize> {
        if let Some(f) = parse_field_label(id) {
            self.field_nodes(f)
        } else {
            self.node_by_id(id).into_iter().collect()
        }
    }

    pub fn field_nodes(&self, f: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&n| matches!(self.nodes[n].kind, NodeKind::Atomic { field } if field == f))
            .collect()
    }

    pub fn children(&self, n: usize) -> Vec<usize> {
        match &self.nodes[n].kind {
            NodeKind::Atomic { .. } => vec![],
            NodeKind::Record { children } => children.clone(),
            NodeKind::Array { body } => vec![*body],
            NodeKind::Option { alternatives } => alternatives.clone(),
        }
    }

    pub fn fields(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Atomic { field } => Some(field),
                _ => None,
            })
            .collect()
    }

    pub fn subtree_fields(&self, n: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            if let NodeKind::Atomic { field } = self.nodes[m].kind {
                out.insert(field);
            }
            stack.extend(self.children(m));
        }
        out
    }

    pub fn ancestors(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[n].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.nodes[p].parent;
        }
        out
    }

    pub fn is_ancestor(&self, a: usize, n: usize) -> bool {
        self.ancestors(n).contains(&a)
    }

    pub fn relations_on(&self, target: &str) -> Vec<&Relation> {
        self.relations.iter().filter(|r| r.target == target).collect()
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in self.children(n).into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }
}

type SymId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Sym {
    Atom(usize),
    Array(Vec<SymId>),
    Option(Vec<Vec<SymId>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BKind {
    Atom,
    Record,
    Array,
    Option(usize),
}

#[derive(Clone, Debug)]
struct BInst {
    kind: BKind,
    lo: usize,
    hi: usize,
    children: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Item {
    sym: SymId,
    inst: usize,
}

#[derive(Default)]
struct Builder {
    syms: Vec<Sym>,
    sym_index: HashMap<Sym, SymId>,
    insts: Vec<BInst>,
}

impl Builder {
    fn intern(&mut self, s: Sym) -> SymId {
        if let Some(&i) = self.sym_index.get(&s) {
            return i;
        }
        let i = self.syms.len() as SymId;
        self.syms.push(s.clone());
        self.sym_index.insert(s, i);
        i
    }

    fn inst(&mut self, kind: BKind, lo: usize, hi: usize, children: Vec<usize>) -> usize {
        self.insts.push(BInst { kind, lo, hi, children });
        self.insts.len() - 1
    }

    fn element(&mut self, items: &[Item]) -> usize {
        if items.len() == 1 {
            items[0].inst
        } else {
            let lo = self.insts[items[0].inst].lo;
            let hi = self.insts[items[items.len() - 1].inst].hi;
            self.inst(BKind::Record, lo, hi, items.iter().map(|i| i.inst).collect())
        }
    }

    fn is_array(&self, s: SymId) -> bool {
        matches!(self.syms[s as usize], Sym::Array(_))
    }

    fn push_merging(&mut self, out: &mut Vec<Item>, item: Item) {
        if let Some(last) = out.last() {
            if last.sym == item.sym && self.is_array(item.sym) {
                let (a, b) = (last.inst, item.inst);
                let moved = std::mem::take(&mut self.insts[b].children);
                self.insts[a].children.extend(moved);
                self.insts[a].hi = self.insts[b].hi;
                return;
            }
        }
        out.push(item);
    }

    fn fold_square(&mut self, items: Vec<Item>, p: usize, i: usize) -> Vec<Item> {
        let body: Vec<SymId> = items[i..i + p].iter().map(|it| it.sym).collect();
        let arr = self.intern(Sym::Array(body.clone()));
        let n = items.len();
        let matches_at = |j: usize| j + p <= n && items[j..j + p].iter().map(|it| it.sym).eq(body.iter().copied());
        let mut out: Vec<Item> = Vec::with_capacity(n);
        let mut j = 0;
        while j < n {
            if matches_at(j) {
                let start = j;
                let mut elems = Vec::new();
                while matches_at(j) {
                    elems.push(self.element(&items[j..j + p]));
                    j += p;
                }
                let lo = self.insts[items[start].inst].lo;
                let hi = self.insts[items[j - 1].inst].hi;
                let inst = self.inst(BKind::Array, lo, hi, elems);
                self.push_merging(&mut out, Item { sym: arr, inst });
            } else {
                self.push_merging(&mut out, items[j]);
                j += 1;
            }
        }
        out
    }

    fn fold_variants(&mut self, items: Vec<Item>, start: usize, end: usize, segs: &[(usize, usize)]) -> Vec<Item> {
        let mut alts: Vec<Vec<SymId>> = Vec::new();
        let mut which = Vec::new();
        for &(a, b) in segs {
            let s: Vec<SymId> = items[a..b].iter().map(|it| it.sym).collect();
            let k = match alts.iter().position(|x| *x == s) {
                Some(k) => k,
                None => {
                    alts.push(s);
                    alts.len() - 1
                }
            };
            which.push(k);
        }
        let opt = self.intern(Sym::Option(alts));
        let arr = self.intern(Sym::Array(vec![opt]));
        let mut elems = Vec::new();
        for (&(a, b), &k) in segs.iter().zip(&which) {
            let e = self.element(&items[a..b]);
            let (lo, hi) = (self.insts[e].lo, self.insts[e].hi);
            elems.push(self.inst(BKind::Option(k), lo, hi, vec![e]));
        }
        let lo = self.insts[items[start].inst].lo;
        let hi = self.insts[items[end - 1].inst].hi;
        let inst = self.inst(BKind::Array, lo, hi, elems);
        let mut out: Vec<Item> = items[..start].to_vec();
        self.push_merging(&mut out, Item { sym: arr, inst });
        for it in &items[end..] {
            self.push_merging(&mut out, *it);
        }
        out
    }
}

/// Smallest period, then leftmost start, of two adjacent equal blocks.
pub fn find_square<T: PartialEq>(s: &[T]) -> Option<(usize, usize)> {
    let n = s.len();
    for p in 1..=n / 2 {
        for i in 0..=n - 2 * p {
            if s[i] == s[i + p] && s[i..i + p] == s[i + p..i + 2 * p] {
                return Some((p, i));
            }
        }
    }
    None
}

/// Leftmost symbol occurring at least twice whose occurrences delimit
/// heterogeneous segments: returns the covered range and the segments.
fn find_variants<T: PartialEq>(s: &[T]) -> Option<(usize, usize, Vec<(usize, usize)>)> {
    let n = s.len();
    for i in 0..n {
        if s[..i].contains(&s[i]) {
            continue;
        }
        let positions: Vec<usize> = (i..n).filter(|&j| s[j] == s[i]).collect();
        if positions.len() < 2 {
            continue;
        }
        let mut segs: Vec<(usize, usize)> = positions.windows(2).map(|w| (w[0], w[1])).collect();
        let last = *positions.last().unwrap();
        let mut best: Option<usize> = None;
        for &(a, b) in &segs {
            let len = b - a;
            if last + len <= n && s[a..b] == s[last..last + len] && best.is_none_or(|x| len > x) {
                best = Some(len);
            }
        }
        let end = best.map_or(n, |len| last + len);
        segs.push((last, end));
        let mut distinct: Vec<&[T]> = Vec::new();
        for &(a, b) in &segs {
            if !distinct.contains(&&s[a..b]) {
                distinct.push(&s[a..b]);
            }
        }
        if distinct.len() >= 2 {
            return Some((positions[0], end, segs));
        }
    }
    None
}

fn fold_items(b: &mut Builder, mut items: Vec<Item>) -> Vec<Item> {
    loop {
        let syms: Vec<SymId> = items.iter().map(|it| it.sym).collect();
        if let Some((p, i)) = find_square(&syms) {
            items = b.fold_square(items, p, i);
            continue;
        }
        if let Some((start, end, segs)) = find_variants(&syms) {
            items = b.fold_variants(items, start, end, &segs);
            continue;
        }
        return items;
    }
}

struct AstBuilder<'a> {
    b: &'a Builder,
    nodes: Vec<Node>,
    counters: [usize; 3],
}

impl AstBuilder<'_> {
    fn fresh(&mut self, kind: usize) -> String {
        let prefix = ["S", "A", "O"][kind];
        let id = format!("{prefix}{}", self.counters[kind]);
        self.counters[kind] += 1;
        id
    }

    fn push(&mut self, id: String, kind: NodeKind, parent: Option<usize>) -> usize {
        self.nodes.push(Node { id, kind, parent });
        self.nodes.len() - 1
    }

    fn seq_node(&mut self, syms: &[SymId], parent: Option<usize>) -> usize {
        if syms.len() == 1 {
            return self.sym_node(syms[0], parent);
        }
        let id = self.fresh(0);
        let n = self.push(id, NodeKind::Record { children: vec![] }, parent);
        let children: Vec<usize> = syms.iter().map(|&s| self.sym_node(s, Some(n))).collect();
        self.nodes[n].kind = NodeKind::Record { children };
        n
    }

    fn sym_node(&mut self, s: SymId, parent: Option<usize>) -> usize {
        match self.b.syms[s as usize].clone() {
            Sym::Atom(f) => self.push(field_label(f), NodeKind::Atomic { field: f }, parent),
            Sym::Array(body) => {
                let id = self.fresh(1);
                let n = self.push(id, NodeKind::Array { body: usize::MAX }, parent);
                let body = self.seq_node(&body, Some(n));
                self.nodes[n].kind = NodeKind::Array { body };
                n
            }
            Sym::Option(alts) => {
                let id = self.fresh(2);
                let n = self.push(id, NodeKind::Option { alternatives: vec![] }, parent);
                let alternatives = alts.iter().map(|a| self.seq_node(a, Some(n))).collect();
                self.nodes[n].kind = NodeKind::Option { alternatives };
                n
            }
        }
    }
}

fn map_instances(b: &Builder, nodes: &[Node], binst: usize, node: usize, parent: Option<usize>, out: &mut Vec<Inst>) -> usize {
    let bi = &b.insts[binst];
    let me = out.len();
    out.push(Inst { node, lo: bi.lo, hi: bi.hi, children: vec![], parent });
    let children: Vec<usize> = match (&bi.kind, &nodes[node].kind) {
        (BKind::Atom, NodeKind::Atomic { .. }) => vec![],
        (BKind::Record, NodeKind::Record { children }) => {
            debug_assert_eq!(children.len(), bi.children.len());
            bi.children
                .iter()
                .zip(children.clone())
                .map(|(&c, cn)| map_instances(b, nodes, c, cn, Some(me), out))
                .collect()
        }
        (BKind::Array, NodeKind::Array { body }) => {
            let body = *body;
            bi.children.iter().map(|&c| map_instances(b, nodes, c, body, Some(me), out)).collect()
        }
        (BKind::Option(k), NodeKind::Option { alternatives }) => {
            let alt = alternatives[*k];
            vec![map_instances(b, nodes, bi.children[0], alt, Some(me), out)]
        }
        (k, n) => panic!("instance kind {k:?} does not fit node {n:?}"),
    };
    out[me].children = children;
    me
}

fn find_spills(doc: &StructureDoc) -> Vec<String> {
    let mut spills = Vec::new();
    for n in &doc.nodes {
        let NodeKind::Record { children } = &n.kind else { continue };
        for (k, &c) in children.iter().enumerate() {
            let NodeKind::Array { body } = doc.nodes[c].kind else { continue };
            let body_fields: Vec<usize> = match &doc.nodes[body].kind {
                NodeKind::Atomic { field } => vec![*field],
                NodeKind::Record { children } => children
                    .iter()
                    .map_while(|&x| match doc.nodes[x].kind {
                        NodeKind::Atomic { field } => Some(field),
                        _ => None,
                    })
                    .collect(),
                _ => vec![],
            };
            let first = body_fields.first();
            let next = children.get(k + 1).and_then(|&x| match doc.nodes[x].kind {
                NodeKind::Atomic { field } => Some(field),
                _ => None,
            });
            if first.is_some() && next.as_ref() == first {
                spills.push(doc.nodes[c].id.clone());
            }
        }
    }
    spills
}

/// Folds a field sequence into a structure whose language contains it.
pub fn sequence_to_structure(seq: &[usize]) -> StructureDoc {
    assert!(!seq.is_empty(), "empty field sequence");
    let mut b = Builder::default();
    let items: Vec<Item> = seq
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let sym = b.intern(Sym::Atom(f));
            let inst = b.inst(BKind::Atom, i, i + 1, vec![]);
            Item { sym, inst }
        })
        .collect();
    let items = fold_items(&mut b, items);
    let syms: Vec<SymId> = items.iter().map(|it| it.sym).collect();
    let mut ast = AstBuilder { b: &b, nodes: Vec::new(), counters: [0; 3] };
    let root = ast.seq_node(&syms, None);
    let nodes = ast.nodes;
    let root_binst = if items.len() == 1 {
        items[0].inst
    } else {
        b.insts.push(BInst { kind: BKind::Record, lo: 0, hi: seq.len(), children: items.iter().map(|i| i.inst).collect() });
        b.insts.len() - 1
    };
    let mut insts = Vec::new();
    let root_inst = map_instances(&b, &nodes, root_binst, root, None, &mut insts);
    let mut doc = StructureDoc {
        nodes,
        root,
        tokens: BTreeMap::new(),
        relations: Vec::new(),
        sequence: seq.to_vec(),
        spills: Vec::new(),
        instances: Some(InstanceTree { insts, root: root_inst }),
    };
    doc.spills = find_spills(&doc);
    doc
}

/// Leaves of the instance tree in order; equals the source sequence.
pub fn flatten_instances(doc: &StructureDoc) -> Vec<usize> {
    let Some(tree) = &doc.instances else { return vec![] };
    let mut out = Vec::new();
    let mut stack = vec![tree.root];
    while let Some(i) = stack.pop() {
        let inst = &tree.insts[i];
        if let NodeKind::Atomic { field } = doc.nodes[inst.node].kind {
            out.push(field);
        }
        stack.extend(inst.children.iter().rev().copied());
    }
    out
}

/// Relabels outlier elements next to arrays whose source index strictly
/// extends an element field's (same co-occurrence class, fewer extra pairs
/// than shared ones), then refolds. Returns the input unchanged otherwise.
pub fn repair_array_boundaries(doc: &StructureDoc, si: &[SourceIndex], class: &[usize]) -> StructureDoc {
    if doc.sequence.is_empty() || !doc.nodes.iter().any(|n| matches!(n.kind, NodeKind::Array { .. })) {
        return doc.clone();
    }
    let mut seq = doc.sequence.clone();
    let mut current = doc.clone();
    loop {
        let Some(tree) = &current.instances else { return current };
        let mut change: Option<(usize, usize)> = None;
        'search: for inst in &tree.insts {
            if !matches!(current.nodes[inst.node].kind, NodeKind::Array { .. }) {
                continue;
            }
            let body: BTreeSet<usize> = seq[inst.lo..inst.hi].iter().copied().collect();
            let neighbours = [inst.lo.checked_sub(1), Some(inst.hi).filter(|&h| h < seq.len())];
            for q in neighbours.into_iter().flatten() {
                let outlier = seq[q];
                if body.contains(&outlier) {
                    continue;
                }
                let mut best: Option<(usize, usize)> = None;
                for &f in &body {
                    if class[f] != class[outlier] || si[f].len() >= si[outlier].len() {
                        continue;
                    }
                    if !si[f].iter().all(|p| si[outlier].binary_search(p).is_ok()) {
                        continue;
                    }
                    let extra = si[outlier].len() - si[f].len();
                    if extra < si[f].len() && best.is_none_or(|(e, _)| extra < e) {
                        best = Some((extra, f));
                    }
                }
                if let Some((_, f)) = best {
                    change = Some((q, f));
                    break 'search;
                }
            }
        }
        match change {
            None => {
                let mut out = current;
                out.tokens = doc.tokens.clone();
                out.relations = doc.relations.clone();
                return out;
            }
            Some((q, f)) => {
                seq[q] = f;
                current = sequence_to_structure(&seq);
            }
        }
    }
}

/// True when the sequence is in the language of the structure.
pub fn matches_sequence(doc: &StructureDoc, seq: &[usize]) -> bool {
    let mut memo = HashMap::new();
    ends(doc, doc.root, seq, 0, &mut memo).contains(&seq.len())
}

fn ends(doc: &StructureDoc, n: usize, seq: &[usize], pos: usize, memo: &mut HashMap<(usize, usize), BTreeSet<usize>>) -> BTreeSet<usize> {
    if let Some(r) = memo.get(&(n, pos)) {
        return r.clone();
    }
    let out: BTreeSet<usize> = match &doc.nodes[n].kind {
        NodeKind::Atomic { field } => {
            if seq.get(pos) == Some(field) {
                [pos + 1].into_iter().collect()
            } else {
                BTreeSet::new()
            }
        }
        NodeKind::Record { children } => {
            let mut cur: BTreeSet<usize> = [pos].into_iter().collect();
            for &c in children {
                let mut next = BTreeSet::new();
                for p in cur {
                    next.extend(ends(doc, c, seq, p, memo));
                }
                cur = next;
            }
            cur
        }
        NodeKind::Array { body } => {
            let mut result = BTreeSet::new();
            let mut work: Vec<usize> = ends(doc, *body, seq, pos, memo).into_iter().collect();
            while let Some(e) = work.pop() {
                if result.insert(e) {
                    work.extend(ends(doc, *body, seq, e, memo));
                }
            }
            result
        }
        NodeKind::Option { alternatives } => {
            let mut r = BTreeSet::new();
            for &a in alternatives {
                r.extend(ends(doc, a, seq, pos, memo));
            }
            r
        }
    };
    memo.insert((n, pos), out.clone());
    out
}

fn adjust_text(a: i64) -> String {
    match a.cmp(&0) {
        std::cmp::Ordering::Equal => String::new(),
        std::cmp::Ordering::Less => format!(" - {}", -a),
        std::cmp::Ordering::Greater => format!(" + {a}"),
    }
}

pub fn render_relation(r: &Relation) -> String {
    let int = |s: &str| format!("int({s}.bytes)");
    match r.kind {
        RelKind::Size | RelKind::Count | RelKind::Offset => {
            let prop = match r.kind {
                RelKind::Size => "size",
                RelKind::Count => "count",
                _ => "offset",
            };
            format!("{}.{prop} = {}{}", r.target, int(&r.sources[0]), adjust_text(r.adjust))
        }
        RelKind::Product => {
            let factors: Vec<String> = r.sources.iter().map(|s| int(s)).collect();
            format!("{}.count = {}", r.target, factors.join(" * "))
        }
        RelKind::Modulus => {
            if r.adjust == 0 {
                format!("{}.count % {} = 0", r.target, int(&r.sources[0]))
            } else {
                format!("{}.count % ({}{}) = 0", r.target, int(&r.sources[0]), adjust_text(r.adjust))
            }
        }
        RelKind::Terminator => format!("{}.terminator = {}.bytes", r.target, r.sources[0]),
        RelKind::RecordType => {
            let tags: Vec<String> = r.tags.iter().map(|(alt, bytes)| format!("{alt} = {}", Token::literal(bytes))).collect();
            format!("{}.record_type = {}.bytes IN {{ {} }}", r.target, r.sources[0], tags.join(", "))
        }
    }
}

/// `WHERE` clauses for one target; terminator alternatives share one clause.
pub fn render_constraints(doc: &StructureDoc, target: &str) -> String {
    let rels = doc.relations_on(target);
    let mut out = String::new();
    let terms: Vec<String> = rels.iter().filter(|r| r.kind == RelKind::Terminator).map(|r| render_relation(r)).collect();
    for r in rels.iter().filter(|r| r.kind != RelKind::Terminator) {
        let _ = write!(out, " WHERE {}", render_relation(r));
    }
    if !terms.is_empty() {
        let _ = write!(out, " WHERE {}", terms.join(" OR "));
    }
    out
}

fn render_node(doc: &StructureDoc, n: usize, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let node = &doc.nodes[n];
    let (word, children) = match &node.kind {
        NodeKind::Atomic { .. } => {
            let _ = writeln!(out, "{pad}{}", node.id);
            return;
        }
        NodeKind::Record { children } => ("record", children.clone()),
        NodeKind::Array { body } => ("array", vec![*body]),
        NodeKind::Option { alternatives } => ("option", alternatives.clone()),
    };
    let _ = writeln!(out, "{pad}{word} {} {{", node.id);
    for c in children {
        render_node(doc, c, indent + 1, out);
    }
    let _ = writeln!(out, "{pad}}}{}", render_constraints(doc, &node.id));
}

/// Grammar text: one atomic definition per field, then the root structure.
pub fn render(doc: &StructureDoc) -> String {
    let mut out = String::new();
    for f in doc.fields() {
        let label = field_label(f);
        match doc.tokens.get(&f) {
            Some(t) => {
                let _ = writeln!(out, "atomic {label} = {t}{}", render_constraints(doc, &label));
            }
            None => {
                let _ = writeln!(out, "atomic {label}{}", render_constraints(doc, &label));
            }
        }
    }
    if !matches!(doc.nodes[doc.root].kind, NodeKind::Atomic { .. }) {
        render_node(doc, doc.root, 0, &mut out);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("grammar parse error at token {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

fn lex(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() || ch == '_' {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                toks.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                toks.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

struct Parser {
    toks: Vec<String>,
    pos: usize,
    nodes: Vec<Node>,
    tokens: BTreeMap<usize, Token>,
    relations: Vec<Relation>,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, GrammarError> {
        Err(GrammarError::Parse { pos: self.pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(|s| s.as_str())
    }

    fn next(&mut self) -> Result<String, GrammarError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.err("unexpected end of grammar"),
        }
    }

    fn expect(&mut self, t: &str) -> Result<(), GrammarError> {
        let got = self.next()?;
        if got == t {
            Ok(())
        } else {
            self.pos -= 1;
            self.err(format!("expected `{t}`, found `{got}`"))
        }
    }

    fn token(&mut self) -> Result<Token, GrammarError> {
        self.expect("[")?;
        let mut parts = Vec::new();
        loop {
            let t = self.next()?;
            if t == "]" {
                break;
            }
            parts.push(t);
        }
        let text = format!("[{}]", parts.join(" "));
        text.parse().or_else(|e| self.err(format!("{e}")))
    }

    fn bytes_ref(&mut self) -> Result<String, GrammarError> {
        let id = self.next()?;
        self.expect(".")?;
        self.expect("bytes")?;
        Ok(id)
    }

    fn int_ref(&mut self) -> Result<String, GrammarError> {
        self.expect("int")?;
        self.expect("(")?;
        let id = self.bytes_ref()?;
        self.expect(")")?;
        Ok(id)
    }

    fn adjust(&mut self) -> Result<i64, GrammarError> {
        match self.peek() {
            Some("-") | Some("+") => {
                let sign = if self.next()? == "-" { -1 } else { 1 };
                let n: i64 = match self.next()?.parse() {
                    Ok(n) => n,
                    Err(_) => return self.err("adjustment must be an integer"),
                };
                Ok(sign * n)
            }
            _ => Ok(0),
        }
    }

    fn relation(&mut self) -> Result<Relation, GrammarError> {
        let target = self.next()?;
        self.expect(".")?;
        let prop = self.next()?;
        let mk = |kind, sources, adjust| Relation { kind, target: target.clone(), sources, adjust, tags: vec![] };
        match prop.as_str() {
            "count" if self.peek() == Some("%") => {
                self.expect("%")?;
                let (src, adj) = if self.peek() == Some("(") {
                    self.expect("(")?;
                    let s = self.int_ref()?;
                    let a = self.adjust()?;
                    self.expect(")")?;
                    (s, a)
                } else {
                    (self.int_ref()?, 0)
                };
                self.expect("=")?;
                self.expect("0")?;
                Ok(mk(RelKind::Modulus, vec![src], adj))
            }
            "count" | "size" | "offset" => {
                self.expect("=")?;
                let mut sources = vec![self.int_ref()?];
                while self.peek() == Some("*") {
                    self.expect("*")?;
                    sources.push(self.int_ref()?);
                }
                let adj = self.adjust()?;
                if sources.len() > 1 {
                    if prop != "count" || adj != 0 {
                        return self.err("products only apply to count without adjustment");
                    }
                    return Ok(mk(RelKind::Product, sources, 0));
                }
                let kind = match prop.as_str() {
                    "count" => RelKind::Count,
                    "size" => RelKind::Size,
                    _ => RelKind::Offset,
                };
                Ok(mk(kind, sources, adj))
            }
            "terminator" => {
                self.expect("=")?;
                let s = self.bytes_ref()?;
                Ok(mk(RelKind::Terminator, vec![s], 0))
            }
            "record_type" => {
                self.expect("=")?;
                let s = self.bytes_ref()?;
                self.expect("IN")?;
                self.expect("{")?;
                let mut tags = Vec::new();
                loop {
                    let alt = self.next()?;
                    self.expect("=")?;
                    let tok = self.token()?;
                    let Some(bytes) = tok.literal_bytes() else { return self.err("record tags must be literal") };
                    tags.push((alt, bytes));
                    match self.next()?.as_str() {
                        "," => continue,
                        "}" => break,
                        other => return self.err(format!("unexpected `{other}` in tag list")),
                    }
                }
                let mut r = mk(RelKind::RecordType, vec![s], 0);
                r.tags = tags;
                Ok(r)
            }
            other => self.err(format!("unknown property `{other}`")),
        }
    }

    fn constraints(&mut self) -> Result<(), GrammarError> {
        while self.peek() == Some("WHERE") {
            self.expect("WHERE")?;
            let r = self.relation()?;
            self.relations.push(r);
            while self.peek() == Some("OR") {
                self.expect("OR")?;
                let r = self.relation()?;
                self.relations.push(r);
            }
        }
        Ok(())
    }

    fn composite(&mut self, parent: Option<usize>) -> Result<usize, GrammarError> {
        let word = self.next()?;
        let id = self.next()?;
        self.expect("{")?;
        let n = self.nodes.len();
        self.nodes.push(Node { id, kind: NodeKind::Record { children: vec![] }, parent });
        let mut children = Vec::new();
        while self.peek() != Some("}") {
            match self.peek() {
                Some("record") | Some("array") | Some("option") => children.push(self.composite(Some(n))?),
                Some(t) if parse_field_label(t).is_some() => {
                    let f = parse_field_label(t).unwrap();
                    let label = self.next()?;
                    self.nodes.push(Node { id: label, kind: NodeKind::Atomic { field: f }, parent: Some(n) });
                    children.push(self.nodes.len() - 1);
                }
                _ => {
                    let t = self.next()?;
                    return self.err(format!("unexpected `{t}` in {word} body"));
                }
            }
        }
        self.expect("}")?;
        self.nodes[n].kind = match word.as_str() {
            "record" => NodeKind::Record { children },
            "array" if children.len() == 1 => NodeKind::Array { body: children[0] },
            "option" => NodeKind::Option { alternatives: children },
            _ => return self.err(format!("malformed {word}")),
        };
        self.constraints()?;
        Ok(n)
    }
}

pub fn parse_grammar(text: &str) -> Result<StructureDoc, GrammarError> {
    let mut p = Parser { toks: lex(text), pos: 0, nodes: Vec::new(), tokens: BTreeMap::new(), relations: Vec::new() };
    let mut root = None;
    let mut atomics = Vec::new();
    while let Some(t) = p.peek() {
        match t {
            "atomic" => {
                p.expect("atomic")?;
                let label = p.next()?;
                let Some(f) = parse_field_label(&label) else { return p.err("atomic definitions name a field") };
                if p.peek() == Some("=") {
                    p.expect("=")?;
                    let tok = p.token()?;
                    p.tokens.insert(f, tok);
                }
                atomics.push(f);
                p.constraints()?;
            }
            "record" | "array" | "option" => {
                if root.is_some() {
                    return p.err("more than one root structure");
                }
                root = Some(p.composite(None)?);
            }
            other => {
                let other = other.to_string();
                return p.err(format!("unexpected `{other}`"));
            }
        }
    }
    let root = match root {
        Some(r) => r,
        None if atomics.len() == 1 => {
            p.nodes.push(Node { id: field_label(atomics[0]), kind: NodeKind::Atomic { field: atomics[0] }, parent: None });
            p.nodes.len() - 1
        }
        None => return p.err("grammar has no root structure"),
    };
    Ok(StructureDoc {
        nodes: p.nodes,
        root,
        tokens: p.tokens,
        relations: p.relations,
        sequence: Vec::new(),
        spills: Vec::new(),
        instances: None,
    })
}

/// Shape equality ignoring node numbering: ids, kinds and order must agree.
pub fn isomorphic(a: &StructureDoc, b: &StructureDoc) -> bool {
    fn same(a: &StructureDoc, x: usize, b: &StructureDoc, y: usize) -> bool {
        let (nx, ny) = (&a.nodes[x], &b.nodes[y]);
        if nx.id != ny.id {
            return false;
        }
        let (cx, cy) = (a.children(x), b.children(y));
        let kinds_match = matches!(
            (&nx.kind, &ny.kind),
            (NodeKind::Atomic { .. }, NodeKind::Atomic { .. })
                | (NodeKind::Record { .. }, NodeKind::Record { .. })
                | (NodeKind::Array { .. }, NodeKind::Array { .. })
                | (NodeKind::Option { .. }, NodeKind::Option { .. })
        );
        kinds_match && cx.len() == cy.len() && cx.iter().zip(&cy).all(|(&p, &q)| same(a, p, b, q))
    }
    let mut ra = a.relations.clone();
    let mut rb = b.relations.clone();
    ra.sort_by_key(render_relation);
    rb.sort_by_key(render_relation);
    same(a, a.root, b, b.root) && a.tokens == b.tokens && ra == rb
}
