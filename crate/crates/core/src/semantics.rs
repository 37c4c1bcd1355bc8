//! Semantic dependences between structure nodes and relation mining.

use crate::cdg::{Annotation, ProjectedGraph};
use crate::structure::{field_label, parse_field_label, InstanceTree, NodeKind, StructureDoc};
use crate::tokens::Token;
use crate::trace_model::ByteInterval;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelKind {
    Size,
    Terminator,
    Count,
    Offset,
    RecordType,
    Modulus,
    Product,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelKind,
    pub target: String,
    pub sources: Vec<String>,
    pub adjust: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("relation names unknown node {0}")]
    DanglingPath(String),
    #[error("cannot read an integer from {0:?}")]
    NotInteger(Vec<u8>),
}

/// Source field guards the target node (an atomic occurrence or one of its
/// ancestors below the first composite containing the source).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SemanticDependence {
    pub source: usize,
    pub target: usize,
}

pub fn semantic_dependences(pg: &ProjectedGraph, ann: &Annotation, doc: &StructureDoc) -> Vec<SemanticDependence> {
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (g, d) in &pg.edges {
        for &s in &ann.fields[g] {
            for &t in &ann.fields[d] {
                if s != t {
                    pairs.insert((s, t));
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for (s, t) in pairs {
        for n in doc.field_nodes(t) {
            let mut cur = Some(n);
            while let Some(c) = cur {
                if c != n && doc.subtree_fields(c).contains(&s) {
                    break;
                }
                out.insert(SemanticDependence { source: s, target: c });
                cur = doc.nodes[c].parent;
            }
        }
    }
    out.into_iter().collect()
}

/// Decimal text for digit tokens, little-endian otherwise.
pub fn int_value(bytes: &[u8], token: &Token) -> Result<u64, SemanticsError> {
    if bytes.is_empty() {
        return Err(SemanticsError::NotInteger(bytes.to_vec()));
    }
    if token.is_digits() {
        decimal(bytes).ok_or_else(|| SemanticsError::NotInteger(bytes.to_vec()))
    } else if bytes.len() <= 8 {
        Ok(little_endian(bytes))
    } else {
        Err(SemanticsError::NotInteger(bytes.to_vec()))
    }
}

pub fn decimal(bytes: &[u8]) -> Option<u64> {
    if bytes.is_empty() || !bytes.iter().all(|b| b.is_ascii_digit()) {
        return None;
    }
    bytes.iter().try_fold(0u64, |a, &b| a.checked_mul(10)?.checked_add((b - b'0') as u64))
}

pub fn little_endian(bytes: &[u8]) -> u64 {
    bytes.iter().rev().fold(0u64, |a, &b| (a << 8) | b as u64)
}

fn is_texty(b: u8) -> bool {
    (0x20..0x7f).contains(&b) || matches!(b, b'\t' | b'\n' | b'\r')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntKind {
    Decimal,
    Binary,
}

/// Concrete bytes of every instance, given the byte span of each sequence position.
#[derive(Clone, Copy, Debug)]
pub struct FieldView<'a> {
    pub input: &'a [u8],
    pub spans: &'a [ByteInterval],
}

/// Instances of nodes and the properties relations talk about.
pub struct Model<'a> {
    pub doc: &'a StructureDoc,
    pub tree: &'a InstanceTree,
    pub view: FieldView<'a>,
    pub insts_of: Vec<Vec<usize>>,
    field_positions: Vec<Vec<usize>>,
    position_inst: Vec<usize>,
    pairings: RefCell<HashMap<(usize, usize), Option<Rc<Pairing>>>>,
}

/// How target instances find their source instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pairing {
    pub targets: Vec<usize>,
    pub sources: Vec<usize>,
    pub by_index: bool,
}

impl<'a> Model<'a> {
    pub fn new(doc: &'a StructureDoc, view: FieldView<'a>) -> Model<'a> {
        let tree = doc.instances.as_ref().expect("structure has instances");
        let mut insts_of = vec![Vec::new(); doc.nodes.len()];
        let nfields = doc.sequence.iter().copied().max().map_or(0, |m| m + 1);
        let mut field_positions: Vec<Vec<usize>> = vec![Vec::new(); nfields];
        let mut position_inst = vec![usize::MAX; view.spans.len()];
        for (i, inst) in tree.insts.iter().enumerate() {
            insts_of[inst.node].push(i);
            if let NodeKind::Atomic { field } = doc.nodes[inst.node].kind {
                if field >= field_positions.len() {
                    field_positions.resize(field + 1, Vec::new());
                }
                field_positions[field].push(inst.lo);
                position_inst[inst.lo] = i;
            }
        }
        for v in insts_of.iter_mut() {
            v.sort_by_key(|&i| tree.insts[i].lo);
        }
        for v in field_positions.iter_mut() {
            v.sort_unstable();
        }
        Model { doc, tree, view, insts_of, field_positions, position_inst, pairings: RefCell::new(HashMap::new()) }
    }

    pub fn span(&self, inst: usize) -> ByteInterval {
        let i = &self.tree.insts[inst];
        ByteInterval { start: self.view.spans[i.lo].start, end: self.view.spans[i.hi - 1].end }
    }

    pub fn bytes(&self, inst: usize) -> &'a [u8] {
        &self.view.input[self.span(inst).range()]
    }

    pub fn offset(&self, inst: usize) -> u64 {
        self.span(inst).start as u64
    }

    pub fn size(&self, inst: usize) -> u64 {
        self.span(inst).len() as u64
    }

    pub fn count(&self, inst: usize) -> u64 {
        self.tree.insts[inst].children.len() as u64
    }

    pub fn field_insts(&self, field: usize) -> Vec<usize> {
        self.field_positions.get(field).map_or(vec![], |ps| ps.iter().map(|&p| self.position_inst[p]).collect())
    }

    fn sources_in(&self, field: usize, lo: usize, hi: usize) -> &[usize] {
        let ps = self.field_positions.get(field).map_or(&[][..], |v| v.as_slice());
        let a = ps.partition_point(|&p| p < lo);
        let b = ps.partition_point(|&p| p < hi);
        &ps[a..b]
    }

    /// Nearest enclosing instance holding source occurrences outside the
    /// target decides; arrays there make the pairing ambiguous. Otherwise
    /// equal counts pair by index.
    pub fn pairing(&self, source: usize, target: usize) -> Option<Rc<Pairing>> {
        if let Some(p) = self.pairings.borrow().get(&(source, target)) {
            return p.clone();
        }
        let p = self.compute_pairing(source, target).map(Rc::new);
        self.pairings.borrow_mut().insert((source, target), p.clone());
        p
    }

    fn compute_pairing(&self, source: usize, target: usize) -> Option<Pairing> {
        let targets = self.insts_of[target].clone();
        let all_sources = self.field_insts(source);
        if targets.is_empty() || all_sources.is_empty() {
            return None;
        }
        let mut local = Vec::with_capacity(targets.len());
        for &t in &targets {
            let ti = &self.tree.insts[t];
            let mut found = None;
            let mut cur = ti.parent;
            while let Some(a) = cur {
                let ai = &self.tree.insts[a];
                let inside = self.sources_in(source, ai.lo, ai.hi).len() - self.sources_in(source, ti.lo, ti.hi).len();
                if inside > 0 {
                    let single = inside == 1 && !matches!(self.doc.nodes[ai.node].kind, NodeKind::Array { .. });
                    if single {
                        let pos = self
                            .sources_in(source, ai.lo, ai.hi)
                            .iter()
                            .find(|&&p| p < ti.lo || p >= ti.hi)
                            .copied()
                            .unwrap();
                        found = Some(self.position_inst[pos]);
                    }
                    break;
                }
                cur = ai.parent;
            }
            match found {
                Some(s) => local.push(s),
                None => break,
            }
        }
        if local.len() == targets.len() {
            return Some(Pairing { targets, sources: local, by_index: false });
        }
        if all_sources.len() == targets.len() {
            return Some(Pairing { targets, sources: all_sources, by_index: true });
        }
        None
    }

    pub fn int_kind(&self, field: usize) -> Option<IntKind> {
        let token = self.doc.tokens.get(&field)?;
        let insts = self.field_insts(field);
        if insts.is_empty() {
            return None;
        }
        if token.is_digits() {
            return Some(IntKind::Decimal);
        }
        let mut binary = false;
        for &i in &insts {
            let b = self.bytes(i);
            if b.is_empty() || b.len() > 8 {
                return None;
            }
            binary |= b.iter().any(|&x| !is_texty(x));
        }
        binary.then_some(IntKind::Binary)
    }

    pub fn int_of(&self, inst: usize, kind: IntKind) -> Option<u64> {
        let b = self.bytes(inst);
        match kind {
            IntKind::Decimal => decimal(b),
            IntKind::Binary => (b.len() <= 8).then(|| little_endian(b)),
        }
    }

    fn is_plus(&self, node: usize) -> bool {
        match self.doc.nodes[node].kind {
            NodeKind::Atomic { field } => self.doc.tokens.get(&field).is_some_and(|t| t.plus),
            _ => false,
        }
    }

    fn variable_size(&self, node: usize) -> bool {
        match &self.doc.nodes[node].kind {
            NodeKind::Atomic { .. } => self.is_plus(node),
            _ => {
                let sizes: BTreeSet<u64> = self.insts_of[node].iter().map(|&i| self.size(i)).collect();
                sizes.len() > 1
            }
        }
    }

    fn property(&self, kind: RelKind, inst: usize) -> u64 {
        match kind {
            RelKind::Size => self.size(inst),
            RelKind::Offset => self.offset(inst),
            _ => self.count(inst),
        }
    }

    /// Checks a single-source integer relation on every paired instance.
    fn holds_int(&self, kind: RelKind, target: usize, source: usize, adjust: i64) -> bool {
        let Some(ik) = self.int_kind(source) else { return false };
        let Some(p) = self.pairing(source, target) else { return false };
        p.targets.iter().zip(&p.sources).all(|(&t, &s)| {
            let Some(v) = self.int_of(s, ik) else { return false };
            let v = v as i128 + adjust as i128;
            let prop = self.property(kind, t) as i128;
            match kind {
                RelKind::Modulus => v >= 2 && v < prop && prop % v == 0,
                _ => prop == v,
            }
        })
    }

    fn holds_product(&self, target: usize, sources: &[usize]) -> bool {
        let mut pairings = Vec::new();
        for &s in sources {
            let Some(ik) = self.int_kind(s) else { return false };
            let Some(p) = self.pairing(s, target) else { return false };
            pairings.push((p, ik));
        }
        let targets = &pairings[0].0.targets;
        targets.iter().enumerate().all(|(k, &t)| {
            let mut prod: u128 = 1;
            for (p, ik) in &pairings {
                match self.int_of(p.sources[k], *ik) {
                    Some(v) => prod = prod.saturating_mul(v as u128),
                    None => return false,
                }
            }
            prod == self.count(t) as u128
        })
    }

    fn literal_of(&self, field: usize) -> Option<Vec<u8>> {
        self.doc.tokens.get(&field)?.literal_bytes()
    }

    fn holds_terminators(&self, target_field: usize, sources: &[usize]) -> bool {
        let alts: Vec<Vec<u8>> = match sources.iter().map(|&s| self.literal_of(s)).collect::<Option<Vec<_>>>() {
            Some(a) => a,
            None => return false,
        };
        let insts = self.field_insts(target_field);
        !insts.is_empty()
            && insts.iter().all(|&i| {
                let b = self.bytes(i);
                let end = self.span(i).end as usize;
                let rest = &self.view.input[end..];
                alts.iter().all(|a| !contains_sub(b, a)) && alts.iter().any(|a| rest.starts_with(a))
            })
    }

    fn record_type_tags(&self, array: usize, tag: usize) -> Option<(usize, Vec<(String, Vec<u8>)>)> {
        let NodeKind::Array { body } = self.doc.nodes[array].kind else { return None };
        let NodeKind::Option { alternatives } = &self.doc.nodes[body].kind else { return None };
        let pos = tag_position(self.doc, alternatives, tag)?;
        let mut tags: Vec<(String, Vec<u8>)> = Vec::new();
        for &alt in alternatives {
            let node = match &self.doc.nodes[alt].kind {
                NodeKind::Record { children } => children[pos],
                _ => alt,
            };
            let values: BTreeSet<&[u8]> = self.insts_of[node].iter().map(|&i| self.bytes(i)).collect();
            if values.len() != 1 {
                return None;
            }
            let v = values.into_iter().next().unwrap().to_vec();
            if tags.iter().any(|t| t.1 == v) {
                return None;
            }
            tags.push((self.doc.nodes[alt].id.clone(), v));
        }
        Some((pos, tags))
    }
}

fn contains_sub(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Position of a field shared by every alternative (the first such).
fn tag_position(doc: &StructureDoc, alternatives: &[usize], tag: usize) -> Option<usize> {
    let field_at = |alt: usize, p: usize| -> Option<usize> {
        match &doc.nodes[alt].kind {
            NodeKind::Record { children } => match doc.nodes[*children.get(p)?].kind {
                NodeKind::Atomic { field } => Some(field),
                _ => None,
            },
            NodeKind::Atomic { field } if p == 0 => Some(*field),
            _ => None,
        }
    };
    (0..8).find(|&p| alternatives.iter().all(|&a| field_at(a, p) == Some(tag)))
}

/// Knobs for relation mining.
#[derive(Clone, Debug)]
pub struct MineConfig {
    /// Try every integer field as a source for targets nobody guards.
    pub exhaustive_fallback: bool,
}

impl Default for MineConfig {
    fn default() -> MineConfig {
        MineConfig { exhaustive_fallback: true }
    }
}

const ADJUSTS: [i64; 3] = [0, -1, 1];

fn node_label(doc: &StructureDoc, n: usize) -> String {
    doc.nodes[n].id.clone()
}

/// Mines relations justified by the dependences (terminators positionally).
/// `si_addrs` gives the instruction addresses each field is used at.
pub fn mine_relations(
    deps: &[SemanticDependence],
    model: &Model,
    si_addrs: &BTreeMap<usize, BTreeSet<u32>>,
    config: &MineConfig,
) -> Vec<Relation> {
    let doc = model.doc;
    let mut by_target: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for d in deps {
        by_target.entry(d.target).or_default().insert(d.source);
    }
    if config.exhaustive_fallback {
        let int_fields: Vec<usize> = doc.fields().into_iter().filter(|&f| model.int_kind(f).is_some()).collect();
        for n in 0..doc.nodes.len() {
            let wants = matches!(doc.nodes[n].kind, NodeKind::Array { .. }) || model.variable_size(n);
            if wants && !by_target.contains_key(&n) {
                let outside: BTreeSet<usize> =
                    int_fields.iter().copied().filter(|f| !doc.subtree_fields(n).contains(f)).collect();
                if !outside.is_empty() {
                    log::debug!("no dependence reaches {}; trying all integer fields", doc.nodes[n].id);
                    by_target.insert(n, outside);
                }
            }
        }
    }
    let mut rels: Vec<Relation> = Vec::new();
    let mut push = |r: Relation| {
        if !rels.contains(&r) {
            rels.push(r);
        }
    };
    let mut offsets: Vec<(usize, usize, i64)> = Vec::new();
    for (&target, sources) in &by_target {
        let is_array = matches!(doc.nodes[target].kind, NodeKind::Array { .. });
        let tlabel = node_label(doc, target);
        let mut mod_sources = Vec::new();
        let mut counts: Vec<Relation> = Vec::new();
        for &s in sources {
            let Some(kind) = model.int_kind(s) else { continue };
            let slabel = field_label(s);
            let mk = |k, a| Relation { kind: k, target: tlabel.clone(), sources: vec![slabel.clone()], adjust: a, tags: vec![] };
            if is_array {
                if let Some(&a) = ADJUSTS.iter().find(|&&a| model.holds_int(RelKind::Count, target, s, a)) {
                    counts.push(mk(RelKind::Count, a));
                }
                for a in ADJUSTS {
                    if model.holds_int(RelKind::Modulus, target, s, a) {
                        push(mk(RelKind::Modulus, a));
                        if a == 0 {
                            mod_sources.push(s);
                        }
                    }
                }
            }
            if model.variable_size(target) {
                if let Some(&a) = ADJUSTS.iter().find(|&&a| model.holds_int(RelKind::Size, target, s, a)) {
                    push(mk(RelKind::Size, a));
                }
            }
            if kind == IntKind::Binary && model.insts_of[target].iter().any(|&t| model.offset(t) > 0) {
                if let Some(&a) = ADJUSTS.iter().find(|&&a| model.holds_int(RelKind::Offset, target, s, a)) {
                    offsets.push((target, s, a));
                }
            }
        }
        let mut product_sources: Vec<usize> = Vec::new();
        if mod_sources.len() >= 2 {
            'size: for k in 2..=mod_sources.len().min(4) {
                for subset in subsets(&mod_sources, k) {
                    if model.holds_product(target, &subset) {
                        product_sources = subset;
                        break 'size;
                    }
                }
            }
        }
        if !product_sources.is_empty() {
            push(Relation {
                kind: RelKind::Product,
                target: tlabel.clone(),
                sources: product_sources.iter().map(|&s| field_label(s)).collect(),
                adjust: 0,
                tags: vec![],
            });
        }
        for c in counts {
            let src = parse_field_label(&c.sources[0]).unwrap();
            if !product_sources.contains(&src) {
                push(c);
            }
        }
    }
    for &(t, s, a) in &offsets {
        let shadowed = doc.ancestors(t).iter().any(|p| offsets.contains(&(*p, s, a)));
        if !shadowed {
            push(Relation {
                kind: RelKind::Offset,
                target: node_label(doc, t),
                sources: vec![field_label(s)],
                adjust: a,
                tags: vec![],
            });
        }
    }
    for r in mine_record_types(deps, model) {
        push(r);
    }
    for r in mine_terminators(model, si_addrs) {
        push(r);
    }
    debug_assert!(evaluate(model, &rels), "mined relations do not hold: {:?}", violations(model, &rels));
    rels
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for mut rest in subsets(&items[1..], k - 1) {
        rest.insert(0, items[0]);
        out.push(rest);
    }
    out.extend(subsets(&items[1..], k));
    out
}

fn mine_record_types(deps: &[SemanticDependence], model: &Model) -> Vec<Relation> {
    let doc = model.doc;
    let mut out = Vec::new();
    for (a, node) in doc.nodes.iter().enumerate() {
        let NodeKind::Array { body } = node.kind else { continue };
        if !matches!(doc.nodes[body].kind, NodeKind::Option { .. }) {
            continue;
        }
        let candidates: BTreeSet<usize> = deps
            .iter()
            .filter(|d| d.target != body && doc.is_ancestor(body, d.target))
            .map(|d| d.source)
            .collect();
        for tag in candidates {
            if let Some((_, tags)) = model.record_type_tags(a, tag) {
                out.push(Relation {
                    kind: RelKind::RecordType,
                    target: node.id.clone(),
                    sources: vec![field_label(tag)],
                    adjust: 0,
                    tags,
                });
                break;
            }
        }
    }
    out
}

fn mine_terminators(model: &Model, si_addrs: &BTreeMap<usize, BTreeSet<u32>>) -> Vec<Relation> {
    let doc = model.doc;
    let mut cands: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for w in doc.sequence.windows(2) {
        let (f, g) = (w[0], w[1]);
        let (Some(tf), Some(tg)) = (doc.tokens.get(&f), doc.tokens.get(&g)) else { continue };
        if tf.is_literal() || !tg.is_literal() {
            continue;
        }
        let shared = match (si_addrs.get(&f), si_addrs.get(&g)) {
            (Some(a), Some(b)) => !a.is_disjoint(b),
            _ => false,
        };
        if tf.plus || shared {
            cands.entry(f).or_default().insert(g);
        }
    }
    let mut out = Vec::new();
    for (f, gs) in cands {
        let gs: Vec<usize> = gs.into_iter().collect();
        if model.holds_terminators(f, &gs) {
            for g in gs {
                out.push(Relation {
                    kind: RelKind::Terminator,
                    target: field_label(f),
                    sources: vec![field_label(g)],
                    adjust: 0,
                    tags: vec![],
                });
            }
        }
    }
    out
}

/// True when every relation holds on the model's instances. Terminator
/// alternatives on one target are checked together.
pub fn evaluate(model: &Model, rels: &[Relation]) -> bool {
    violations(model, rels).is_empty()
}

/// Relations that fail on the model, rendered for diagnostics.
pub fn violations(model: &Model, rels: &[Relation]) -> Vec<String> {
    let doc = model.doc;
    let mut bad = Vec::new();
    let mut terms: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let resolve = |id: &str| -> Vec<usize> { doc.target_nodes(id) };
    let field = |id: &str| parse_field_label(id);
    for r in rels {
        let ok = match r.kind {
            RelKind::Terminator => {
                if let (Some(t), Some(s)) = (field(&r.target), field(&r.sources[0])) {
                    terms.entry(t).or_default().push(s);
                    true
                } else {
                    false
                }
            }
            RelKind::Product => {
                let srcs: Option<Vec<usize>> = r.sources.iter().map(|s| field(s)).collect();
                match srcs {
                    Some(srcs) => resolve(&r.target).iter().all(|&t| model.holds_product(t, &srcs)),
                    None => false,
                }
            }
            RelKind::RecordType => match (resolve(&r.target).first(), field(&r.sources[0])) {
                (Some(&t), Some(tag)) => model.record_type_tags(t, tag).is_some_and(|(_, tags)| tags == r.tags),
                _ => false,
            },
            _ => match field(&r.sources[0]) {
                Some(s) => {
                    let targets = resolve(&r.target);
                    !targets.is_empty() && targets.iter().all(|&t| model.holds_int(r.kind, t, s, r.adjust))
                }
                None => false,
            },
        };
        if !ok {
            bad.push(crate::structure::render_relation(r));
        }
    }
    for (t, ss) in terms {
        if !model.holds_terminators(t, &ss) {
            bad.push(format!("{}.terminator", field_label(t)));
        }
    }
    bad
}

/// Validates relation paths and stores them on the structure.
pub fn attach(doc: &StructureDoc, rels: &[Relation]) -> Result<StructureDoc, SemanticsError> {
    for r in rels {
        for p in std::iter::once(&r.target).chain(&r.sources) {
            if doc.target_nodes(p).is_empty() {
                return Err(SemanticsError::DanglingPath(p.clone()));
            }
        }
    }
    let mut out = doc.clone();
    for r in rels {
        if !out.relations.contains(r) {
            out.relations.push(r.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::sequence_to_structure;

    fn sum_csv_model_parts() -> (StructureDoc, Vec<ByteInterval>, Vec<u8>) {
        let input = b"4,3,2,5,8\n".to_vec();
        let seq = vec![0, 1, 2, 3, 2, 3, 2, 3, 2, 4];
        let mut doc = sequence_to_structure(&seq);
        for (f, t) in [(0, "[0x34]"), (1, "[0x2C]"), (2, "[DIGIT]"), (3, "[0x2C]"), (4, "[0x0A]")] {
            doc.tokens.insert(f, t.parse().unwrap());
        }
        let spans = (0..10).map(|i| ByteInterval::new(i, i + 1)).collect();
        (doc, spans, input)
    }

    #[test]
    fn int_value_decimal_and_binary() {
        assert_eq!(int_value(b"4", &"[DIGIT]".parse().unwrap()), Ok(4));
        assert_eq!(int_value(&[0x36, 0, 0, 0], &"[ALL ALL ALL ALL]".parse().unwrap()), Ok(54));
        assert!(int_value(b"", &"[DIGIT]".parse().unwrap()).is_err());
    }

    #[test]
    fn sum_csv_relations() {
        let (doc, spans, input) = sum_csv_model_parts();
        let model = Model::new(&doc, FieldView { input: &input, spans: &spans });
        let a0 = doc.node_by_id("A0").unwrap();
        let deps = vec![SemanticDependence { source: 0, target: a0 }];
        let si: BTreeMap<usize, BTreeSet<u32>> = [
            (0, [2, 3, 4, 6, 8].into_iter().collect()),
            (1, [2, 3].into_iter().collect()),
            (2, [2, 7, 9, 10].into_iter().collect()),
            (3, [2, 7].into_iter().collect()),
            (4, [2].into_iter().collect()),
        ]
        .into_iter()
        .collect();
        let rels = mine_relations(&deps, &model, &si, &MineConfig { exhaustive_fallback: false });
        let text: Vec<String> = rels.iter().map(crate::structure::render_relation).collect();
        assert_eq!(
            text,
            vec!["A0.count = int(F0.bytes) - 1", "F2.terminator = F3.bytes", "F2.terminator = F4.bytes"]
        );
        assert!(evaluate(&model, &rels));
    }

    #[test]
    fn attach_rejects_dangling_paths() {
        let (doc, _, _) = sum_csv_model_parts();
        let r = Relation { kind: RelKind::Count, target: "A9".into(), sources: vec!["F0".into()], adjust: 0, tags: vec![] };
        assert_eq!(attach(&doc, &[r]), Err(SemanticsError::DanglingPath("A9".into())));
        assert_eq!(attach(&doc, &[]).unwrap(), doc);
    }

    #[test]
    fn subsets_enumerate_in_order() {
        assert_eq!(subsets(&[1, 2, 3], 2), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
