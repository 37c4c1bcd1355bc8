//! Taint interval graph: containment tree over values, gap filling,
//! overlap splitting and frontier extraction.

use crate::field_partition::{Field, UsePair, Value};
use crate::trace_model::ByteInterval;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TigNode {
    pub interval: ByteInterval,
    /// Index into `Tig::values`; `None` only for a synthetic root.
    pub value: Option<usize>,
    pub field: Option<usize>,
    pub gap: bool,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Tig {
    pub nodes: Vec<TigNode>,
    pub root: usize,
    /// Laminar values after overlap splitting, plus one value per gap node.
    pub values: Vec<Value>,
    pub input_len: usize,
}

fn sort_key(iv: &ByteInterval) -> (u32, std::cmp::Reverse<u32>) {
    (iv.start, std::cmp::Reverse(iv.end))
}

/// Splits partially overlapping intervals at their mutual boundaries until
/// the family is laminar. Fragments inherit the uses of every split interval
/// containing them.
pub fn laminarize(values: Vec<Value>) -> Vec<Value> {
    let mut map: HashMap<ByteInterval, Vec<UsePair>> = HashMap::new();
    for v in values {
        map.entry(v.interval).or_default().extend(v.uses);
    }
    loop {
        let mut ivs: Vec<ByteInterval> = map.keys().copied().collect();
        ivs.sort_by_key(sort_key);
        let mut partners: HashMap<ByteInterval, Vec<ByteInterval>> = HashMap::new();
        let mut stack: Vec<ByteInterval> = Vec::new();
        for iv in ivs {
            while stack.last().is_some_and(|t| t.end <= iv.start) {
                stack.pop();
            }
            let mut clash = false;
            for t in stack.iter().rev() {
                if t.end <= iv.start {
                    break;
                }
                if t.end < iv.end {
                    clash = true;
                    partners.entry(iv).or_default().push(*t);
                    partners.entry(*t).or_default().push(iv);
                }
            }
            if !clash {
                stack.push(iv);
            }
        }
        if partners.is_empty() {
            break;
        }
        let mut additions: Vec<(ByteInterval, Vec<UsePair>)> = Vec::new();
        for (x, ps) in &partners {
            let mut cuts: Vec<u32> = vec![x.start, x.end];
            for p in ps {
                for b in [p.start, p.end] {
                    if x.start < b && b < x.end {
                        cuts.push(b);
                    }
                }
            }
            cuts.sort_unstable();
            cuts.dedup();
            for w in cuts.windows(2) {
                let frag = ByteInterval::new(w[0], w[1]);
                let mut uses = map[x].clone();
                for p in ps {
                    if p.contains(&frag) {
                        uses.extend(map[p].iter().copied());
                    }
                }
                additions.push((frag, uses));
            }
        }
        for x in partners.keys() {
            map.remove(x);
        }
        for (frag, uses) in additions {
            map.entry(frag).or_default().extend(uses);
        }
    }
    let mut out: Vec<Value> = map
        .into_iter()
        .map(|(interval, mut uses)| {
            uses.sort_unstable();
            uses.dedup();
            Value { interval, uses }
        })
        .collect();
    out.sort_by_key(|v| sort_key(&v.interval));
    out
}

/// Builds the containment tree over the values (split first if needed),
/// rooted at the whole input, with gap children filling uncovered bytes.
pub fn build_tig(values: &[Value], input_len: usize) -> Tig {
    let values = laminarize(values.to_vec());
    let whole = ByteInterval { start: 0, end: input_len as u32 };
    let mut nodes: Vec<TigNode> = Vec::with_capacity(values.len() * 2 + 1);
    let root_value = values.iter().position(|v| v.interval == whole);
    nodes.push(TigNode { interval: whole, value: root_value, field: None, gap: false, children: vec![], parent: None });
    let mut stack = vec![0usize];
    for (i, v) in values.iter().enumerate() {
        if Some(i) == root_value {
            continue;
        }
        while !nodes[*stack.last().unwrap()].interval.contains(&v.interval) {
            stack.pop();
        }
        let parent = *stack.last().unwrap();
        let id = nodes.len();
        nodes.push(TigNode { interval: v.interval, value: Some(i), field: None, gap: false, children: vec![], parent: Some(parent) });
        nodes[parent].children.push(id);
        stack.push(id);
    }
    let mut tig = Tig { nodes, root: 0, values, input_len };
    fill_gaps(&mut tig);
    tig
}

fn fill_gaps(tig: &mut Tig) {
    let count = tig.nodes.len();
    for n in 0..count {
        let children = std::mem::take(&mut tig.nodes[n].children);
        if children.is_empty() {
            // Leaves stay whole, except a synthetic root over an empty tree.
            if n == tig.root && tig.nodes[n].value.is_none() && tig.input_len > 0 {
                let iv = tig.nodes[n].interval;
                let g = push_gap(tig, n, iv);
                tig.nodes[n].children = vec![g];
            }
            continue;
        }
        let iv = tig.nodes[n].interval;
        let mut filled = Vec::with_capacity(children.len() + 2);
        let mut pos = iv.start;
        for c in children {
            let civ = tig.nodes[c].interval;
            if civ.start > pos {
                filled.push(push_gap(tig, n, ByteInterval::new(pos, civ.start)));
            }
            filled.push(c);
            pos = civ.end;
        }
        if pos < iv.end {
            filled.push(push_gap(tig, n, ByteInterval::new(pos, iv.end)));
        }
        tig.nodes[n].children = filled;
    }
}

fn push_gap(tig: &mut Tig, parent: usize, iv: ByteInterval) -> usize {
    let v = tig.values.len();
    tig.values.push(Value { interval: iv, uses: Vec::new() });
    let id = tig.nodes.len();
    tig.nodes.push(TigNode { interval: iv, value: Some(v), field: None, gap: true, children: vec![], parent: Some(parent) });
    id
}

impl Tig {
    pub fn is_leaf(&self, n: usize) -> bool {
        self.nodes[n].children.is_empty()
    }

    /// Labels every node with its field. Gap nodes get synthetic fields keyed
    /// by the parent's field and the preceding sibling's field, appended to
    /// `fields`.
    pub fn assign_fields(&mut self, fields: &mut Vec<Field>) {
        let mut field_of_value: HashMap<usize, usize> = HashMap::new();
        for (fi, f) in fields.iter().enumerate() {
            for &v in &f.values {
                field_of_value.insert(v, fi);
            }
        }
        for n in &mut self.nodes {
            if !n.gap {
                n.field = n.value.and_then(|v| field_of_value.get(&v).copied());
            }
        }
        let mut gap_fields: HashMap<(Option<usize>, Option<usize>), usize> = HashMap::new();
        for n in self.preorder() {
            if !self.nodes[n].gap {
                continue;
            }
            let parent = self.nodes[n].parent.expect("gap has parent");
            let siblings = &self.nodes[parent].children;
            let pos = siblings.iter().position(|&c| c == n).unwrap();
            let prev = if pos > 0 { self.nodes[siblings[pos - 1]].field } else { None };
            let key = (self.nodes[parent].field, prev);
            let fi = *gap_fields.entry(key).or_insert_with(|| {
                fields.push(Field { id: fields.len(), si: Vec::new(), values: Vec::new(), gap: true });
                fields.len() - 1
            });
            fields[fi].values.push(self.nodes[n].value.unwrap());
            self.nodes[n].field = Some(fi);
        }
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev().copied());
        }
        out
    }

    /// Every internal node is exactly tiled by its children.
    pub fn check_tiling(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.children.is_empty() {
                continue;
            }
            let mut pos = n.interval.start;
            for &c in &n.children {
                let civ = self.nodes[c].interval;
                if civ.start != pos || civ.end <= civ.start {
                    return Err(format!("node {i} {} children break at {pos}", n.interval));
                }
                pos = civ.end;
            }
            if pos != n.interval.end {
                return Err(format!("node {i} {} children end at {pos}", n.interval));
            }
        }
        Ok(())
    }

    pub fn check_frontier(&self, f: &Frontier) -> Result<(), String> {
        let mut pos = 0u32;
        for &n in &f.nodes {
            let iv = self.nodes[n].interval;
            if iv.start != pos {
                return Err(format!("frontier breaks at {pos}, next node starts at {}", iv.start));
            }
            pos = iv.end;
        }
        if pos as usize != self.input_len {
            return Err(format!("frontier ends at {pos} of {}", self.input_len));
        }
        Ok(())
    }

    pub fn to_dot(&self, label: &dyn Fn(usize) -> String) -> String {
        let mut out = String::from("digraph tig {\n  node [shape=box];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let name = if n.gap {
                format!("GAP {}", label(i))
            } else {
                label(i)
            };
            let _ = writeln!(out, "  n{i} [label=\"{name} {}\"];", n.interval);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                let _ = writeln!(out, "  n{i} -> n{c};");
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frontier {
    pub nodes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FrontierKey {
    Root,
    Key(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrontierMap {
    pub entries: BTreeMap<FrontierKey, Vec<Frontier>>,
}

struct FrontierCtx<'a> {
    tig: &'a Tig,
    key: Vec<usize>,
    repeats_here: Vec<bool>,
    has_rep: Vec<bool>,
}

impl FrontierCtx<'_> {
    fn top(&self, n: usize, out: &mut Vec<usize>) {
        let node = &self.tig.nodes[n];
        if node.children.is_empty() {
            out.push(n);
        } else if self.repeats_here[n] {
            out.extend(node.children.iter().copied());
        } else {
            for &c in &node.children {
                if self.has_rep[c] {
                    self.top(c, out);
                } else {
                    out.push(c);
                }
            }
        }
    }

    fn expand(&self, n: usize, key: usize, out: &mut Vec<usize>) {
        if self.key[n] == key && !self.tig.is_leaf(n) {
            let mut inner = Vec::new();
            self.top(n, &mut inner);
            for m in inner {
                self.expand(m, key, out);
            }
        } else {
            out.push(n);
        }
    }
}

/// Frontiers at every repetition level; `key_of` maps a node to its SI
/// (or New_SI class) identity. Synthetic roots should map to a unique key.
pub fn frontiers(tig: &Tig, key_of: &dyn Fn(usize) -> usize) -> FrontierMap {
    let n = tig.nodes.len();
    let key: Vec<usize> = (0..n).map(key_of).collect();
    let mut repeats_here = vec![false; n];
    let mut has_rep = vec![false; n];
    let mut repeating_keys: Vec<usize> = Vec::new();
    for &i in tig.preorder().iter().rev() {
        let children = &tig.nodes[i].children;
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &c in children {
            *counts.entry(key[c]).or_default() += 1;
        }
        let mut rep_keys: Vec<usize> = children
            .iter()
            .map(|&c| key[c])
            .filter(|k| counts[k] >= 2)
            .collect();
        rep_keys.dedup();
        repeats_here[i] = !rep_keys.is_empty();
        has_rep[i] = repeats_here[i] || children.iter().any(|&c| has_rep[c]);
        for k in rep_keys {
            if !repeating_keys.contains(&k) {
                repeating_keys.push(k);
            }
        }
    }
    let ctx = FrontierCtx { tig, key, repeats_here, has_rep };
    let mut top = Vec::new();
    ctx.top(tig.root, &mut top);
    let mut entries = BTreeMap::new();
    for &k in &repeating_keys {
        let mut nodes = Vec::new();
        for &m in &top {
            ctx.expand(m, k, &mut nodes);
        }
        entries.insert(FrontierKey::Key(k), vec![Frontier { nodes }]);
    }
    entries.insert(FrontierKey::Root, vec![Frontier { nodes: top }]);
    FrontierMap { entries }
}

/// The topmost frontier exposing repetition (the root-keyed entry).
pub fn select_frontier(map: &FrontierMap) -> Frontier {
    map.entries
        .get(&FrontierKey::Root)
        .and_then(|v| v.first())
        .cloned()
        .expect("frontier map has a root entry")
}
