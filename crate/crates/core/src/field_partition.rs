//! Values, fields, source indices and co-occurrence classes.

use crate::trace_model::{ByteInterval, TaintTrace};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

/// One (instruction, calling context) pair, both interned in the trace.
pub type UsePair = (u32, u32);

/// Sorted, duplicate-free set of use pairs.
pub type SourceIndex = Vec<UsePair>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Value {
    pub interval: ByteInterval,
    pub uses: SourceIndex,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub id: usize,
    pub si: SourceIndex,
    /// Indices into the value list, ordered by interval start.
    pub values: Vec<usize>,
    /// Synthetic field standing for bytes no instruction used.
    pub gap: bool,
}

impl Field {
    pub fn label(&self) -> String {
        format!("F{}", self.id)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoverageError {
    #[error("bytes [{0},{1}) are not covered by the frontier")]
    Gap(u32, u32),
    #[error("intervals overlap at byte {0}")]
    Overlap(u32),
}

fn by_start_then_longest(a: &ByteInterval, b: &ByteInterval) -> std::cmp::Ordering {
    a.start.cmp(&b.start).then(b.end.cmp(&a.end))
}

/// Each distinct taint interval becomes a value used by every pair that consumed it.
pub fn extract_values(trace: &TaintTrace) -> Vec<Value> {
    let mut uses: HashMap<ByteInterval, Vec<UsePair>> = HashMap::new();
    for t in trace.iter() {
        for iv in t.taints {
            uses.entry(*iv).or_default().push((t.addr, t.ctx));
        }
    }
    let mut values: Vec<Value> = uses
        .into_iter()
        .map(|(interval, mut u)| {
            u.sort_unstable();
            u.dedup();
            Value { interval, uses: u }
        })
        .collect();
    values.sort_by(|a, b| by_start_then_longest(&a.interval, &b.interval));
    values
}

/// Groups values with set-equal use sets; ids follow first-value order.
pub fn group_fields(values: &[Value]) -> Vec<Field> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| by_start_then_longest(&values[a].interval, &values[b].interval));
    let mut by_si: HashMap<&SourceIndex, usize> = HashMap::new();
    let mut fields: Vec<Field> = Vec::new();
    for &v in &order {
        let si = &values[v].uses;
        let f = *by_si.entry(si).or_insert_with(|| {
            fields.push(Field { id: fields.len(), si: si.clone(), values: Vec::new(), gap: false });
            fields.len() - 1
        });
        if let Some(&prev) = fields[f].values.last() {
            if values[prev].interval.start == values[v].interval.start {
                log::debug!("field F{f} has two values starting at {}", values[v].interval.start);
            }
        }
        fields[f].values.push(v);
    }
    fields
}

/// Field ids of tiling intervals ordered by start; fails on gaps or overlaps.
pub fn field_sequence(items: &[(ByteInterval, usize)], input_len: usize) -> Result<Vec<usize>, CoverageError> {
    let mut sorted: Vec<&(ByteInterval, usize)> = items.iter().collect();
    sorted.sort_by(|a, b| by_start_then_longest(&a.0, &b.0));
    let mut pos = 0u32;
    let mut seq = Vec::with_capacity(sorted.len());
    for (iv, f) in sorted {
        if iv.start > pos {
            return Err(CoverageError::Gap(pos, iv.start));
        }
        if iv.start < pos {
            return Err(CoverageError::Overlap(iv.start));
        }
        pos = iv.end;
        seq.push(*f);
    }
    if (pos as usize) < input_len {
        return Err(CoverageError::Gap(pos, input_len as u32));
    }
    Ok(seq)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Co-occurrence classes and their united source indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewSi {
    /// Class representative (smallest member field) per field.
    pub class: Vec<usize>,
    /// New source index per field.
    pub si: Vec<SourceIndex>,
}

/// Fields sharing a use pair co-occur; co-occurrence is closed transitively.
pub fn compute_new_si(fields: &[Field]) -> NewSi {
    let mut uf = UnionFind::new(fields.len());
    let mut owner: HashMap<UsePair, usize> = HashMap::new();
    for (i, f) in fields.iter().enumerate() {
        for p in &f.si {
            match owner.get(p) {
                Some(&j) => uf.union(i, j),
                None => {
                    owner.insert(*p, i);
                }
            }
        }
    }
    let class: Vec<usize> = (0..fields.len()).map(|i| uf.find(i)).collect();
    let mut united: HashMap<usize, SourceIndex> = HashMap::new();
    for (i, f) in fields.iter().enumerate() {
        united.entry(class[i]).or_default().extend(f.si.iter().copied());
    }
    for si in united.values_mut() {
        si.sort_unstable();
        si.dedup();
    }
    let si = (0..fields.len()).map(|i| united[&class[i]].clone()).collect();
    NewSi { class, si }
}

/// Text table of fields for inspection.
pub fn fields_table(fields: &[Field], values: &[Value], input: &[u8]) -> String {
    let mut out = String::from("id\tvalues\tsi\tfirst\tpreview\n");
    for f in fields {
        let first = values[f.values[0]].interval;
        let bytes = &input[first.range()];
        let preview: String = bytes
            .iter()
            .take(16)
            .map(|&b| if (0x21..0x7f).contains(&b) { (b as char).to_string() } else { format!("\\x{b:02x}") })
            .collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}{}",
            f.label(),
            f.values.len(),
            if f.gap { "gap".to_string() } else { f.si.len().to_string() },
            first,
            preview,
            if bytes.len() > 16 { "..." } else { "" }
        );
    }
    out
}
