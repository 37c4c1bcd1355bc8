//! Interprocedural control dependence over basic blocks, field annotation
//! and projection onto annotated nodes.

use crate::trace_model::CfgPackage;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CdgError {
    #[error("function {0} has no exit block")]
    NoExit(String),
    #[error("block {block} of function {function} cannot reach an exit")]
    NoPathToExit { function: String, block: String },
}

/// Control dependence edges `guard -> dependent` over block indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Icdg {
    pub edges: Vec<BTreeSet<usize>>,
}

impl Icdg {
    pub fn guards_of(&self, b: usize) -> BTreeSet<usize> {
        (0..self.edges.len()).filter(|&g| self.edges[g].contains(&b)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(|s| s.len()).sum()
    }

    pub fn to_dot(&self, cfg: &CfgPackage) -> String {
        let mut out = String::from("digraph icdg {\n");
        for (i, b) in cfg.blocks.iter().enumerate() {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", b.id);
        }
        for (g, ds) in self.edges.iter().enumerate() {
            for d in ds {
                let _ = writeln!(out, "  n{g} -> n{d};");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Postdominator sets per function block (virtual exit excluded).
pub fn postdominators(cfg: &CfgPackage, fi: usize) -> Result<BTreeMap<usize, BTreeSet<usize>>, CdgError> {
    let f = &cfg.functions[fi];
    if f.exits.is_empty() {
        return Err(CdgError::NoExit(f.id.clone()));
    }
    let members: BTreeSet<usize> = f.blocks.iter().copied().collect();
    let mut preds: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &b in &f.blocks {
        for &s in &cfg.succs[b] {
            preds.entry(s).or_default().push(b);
        }
    }
    let mut reach: BTreeSet<usize> = f.exits.iter().copied().collect();
    let mut stack: Vec<usize> = f.exits.clone();
    while let Some(b) = stack.pop() {
        for &p in preds.get(&b).into_iter().flatten() {
            if reach.insert(p) {
                stack.push(p);
            }
        }
    }
    for &b in &f.blocks {
        if !reach.contains(&b) {
            return Err(CdgError::NoPathToExit { function: f.id.clone(), block: cfg.blocks[b].id.clone() });
        }
    }
    let exits: BTreeSet<usize> = f.exits.iter().copied().collect();
    let mut pdom: BTreeMap<usize, BTreeSet<usize>> = f.blocks.iter().map(|&b| (b, members.clone())).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &b in f.blocks.iter().rev() {
            let mut acc: Option<BTreeSet<usize>> = if exits.contains(&b) { Some(BTreeSet::new()) } else { None };
            for &s in &cfg.succs[b] {
                let ps = &pdom[&s];
                acc = Some(match acc {
                    None => ps.clone(),
                    Some(a) => a.intersection(ps).copied().collect(),
                });
            }
            let mut new = acc.unwrap_or_default();
            new.insert(b);
            if new != pdom[&b] {
                pdom.insert(b, new);
                changed = true;
            }
        }
    }
    Ok(pdom)
}

/// Intraprocedural dependences for every function, then callee blocks
/// without guards inherit the guards of their call-site blocks.
pub fn compute_icdg(cfg: &CfgPackage) -> Result<Icdg, CdgError> {
    let n = cfg.blocks.len();
    let mut edges = vec![BTreeSet::new(); n];
    for fi in 0..cfg.functions.len() {
        let pdom = postdominators(cfg, fi)?;
        for &a in &cfg.functions[fi].blocks {
            for &s in &cfg.succs[a] {
                for &y in &pdom[&s] {
                    let strictly = y != a && pdom[&a].contains(&y);
                    if !strictly {
                        edges[a].insert(y);
                    }
                }
            }
        }
    }
    let mut has_intra = vec![false; n];
    for ds in &edges {
        for &d in ds {
            has_intra[d] = true;
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for (site, _, callee) in &cfg.calls {
            let guards: Vec<usize> = (0..n).filter(|&g| edges[g].contains(site)).collect();
            for &b in &cfg.functions[*callee].blocks {
                if has_intra[b] {
                    continue;
                }
                for &g in &guards {
                    changed |= edges[g].insert(b);
                }
            }
        }
    }
    Ok(Icdg { edges })
}

/// Fields attached to each block through the instructions in their SIs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotation {
    pub fields: BTreeMap<usize, BTreeSet<usize>>,
    pub unknown: BTreeSet<String>,
}

pub fn annotate<'a>(cfg: &CfgPackage, field_insns: impl IntoIterator<Item = (usize, Vec<&'a str>)>) -> Annotation {
    let mut ann = Annotation::default();
    for (f, insns) in field_insns {
        for i in insns {
            match cfg.block_of(i) {
                Some(b) => {
                    ann.fields.entry(b).or_default().insert(f);
                }
                None => {
                    ann.unknown.insert(i.to_string());
                }
            }
        }
    }
    for u in &ann.unknown {
        log::warn!("instruction {u} is not in the control-flow graph");
    }
    ann
}

/// Dependence between annotated blocks: a path of length at least one in
/// the ICDG, through annotated or unannotated blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProjectedGraph {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
}

pub fn project_graph(icdg: &Icdg, ann: &Annotation) -> ProjectedGraph {
    let nodes: BTreeSet<usize> = ann.fields.keys().copied().collect();
    let mut edges = BTreeSet::new();
    for &g in &nodes {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = icdg.edges[g].iter().copied().collect();
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            if nodes.contains(&x) {
                edges.insert((g, x));
            }
            stack.extend(icdg.edges[x].iter().copied());
        }
    }
    ProjectedGraph { nodes, edges }
}

impl ProjectedGraph {
    pub fn to_dot(&self, cfg: &CfgPackage, ann: &Annotation) -> String {
        let mut out = String::from("digraph projected {\n");
        for &n in &self.nodes {
            let fs: Vec<String> = ann.fields[&n].iter().map(|f| format!("F{f}")).collect();
            let _ = writeln!(out, "  n{n} [label=\"{}\\n{}\"];", cfg.blocks[n].id, fs.join(" "));
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}
