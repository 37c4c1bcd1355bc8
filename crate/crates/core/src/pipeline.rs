//! End-to-end analysis: trace → fields → structure → dependences → relations.

use crate::cdg::{annotate, compute_icdg, project_graph, Annotation, CdgError, Icdg, ProjectedGraph};
use crate::generator::GenConfig;
use crate::field_partition::{compute_new_si, extract_values, group_fields, Field, NewSi};
use crate::semantics::{attach, mine_relations, semantic_dependences, FieldView, MineConfig, Model, SemanticDependence};
use crate::structure::{repair_array_boundaries, sequence_to_structure, StructureDoc};
use crate::tig::{build_tig, frontiers, select_frontier, Frontier, FrontierMap, Tig};
use crate::tokens::infer_token;
use crate::trace_model::{ByteInterval, CfgPackage, TaintTrace};
use crate::vm::{self, Program, Status, VmConfig};
use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("program did not accept the input: {0:?}")]
    NotAccepted(Status),
    #[error("trace is empty")]
    EmptyTrace,
    #[error(transparent)]
    Cdg(#[from] CdgError),
    #[error("{0}")]
    Internal(String),
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// Relabel outliers next to arrays using co-occurrence classes.
    pub use_new_si_repair: bool,
    pub exhaustive_fallback: bool,
    pub vm: VmConfig,
    pub gen: GenConfig,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig { use_new_si_repair: true, exhaustive_fallback: true, vm: VmConfig::default(), gen: GenConfig::default() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct StageTimer {
    pub stages: Vec<(String, Duration)>,
}

impl StageTimer {
    pub fn time<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.add(name, start.elapsed());
        r
    }

    pub fn add(&mut self, name: &str, d: Duration) {
        match self.stages.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1 += d,
            None => self.stages.push((name.to_string(), d)),
        }
    }

    pub fn get(&self, name: &str) -> Duration {
        self.stages.iter().find(|s| s.0 == name).map_or(Duration::ZERO, |s| s.1)
    }

    pub fn total(&self) -> Duration {
        self.stages.iter().map(|s| s.1).sum()
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        for (name, d) in &self.stages {
            out.push_str(&format!("{name:<12} {:>10.3} ms\n", d.as_secs_f64() * 1e3));
        }
        out
    }
}

pub struct Analysis {
    pub trace: TaintTrace,
    pub cfg: CfgPackage,
    pub tig: Tig,
    pub fields: Vec<Field>,
    pub new_si: NewSi,
    pub frontiers: FrontierMap,
    pub frontier: Frontier,
    /// Byte span of every sequence position.
    pub spans: Vec<ByteInterval>,
    pub doc: StructureDoc,
    /// Instruction addresses behind each structure field.
    pub field_addrs: BTreeMap<usize, BTreeSet<u32>>,
    pub icdg: Icdg,
    pub annotation: Annotation,
    pub projected: ProjectedGraph,
    pub dependences: Vec<SemanticDependence>,
    pub timer: StageTimer,
}

impl Analysis {
    pub fn grammar(&self) -> String {
        crate::structure::render(&self.doc)
    }

    pub fn view(&self) -> FieldView<'_> {
        FieldView { input: &self.trace.input, spans: &self.spans }
    }
}

/// Partitioned trace: containment tree, renumbered fields and the frontier.
pub struct Partition {
    pub tig: Tig,
    pub fields: Vec<Field>,
    pub new_si: NewSi,
    pub frontiers: FrontierMap,
    pub frontier: Frontier,
    pub sequence: Vec<usize>,
    pub spans: Vec<ByteInterval>,
}

/// Fields on the chosen frontier are numbered first, in order of
/// appearance; the remaining fields keep their relative order.
pub fn partition(trace: &TaintTrace) -> Result<Partition, PipelineError> {
    if trace.is_empty() {
        return Err(PipelineError::EmptyTrace);
    }
    let values = extract_values(trace);
    let mut tig = build_tig(&values, trace.input_len());
    let real = tig.values.iter().take_while(|v| !v.uses.is_empty()).count();
    let mut fields = group_fields(&tig.values[..real]);
    tig.assign_fields(&mut fields);
    let key = |n: usize| tig.nodes[n].field.unwrap_or(usize::MAX);
    let map = frontiers(&tig, &key);
    let frontier = select_frontier(&map);
    tig.check_frontier(&frontier).map_err(PipelineError::Internal)?;

    let mut order: Vec<usize> = Vec::new();
    let mut seen = vec![false; fields.len()];
    for &n in &frontier.nodes {
        let f = tig.nodes[n].field.expect("frontier nodes carry fields");
        if !seen[f] {
            seen[f] = true;
            order.push(f);
        }
    }
    order.extend((0..fields.len()).filter(|&f| !seen[f]));
    let mut new_id = vec![0usize; fields.len()];
    for (i, &f) in order.iter().enumerate() {
        new_id[f] = i;
    }
    let mut renumbered: Vec<Field> = order.iter().map(|&f| fields[f].clone()).collect();
    for (i, f) in renumbered.iter_mut().enumerate() {
        f.id = i;
    }
    for node in &mut tig.nodes {
        node.field = node.field.map(|f| new_id[f]);
    }
    let remap = |m: FrontierMap| FrontierMap {
        entries: m
            .entries
            .into_iter()
            .map(|(k, v)| match k {
                crate::tig::FrontierKey::Key(f) if f < new_id.len() => (crate::tig::FrontierKey::Key(new_id[f]), v),
                other => (other, v),
            })
            .collect(),
    };
    let frontiers = remap(map);
    let new_si = compute_new_si(&renumbered);
    let sequence: Vec<usize> = frontier.nodes.iter().map(|&n| tig.nodes[n].field.unwrap()).collect();
    let spans: Vec<ByteInterval> = frontier.nodes.iter().map(|&n| tig.nodes[n].interval).collect();
    Ok(Partition { tig, fields: renumbered, new_si, frontiers, frontier, sequence, spans })
}

/// Addresses of raw fields whose values lie inside, or contain, the
/// frontier occurrences of each structure field.
fn effective_addrs(p: &Partition, doc: &StructureDoc) -> BTreeMap<usize, BTreeSet<u32>> {
    let mut out: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for (pos, &n) in p.frontier.nodes.iter().enumerate() {
        let f = doc.sequence[pos];
        let entry = out.entry(f).or_default();
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            if let Some(raw) = p.tig.nodes[m].field {
                entry.extend(p.fields[raw].si.iter().map(|u| u.0));
            }
            stack.extend(p.tig.nodes[m].children.iter().copied());
        }
        let mut cur = p.tig.nodes[n].parent;
        while let Some(a) = cur {
            if let Some(raw) = p.tig.nodes[a].field {
                entry.extend(p.fields[raw].si.iter().map(|u| u.0));
            }
            cur = p.tig.nodes[a].parent;
        }
    }
    out
}

pub fn analyze(trace: TaintTrace, cfg: CfgPackage, config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let mut timer = StageTimer::default();
    analyze_timed(trace, cfg, config, &mut timer)
}

fn analyze_timed(trace: TaintTrace, cfg: CfgPackage, config: &PipelineConfig, timer: &mut StageTimer) -> Result<Analysis, PipelineError> {
    let part = timer.time("partition", || partition(&trace))?;
    let doc = timer.time("structure", || -> Result<StructureDoc, PipelineError> {
        let mut doc = sequence_to_structure(&part.sequence);
        if config.use_new_si_repair {
            let si: Vec<_> = part.fields.iter().map(|f| f.si.clone()).collect();
            doc = repair_array_boundaries(&doc, &si, &part.new_si.class);
        }
        let mut occurrences: BTreeMap<usize, Vec<&[u8]>> = BTreeMap::new();
        for (pos, &f) in doc.sequence.iter().enumerate() {
            occurrences.entry(f).or_default().push(&trace.input[part.spans[pos].range()]);
        }
        for (f, vals) in occurrences {
            let token = infer_token(&vals).map_err(|e| PipelineError::Internal(format!("token for F{f}: {e}")))?;
            doc.tokens.insert(f, token);
        }
        Ok(doc)
    })?;
    let field_addrs = effective_addrs(&part, &doc);
    let (icdg, annotation, projected, dependences) = timer.time("dependence", || -> Result<_, PipelineError> {
        let icdg = compute_icdg(&cfg)?;
        let named: Vec<(usize, Vec<&str>)> = field_addrs
            .iter()
            .map(|(&f, addrs)| (f, addrs.iter().map(|&a| trace.names.name(a)).collect()))
            .collect();
        let annotation = annotate(&cfg, named);
        let projected = project_graph(&icdg, &annotation);
        let deps = semantic_dependences(&projected, &annotation, &doc);
        Ok((icdg, annotation, projected, deps))
    })?;
    let doc = timer.time("relations", || -> Result<StructureDoc, PipelineError> {
        let view = FieldView { input: &trace.input, spans: &part.spans };
        let model = Model::new(&doc, view);
        let rels = mine_relations(&dependences, &model, &field_addrs, &MineConfig { exhaustive_fallback: config.exhaustive_fallback });
        attach(&doc, &rels).map_err(|e| PipelineError::Internal(e.to_string()))
    })?;
    Ok(Analysis {
        trace,
        cfg,
        tig: part.tig,
        fields: part.fields,
        new_si: part.new_si,
        frontiers: part.frontiers,
        frontier: part.frontier,
        spans: part.spans,
        doc,
        field_addrs,
        icdg,
        annotation,
        projected,
        dependences,
        timer: std::mem::take(timer),
    })
}

/// Traces the program on the input and analyzes the result. Tracing is
/// timed as part of partitioning.
pub fn end_to_end(prog: &Program, input: &[u8], config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let mut timer = StageTimer::default();
    let (trace, outcome) = timer.time("partition", || vm::trace(prog, input, &config.vm));
    if !outcome.status.accepted() {
        return Err(PipelineError::NotAccepted(outcome.status));
    }
    let cfg = prog.cfg();
    analyze_timed(trace, cfg, config, &mut timer)
}
