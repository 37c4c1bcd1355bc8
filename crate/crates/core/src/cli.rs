//! Command-line driver. Every stage reads and writes plain files so stages
//! can be run and inspected one at a time.

use crate::field_partition::fields_table;
use crate::generator::{self, AcceptanceReport, GenConfig};
use crate::pipeline::{self, PipelineConfig};
use crate::programs::Fixture;
use crate::structure::{parse_grammar, render, sequence_to_structure, StructureDoc};
use crate::trace_model::{load_cfg, load_trace};
use crate::vm::{self, assemble, Program};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "taintgram", version, about = "Input structure and relation recovery from taint traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Toggles {
    /// Skip relabelling of array-adjacent outliers.
    #[arg(long)]
    pub no_repair: bool,
    /// Do not search all fields when a node has no dependence.
    #[arg(long)]
    pub no_fallback: bool,
}

impl Toggles {
    fn config(&self) -> PipelineConfig {
        PipelineConfig { use_new_si_repair: !self.no_repair, exhaustive_fallback: !self.no_fallback, ..Default::default() }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long, default_value_t = 16)]
    pub max_array_count: u64,
    #[arg(long, default_value_t = 64)]
    pub max_varlen_size: usize,
}

impl GenArgs {
    fn config(&self) -> GenConfig {
        GenConfig { max_array_count: self.max_array_count, max_varlen_size: self.max_varlen_size, ..Default::default() }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a program on an input and write the taint trace and CFG.
    Trace {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cfg: Option<PathBuf>,
    },
    /// List the fields of a trace.
    Fields {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Print the interval containment tree of a trace.
    Tig {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Fold the field sequence of a trace into a structure (no relations).
    Structure {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        toggles: Toggles,
    },
    /// Print the interprocedural control dependence graph of a CFG.
    Icdg {
        #[arg(long)]
        cfg: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Full analysis: grammar text on stdout or to --grammar, AST to --ast.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        cfg: PathBuf,
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        ast: Option<PathBuf>,
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        toggles: Toggles,
    },
    /// Generate inputs from a grammar file.
    Generate {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stripped: bool,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Generate inputs from a grammar and count how many the program accepts.
    Accept {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stripped: bool,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Analyze every bundled fixture and measure acceptance.
    Suite {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write each fixture's program, witness and grammar here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        toggles: Toggles,
    },
}

fn read_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    assemble(&text).with_context(|| format!("assembling {}", path.display()))
}

fn read_grammar(path: &Path) -> Result<StructureDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_grammar(&text).with_context(|| format!("parsing {}", path.display()))
}

fn report_line(name: &str, r: &AcceptanceReport) -> String {
    let ratio = r.ratio().map_or("n/a".to_string(), |x| format!("{:.1}%", x * 100.0));
    format!(
        "{name:<22} generated {:>5}  accepted {:>5}  rejected {:>5}  trapped {:>3}  errors {:>3}  ratio {ratio}",
        r.generated, r.accepted, r.rejected, r.trapped, r.errors
    )
}

/// Outcome of running one fixture through analysis and generation.
pub struct FixtureRun {
    pub analysis: pipeline::Analysis,
    pub report: AcceptanceReport,
    pub stripped: AcceptanceReport,
}

/// Traces the witness, analyzes it, then generates `samples` inputs with and
/// without relations and runs them through the program.
pub fn end_to_end(fixture: &Fixture, samples: usize, seed: u64, config: &PipelineConfig) -> Result<FixtureRun> {
    let prog = fixture.program();
    let analysis = pipeline::end_to_end(&prog, &fixture.witness, config).with_context(|| format!("analyzing {}", fixture.name))?;
    let report = generator::acceptance(&prog, &analysis.doc, samples, seed, &config.gen, &config.vm);
    let stripped = generator::acceptance(&prog, &generator::strip(&analysis.doc), samples, seed, &config.gen, &config.vm);
    Ok(FixtureRun { analysis, report, stripped })
}

pub fn main() -> Result<()> {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trace { program, input, out, cfg } => {
            let prog = read_program(&program)?;
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let (trace, outcome) = vm::trace(&prog, &bytes, &vm::VmConfig::default());
            fs::write(&out, trace.to_json()).with_context(|| format!("writing {}", out.display()))?;
            if let Some(c) = cfg {
                fs::write(&c, prog.cfg().to_json()).with_context(|| format!("writing {}", c.display()))?;
            }
            println!("{:?} after {} steps, {} tuples", outcome.status, outcome.steps, trace.len());
        }
        Command::Fields { trace } => {
            let t = load_trace(&trace).context("loading trace")?;
            let p = pipeline::partition(&t).context("partition")?;
            print!("{}", fields_table(&p.fields, &p.tig.values, &t.input));
        }
        Command::Tig { trace, dot } => {
            let t = load_trace(&trace).context("loading trace")?;
            let p = pipeline::partition(&t).context("partition")?;
            let label = |n: usize| {
                let node = &p.tig.nodes[n];
                let f = node.field.map_or("root".to_string(), |f| format!("F{f}"));
                format!("{f} {}", node.interval)
            };
            if dot {
                print!("{}", p.tig.to_dot(&label));
            } else {
                for n in p.tig.preorder() {
                    let mut depth = 0;
                    let mut cur = p.tig.nodes[n].parent;
                    while let Some(c) = cur {
                        depth += 1;
                        cur = p.tig.nodes[c].parent;
                    }
                    println!("{}{}", "  ".repeat(depth), label(n));
                }
            }
        }
        Command::Structure { trace, json, toggles } => {
            let t = load_trace(&trace).context("loading trace")?;
            let p = pipeline::partition(&t).context("partition")?;
            let mut doc = sequence_to_structure(&p.sequence);
            if toggles.config().use_new_si_repair {
                let si: Vec<_> = p.fields.iter().map(|f| f.si.clone()).collect();
                doc = crate::structure::repair_array_boundaries(&doc, &si, &p.new_si.class);
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&doc)?);
            } else {
                print!("{}", render(&doc));
            }
        }
        Command::Icdg { cfg, dot } => {
            let c = load_cfg(&cfg).context("loading cfg")?;
            let g = crate::cdg::compute_icdg(&c).context("icdg")?;
            if dot {
                print!("{}", g.to_dot(&c));
            } else {
                for (a, ds) in g.edges.iter().enumerate() {
                    for &d in ds {
                        println!("{} -> {}", c.blocks[a].id, c.blocks[d].id);
                    }
                }
            }
        }
        Command::Analyze { trace, cfg, grammar, ast, timings, toggles } => {
            let t = load_trace(&trace).context("loading trace")?;
            let c = load_cfg(&cfg).context("loading cfg")?;
            let a = pipeline::analyze(t, c, &toggles.config())?;
            let text = a.grammar();
            match grammar {
                Some(g) => fs::write(&g, &text).with_context(|| format!("writing {}", g.display()))?,
                None => print!("{text}"),
            }
            if let Some(p) = ast {
                fs::write(&p, serde_json::to_string_pretty(&a.doc)?).with_context(|| format!("writing {}", p.display()))?;
            }
            if timings {
                eprint!("{}", a.timer.report());
            }
        }
        Command::Generate { grammar, n, seed, out, stripped, gen } => {
            let mut doc = read_grammar(&grammar)?;
            if stripped {
                doc = generator::strip(&doc);
            }
            fs::create_dir_all(&out)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut written = 0;
            for i in 0..n {
                match generator::generate(&doc, &gen.config(), &mut rng) {
                    Ok(g) => {
                        fs::write(out.join(format!("input_{i:05}.bin")), &g.bytes)?;
                        written += 1;
                    }
                    Err(e) => log::warn!("sample {i}: {e}"),
                }
            }
            println!("wrote {written} of {n} inputs to {}", out.display());
        }
        Command::Accept { program, grammar, n, seed, stripped, gen } => {
            let prog = read_program(&program)?;
            let mut doc = read_grammar(&grammar)?;
            if stripped {
                doc = generator::strip(&doc);
            }
            let r = generator::acceptance(&prog, &doc, n, seed, &gen.config(), &vm::VmConfig::default());
            println!("{}", report_line(&program.display().to_string(), &r));
            if let Some(e) = &r.first_error {
                println!("first generation error: {e}");
            }
        }
        Command::Suite { samples, seed, out, toggles } => {
            let config = toggles.config();
            let start = Instant::now();
            let mut failed = false;
            for f in crate::programs::suite() {
                let run = end_to_end(&f, samples, seed, &config)?;
                println!("{}", report_line(f.name, &run.report));
                println!("{}", report_line("  (no relations)", &run.stripped));
                failed |= run.report.accepted != samples;
                if let Some(dir) = &out {
                    let d = dir.join(f.name);
                    fs::create_dir_all(&d)?;
                    fs::write(d.join("program.tasm"), f.source)?;
                    fs::write(d.join("witness.bin"), &f.witness)?;
                    fs::write(d.join("grammar.txt"), run.analysis.grammar())?;
                }
            }
            println!("total {:.2} s", start.elapsed().as_secs_f64());
            if failed {
                bail!("some fixture fell short of full acceptance");
            }
        }
    }
    Ok(())
}
