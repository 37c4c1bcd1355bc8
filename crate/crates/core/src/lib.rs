//! Input structure and semantic relation recovery from dynamic taint traces.
//!
//! The pipeline runs in stages: a taint trace is partitioned into fields,
//! the fields are arranged into a containment tree whose frontier yields a
//! field sequence, the sequence is folded into a structure, control
//! dependences between blocks using fields become semantic dependences, and
//! relations mined from those are attached to the structure. The result can
//! be rendered as a grammar and used to generate new inputs.

pub mod cdg;
pub mod cli;
pub mod field_partition;
pub mod generator;
pub mod pipeline;
pub mod programs;
pub mod semantics;
pub mod structure;
pub mod tig;
pub mod tokens;
pub mod trace_model;
pub mod vm;
