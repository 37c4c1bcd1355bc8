mod common;

use common::check_run;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taintgram::generator::{generate, GenConfig};
use taintgram::pipeline::{end_to_end, PipelineConfig};
use taintgram::programs::{self, Fixture};
use taintgram::vm::{trace, VmConfig};

fn fixtures() -> Vec<Fixture> {
    let mut all = programs::suite();
    all.push(Fixture { name: "sum_csv", source: programs::SUM_CSV, witness: programs::SUM_CSV_INPUT.to_vec() });
    all.push(Fixture { name: "bmp", source: programs::BMP, witness: programs::bmp_input() });
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutated_witnesses_trace_soundly(which in 0usize..11, edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 0..4)) {
        let f = &fixtures()[which];
        let mut input = f.witness.clone();
        for (at, b) in edits {
            let i = at.index(input.len());
            input[i] = b;
        }
        if let Err(e) = check_run(&f.program(), &input) {
            prop_assert!(false, "{}: {}", f.name, e);
        }
    }

    #[test]
    fn truncated_witnesses_trace_soundly(which in 0usize..11, cut in any::<prop::sample::Index>()) {
        let f = &fixtures()[which];
        let input = &f.witness[..cut.index(f.witness.len() + 1)];
        if let Err(e) = check_run(&f.program(), input) {
            prop_assert!(false, "{}: {}", f.name, e);
        }
    }
}

#[test]
fn generated_inputs_trace_soundly() {
    let config = PipelineConfig::default();
    for f in fixtures() {
        let prog = f.program();
        let a = end_to_end(&prog, &f.witness, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = generate(&a.doc, &GenConfig::default(), &mut rng).unwrap();
            check_run(&prog, &g.bytes).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        }
    }
}

#[test]
fn running_example_usage_sets() {
    let prog = programs::load(programs::SUM_CSV);
    let (t, out) = trace(&prog, programs::SUM_CSV_INPUT, &VmConfig::default());
    assert!(out.status.accepted());
    let mut users: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); 10];
    for tuple in t.iter() {
        for iv in tuple.taints {
            for b in iv.start..iv.end {
                users[b as usize].insert(t.names.name(tuple.addr).to_string());
            }
        }
    }
    let first: Vec<&str> = users[0].iter().map(|s| s.as_str()).collect();
    assert_eq!(first, ["I2", "I3", "I4", "I6", "I8"]);
    assert!(t.iter().all(|x| x.taints.iter().all(|iv| iv.len() == 1)));
}
