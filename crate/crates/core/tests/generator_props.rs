use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use taintgram::generator::{generate, strip, GenConfig};
use taintgram::pipeline::{end_to_end, PipelineConfig};
use taintgram::programs;
use taintgram::semantics::{evaluate, FieldView, Model};
use taintgram::structure::{matches_sequence, StructureDoc};
use taintgram::tokens::token_matches;

fn docs() -> &'static Vec<(&'static str, StructureDoc)> {
    static DOCS: OnceLock<Vec<(&'static str, StructureDoc)>> = OnceLock::new();
    DOCS.get_or_init(|| {
        programs::suite()
            .into_iter()
            .map(|f| (f.name, end_to_end(&f.program(), &f.witness, &PipelineConfig::default()).unwrap().doc))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generated_inputs_satisfy_their_doc(which in 0usize..9, seed in any::<u64>()) {
        let (name, doc) = &docs()[which];
        let g = generate(doc, &GenConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(matches_sequence(doc, &g.sequence), "{}", name);
        prop_assert_eq!(g.spans.last().map(|s| s.end as usize), Some(g.bytes.len()));
        for (pos, &f) in g.sequence.iter().enumerate() {
            if !g.committed.contains(&pos) {
                prop_assert!(token_matches(&doc.tokens[&f], &g.bytes[g.spans[pos].range()]), "{} F{}", name, f);
            }
        }
        let mut view_doc = doc.clone();
        view_doc.sequence = g.sequence.clone();
        view_doc.instances = Some(g.tree.clone());
        let model = Model::new(&view_doc, FieldView { input: &g.bytes, spans: &g.spans });
        prop_assert!(evaluate(&model, &doc.relations), "{}", name);
    }

    #[test]
    fn generation_is_deterministic(which in 0usize..9, seed in any::<u64>()) {
        let doc = &docs()[which].1;
        let a = generate(doc, &GenConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = generate(doc, &GenConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.bytes, b.bytes);
    }

    #[test]
    fn stripped_docs_still_generate(which in 0usize..9, seed in any::<u64>()) {
        let doc = strip(&docs()[which].1);
        prop_assert!(doc.relations.is_empty());
        let g = generate(&doc, &GenConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(matches_sequence(&doc, &g.sequence));
    }
}

#[test]
fn array_bounds_are_respected() {
    let config = GenConfig { max_array_count: 3, ..GenConfig::default() };
    let doc = &docs()[1].1;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let g = generate(doc, &config, &mut rng).unwrap();
        let lines = g.bytes.iter().filter(|&&b| b == b'\n').count();
        assert!((1..=3).contains(&lines), "{:?}", String::from_utf8_lossy(&g.bytes));
    }
}
