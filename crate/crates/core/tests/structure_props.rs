mod common;

use common::{brute_square, check_folding, doc_text};
use proptest::prelude::*;
use taintgram::structure::{
    find_square, flatten_instances, isomorphic, matches_sequence, parse_grammar, render, sequence_to_structure,
};

fn sequence(alphabet: usize, max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..alphabet, 1..=max_len)
}

fn any_sequence() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=8, 1usize..=64).prop_flat_map(|(a, n)| sequence(a, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn language_contains_source(seq in any_sequence()) {
        let doc = sequence_to_structure(&seq);
        prop_assert!(matches_sequence(&doc, &seq));
        prop_assert_eq!(flatten_instances(&doc), seq);
    }

    #[test]
    fn square_search_matches_brute_force(seq in sequence(4, 16)) {
        prop_assert_eq!(find_square(&seq), brute_square(&seq));
    }

    #[test]
    fn folding_matches_reference(seq in (1usize..=8).prop_flat_map(|a| sequence(a, 16))) {
        let doc = sequence_to_structure(&seq);
        if let Err(e) = check_folding(&seq, &doc) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn rendering_reparses(seq in any_sequence()) {
        let doc = sequence_to_structure(&seq);
        let back = parse_grammar(&render(&doc)).unwrap();
        prop_assert!(isomorphic(&doc, &back));
    }

    #[test]
    fn repeated_block_folds_to_one_array(block in prop::collection::btree_set(0usize..8, 1..5), k in 2usize..5, extra in 1usize..6) {
        let block: Vec<usize> = block.into_iter().collect();
        let seq: Vec<usize> = block.iter().copied().cycle().take(block.len() * k).collect();
        let doc = sequence_to_structure(&seq);
        let inner = if block.len() == 1 { format!("F{}", block[0]) } else {
            format!("({})", block.iter().map(|f| format!("F{f}")).collect::<Vec<_>>().join(" "))
        };
        prop_assert_eq!(doc_text(&doc, doc.root), format!("[{inner}]"));
        let longer: Vec<usize> = block.iter().copied().cycle().take(block.len() * extra).collect();
        prop_assert!(matches_sequence(&doc, &longer));
    }
}

#[test]
fn running_example_spills_last_element() {
    let doc = sequence_to_structure(&[0, 1, 2, 3, 2, 3, 2, 3, 2, 4]);
    assert_eq!(doc_text(&doc, doc.root), "(F0 F1 [(F2 F3)] F2 F4)");
    assert_eq!(doc.spills, vec!["A0".to_string()]);
}

#[test]
fn heterogeneous_repeats_become_variants() {
    let seq = [0, 1, 0, 2, 3, 0, 1];
    let doc = sequence_to_structure(&seq);
    assert!(common::has_options(&doc));
    assert!(matches_sequence(&doc, &seq));
    assert_eq!(check_folding(&seq, &doc), Ok(false));
}
