mod common;

use common::{guards_from_edges, icdg_oracle, random_cfg};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taintgram::cdg::{compute_icdg, postdominators};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn icdg_matches_path_oracle(seed in any::<u64>(), max_blocks in 1usize..=12) {
        let cfg = random_cfg(&mut ChaCha8Rng::seed_from_u64(seed), max_blocks);
        let icdg = compute_icdg(&cfg).unwrap();
        prop_assert_eq!(guards_from_edges(&icdg.edges), icdg_oracle(&cfg));
    }

    #[test]
    fn postdominators_match_removal_reachability(seed in any::<u64>()) {
        let cfg = random_cfg(&mut ChaCha8Rng::seed_from_u64(seed), 12);
        for fi in 0..cfg.functions.len() {
            let pdom = postdominators(&cfg, fi).unwrap();
            for &z in &cfg.functions[fi].blocks {
                for &y in &cfg.functions[fi].blocks {
                    prop_assert_eq!(pdom[&z].contains(&y), common::postdominates(&cfg, fi, y, z));
                }
            }
        }
    }
}

#[test]
fn loop_header_depends_on_itself() {
    let doc: taintgram::trace_model::CfgDoc = serde_json::from_str(
        r#"{"functions":[{"id":"f","entry":"a"}],
            "blocks":[{"id":"a","insns":["1"]},{"id":"b","insns":["2"]},{"id":"c","insns":["3"]}],
            "edges":[["a","b"],["b","a"],["a","c"]],
            "calls":[],"exits":{"f":["c"]}}"#,
    )
    .unwrap();
    let cfg = taintgram::trace_model::CfgPackage::from_doc(&doc).unwrap();
    let icdg = compute_icdg(&cfg).unwrap();
    assert_eq!(icdg.guards_of(0), [0].into_iter().collect());
    assert_eq!(icdg.guards_of(1), [0].into_iter().collect());
    assert!(icdg.guards_of(2).is_empty());
    assert_eq!(guards_from_edges(&icdg.edges), icdg_oracle(&cfg));
}
