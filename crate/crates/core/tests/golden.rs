use taintgram::pipeline::{end_to_end, Analysis, PipelineConfig};
use taintgram::programs;
use taintgram::semantics::{violations, Model};
use taintgram::structure::{parse_grammar, render};

fn analyze(source: &str, input: &[u8]) -> Analysis {
    end_to_end(&programs::load(source), input, &PipelineConfig::default()).unwrap()
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[test]
fn running_example_grammar() {
    let a = analyze(programs::SUM_CSV, programs::SUM_CSV_INPUT);
    assert_eq!(squash(&a.grammar()), squash(include_str!("golden/sum_csv.grammar")));
    assert_eq!(a.doc.sequence, [0, 1, 2, 3, 2, 3, 2, 3, 2, 4]);
    let values: Vec<Vec<&[u8]>> = (0..5)
        .map(|f| {
            a.doc.sequence.iter().enumerate().filter(|&(_, &x)| x == f).map(|(i, _)| &a.trace.input[a.spans[i].range()]).collect()
        })
        .collect();
    assert_eq!(values[0], [b"4"]);
    assert_eq!(values[2], [b"3", b"2", b"5", b"8"]);
    assert_eq!(values[4], [b"\n"]);
}

#[test]
fn bmp_grammar() {
    let a = analyze(programs::BMP, &programs::bmp_input());
    assert_eq!(squash(&a.grammar()), squash(include_str!("golden/bmp.grammar")));
}

#[test]
fn goldens_parse_back() {
    for text in [include_str!("golden/sum_csv.grammar"), include_str!("golden/bmp.grammar")] {
        let doc = parse_grammar(text).unwrap();
        assert_eq!(squash(&render(&doc)), squash(text));
    }
}

#[test]
fn mined_relations_hold_on_witnesses() {
    for f in programs::suite() {
        let a = analyze(f.source, &f.witness);
        let model = Model::new(&a.doc, a.view());
        assert_eq!(violations(&model, &a.doc.relations), Vec::<String>::new(), "{}", f.name);
    }
}

#[test]
fn analysis_is_deterministic() {
    for f in programs::suite() {
        let a = analyze(f.source, &f.witness);
        let b = analyze(f.source, &f.witness);
        assert_eq!(a.grammar(), b.grammar(), "{}", f.name);
    }
}

#[test]
fn fixture_relation_profiles() {
    let grammar = |name: &str| {
        let f = programs::suite().into_iter().find(|f| f.name == name).unwrap();
        analyze(f.source, &f.witness).grammar()
    };
    let csv_array = grammar("CSV_Array");
    assert!(csv_array.contains(".count = int(") && csv_array.contains(".terminator ="), "{csv_array}");
    let bmp_csv = grammar("BMP_CSV");
    for needle in [".count = int(", " % int(", ") * int(", ".terminator ="] {
        assert!(bmp_csv.contains(needle), "{needle} missing from\n{bmp_csv}");
    }
    let pe = grammar("PE");
    assert!(pe.contains(".size = int(") && pe.contains(".offset = int(") && pe.contains(".terminator ="), "{pe}");
    let png = grammar("PNG-2");
    assert!(png.contains(".record_type = ") && png.contains(".size = int("), "{png}");
}
