mod common;

use common::{corpus, corpus_mismatches};
use grid2matrix::parser::{normalize, parse_cascade, parse_flatten, parse_rowwise, parse_strict, ParseOutcome};

#[test]
fn corpus_matches_exactly() {
    let cases = corpus();
    assert!(cases.len() >= 30);
    let mismatches = corpus_mismatches(&cases);
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn corpus_covers_every_stage_and_failure() {
    let cases = corpus();
    for key in ["strict", "rowwise", "flatten"] {
        assert!(cases.iter().any(|c| c.expected["stage"] == key), "stage {key}");
    }
    for key in ["no-structure", "count-mismatch", "shape-mismatch", "invalid-token"] {
        assert!(cases.iter().any(|c| c.expected["failure"] == key), "failure {key}");
    }
}

#[test]
fn cascade_agrees_with_first_successful_stage() {
    for case in corpus().iter().filter(|c| c.op != "normalize") {
        let text = normalize(&case.text);
        let expected = [
            parse_strict(&text, case.h, case.w),
            parse_rowwise(&text, case.h, case.w),
        ]
        .into_iter()
        .find(ParseOutcome::is_parsed)
        .unwrap_or_else(|| parse_flatten(&text, case.h, case.w));
        assert_eq!(parse_cascade(&case.text, case.h, case.w), expected, "{}", case.name);
    }
}
