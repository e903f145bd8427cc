//! Regression corpus for the answer parsers: every line of
//! `tests/fixtures/parser_corpus.jsonl` is a hand-labeled continuation.

use serde::Deserialize;
use serde_json::Value;

use mcqa_harness::parse::{
    extract_generated_question, parse_bool, parse_letter, parse_one_step, AnswerStatus,
};

#[derive(Deserialize)]
struct Case {
    op: String,
    raw: String,
    expected_status: String,
    expected_value: Value,
}

fn load_corpus() -> Vec<Case> {
    let path = format!(
        "{}/tests/fixtures/parser_corpus.jsonl",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {path}: {e}"))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad corpus line {l}: {e}")))
        .collect()
}

#[test]
fn corpus_is_nontrivial() {
    let cases = load_corpus();
    assert!(cases.len() >= 50, "corpus shrank to {} cases", cases.len());
    for op in ["letter", "bool", "question", "one_step"] {
        assert!(
            cases.iter().filter(|c| c.op == op).count() >= 8,
            "too few `{op}` cases"
        );
    }
}

#[test]
fn every_corpus_case_parses_as_labeled() {
    for case in load_corpus() {
        let label = format!("op={} raw={:?}", case.op, case.raw);
        match case.op.as_str() {
            "letter" | "one_step" => {
                let parsed = if case.op == "letter" {
                    parse_letter(&case.raw, 4)
                } else {
                    parse_one_step(&case.raw, 4)
                };
                match case.expected_status.as_str() {
                    "valid" => {
                        let want = case.expected_value.as_str().unwrap();
                        match parsed.status {
                            AnswerStatus::ValidLetter(letter) => {
                                assert_eq!(letter.to_string(), want, "{label}")
                            }
                            other => panic!("{label}: got {other:?}, want letter {want}"),
                        }
                    }
                    "invalid" => {
                        assert_eq!(parsed.status, AnswerStatus::Invalid, "{label}")
                    }
                    other => panic!("unknown expected_status {other}"),
                }
            }
            "bool" => {
                let parsed = parse_bool(&case.raw);
                match case.expected_status.as_str() {
                    "valid" => {
                        let want = case.expected_value.as_bool().unwrap();
                        assert_eq!(parsed.status, AnswerStatus::ValidBool(want), "{label}");
                    }
                    "invalid" => {
                        assert_eq!(parsed.status, AnswerStatus::Invalid, "{label}")
                    }
                    other => panic!("unknown expected_status {other}"),
                }
            }
            "question" => {
                let got = extract_generated_question(&case.raw);
                match case.expected_status.as_str() {
                    "valid" => {
                        let want = case.expected_value.as_str().unwrap();
                        assert_eq!(got.as_deref(), Some(want), "{label}");
                    }
                    "invalid" => assert_eq!(got, None, "{label}"),
                    other => panic!("unknown expected_status {other}"),
                }
            }
            other => panic!("unknown op {other}"),
        }
    }
}

#[test]
fn matched_spans_point_at_real_tokens() {
    // For every valid letter case the recorded span must slice to the
    // matched token text.
    for case in load_corpus() {
        if case.op != "letter" || case.expected_status != "valid" {
            continue;
        }
        let parsed = parse_letter(&case.raw, 4);
        let (offset, len) = parsed.matched_span.expect("valid parse must have a span");
        let token = &case.raw[offset..offset + len];
        let want = case.expected_value.as_str().unwrap();
        assert!(
            token == want || token == format!("({want})"),
            "span {token:?} does not match letter {want} in {:?}",
            case.raw
        );
    }
}
