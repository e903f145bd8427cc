//! Byte-equality checks of every prompt kind against frozen fixture files.
//!
//! The fixtures under `tests/fixtures/golden_prompts/` were produced by an
//! independent renderer and hand-checked, so these tests catch any drift in
//! template text, separators, or trailing whitespace.

mod common;

use common::assert_matches_golden_fixture;
use mcqa_harness::promptkit::PromptKind;

#[test]
fn all_kinds_match_fixtures_zero_shot() {
    for kind in PromptKind::ALL {
        assert_matches_golden_fixture(kind, 0);
    }
}

#[test]
fn all_kinds_match_fixtures_five_shot() {
    for kind in PromptKind::ALL {
        assert_matches_golden_fixture(kind, 5);
    }
}

#[test]
fn fixture_directory_is_exhaustive() {
    // Every fixture corresponds to a (kind, shot) pair exercised above, so a
    // stray or missing file is caught here rather than silently ignored.
    let dir = format!(
        "{}/tests/fixtures/golden_prompts",
        env!("CARGO_MANIFEST_DIR")
    );
    let mut found: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    found.sort();
    let mut expected: Vec<String> = PromptKind::ALL
        .iter()
        .flat_map(|k| [format!("{k}_0shot.txt"), format!("{k}_5shot.txt")])
        .collect();
    expected.sort();
    assert_eq!(found, expected);
}
