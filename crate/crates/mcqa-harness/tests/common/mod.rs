//! Helpers shared by the integration-test targets: the frozen target item
//! and training pool behind the golden prompt fixtures, plus the fixture
//! loader itself.

#![allow(dead_code)] // each test target compiles this module separately

use mcqa_harness::dataset::{
    ExemplarSet, IndividualExemplar, IndividualExemplarSet, Letter, McqaItem,
};
use mcqa_harness::promptkit::PromptKind;

pub fn item(id: &str, question: &str, choices: [&str; 4], gold: Letter) -> McqaItem {
    McqaItem {
        id: id.to_string(),
        question: question.to_string(),
        choices: choices.map(String::from),
        gold,
        subject: None,
        source: None,
    }
}

/// The evaluation item every golden fixture renders a prompt for.
pub fn golden_target() -> McqaItem {
    item(
        "arc_e47",
        "Which property of a mineral can be determined just by looking at it?",
        ["luster", "mass", "weight", "hardness"],
        Letter::A,
    )
}

/// The frozen five-item training pool the golden fixtures draw exemplars
/// from, in fixture order.
pub fn golden_train_items() -> Vec<McqaItem> {
    vec![
        item(
            "train_001",
            "What is the boiling point of water at sea level?",
            [
                "90 degrees Celsius",
                "100 degrees Celsius",
                "110 degrees Celsius",
                "120 degrees Celsius",
            ],
            Letter::B,
        ),
        item(
            "train_002",
            "Which gas do plants absorb from the atmosphere?",
            ["oxygen", "nitrogen", "carbon dioxide", "helium"],
            Letter::C,
        ),
        item(
            "train_003",
            "Which unit measures electrical resistance?",
            ["ohm", "volt", "ampere", "watt"],
            Letter::A,
        ),
        item(
            "train_004",
            "What force pulls objects toward the center of Earth?",
            ["friction", "magnetism", "tension", "gravity"],
            Letter::D,
        ),
        item(
            "train_005",
            "Which planet is known as the Red Planet?",
            ["Venus", "Mars", "Jupiter", "Saturn"],
            Letter::B,
        ),
    ]
}

pub fn golden_exemplars(n: usize) -> ExemplarSet {
    ExemplarSet::from_items(golden_train_items().into_iter().take(n).collect(), 0).unwrap()
}

pub fn golden_individual_exemplars(n: usize) -> IndividualExemplarSet {
    let items = golden_train_items();
    let picks: [(usize, &str, bool); 5] = [
        (0, "90 degrees Celsius", false),
        (1, "carbon dioxide", true),
        (2, "volt", false),
        (3, "gravity", true),
        (4, "Saturn", false),
    ];
    let entries = picks[..n]
        .iter()
        .map(|(idx, choice, label)| IndividualExemplar {
            item: items[*idx].clone(),
            choice_text: choice.to_string(),
            label: *label,
        })
        .collect();
    IndividualExemplarSet::from_entries(entries).unwrap()
}

pub const SELF_ASK_AUX: &str =
    "What property of minerals is measured by observing reflected light?";
pub const RANDOM_Q_AUX: &str = "Which organ pumps blood through the human body?";
pub const INDIVIDUAL_AUX: &str = "luster";

/// The auxiliary input each prompt kind was rendered with in the fixtures.
pub fn golden_aux_for(kind: PromptKind) -> Option<&'static str> {
    match kind {
        PromptKind::SelfAsk => Some(SELF_ASK_AUX),
        PromptKind::RandomQuestion => Some(RANDOM_Q_AUX),
        PromptKind::IndividualFull | PromptKind::IndividualChoicesOnly => Some(INDIVIDUAL_AUX),
        _ => None,
    }
}

pub fn golden_fixture(name: &str) -> String {
    let path = format!(
        "{}/tests/fixtures/golden_prompts/{name}",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("cannot read {path}: {e}"))
}

/// Render `kind` at `n`-shot exactly as the fixtures were produced and
/// assert byte equality with the checked-in file.
pub fn assert_matches_golden_fixture(kind: PromptKind, n: usize) {
    use mcqa_harness::promptkit::render_prompt;

    let target = golden_target();
    let standard;
    let individual;
    let rendered = if kind.is_individual() {
        individual = golden_individual_exemplars(n);
        render_prompt(kind, &target, &individual, golden_aux_for(kind)).unwrap()
    } else {
        standard = golden_exemplars(n);
        render_prompt(kind, &target, &standard, golden_aux_for(kind)).unwrap()
    };
    let expected = golden_fixture(&format!("{}_{n}shot.txt", kind.as_str()));
    assert_eq!(
        rendered.text, expected,
        "prompt text for {kind} at {n}-shot diverges from the frozen fixture"
    );
}
