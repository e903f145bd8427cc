//! Byte-exact rendering of the eleven prompt formats.
//!
//! Every format shares the same skeleton: zero or more exemplar blocks, each
//! completed with its ground truth, separated by exactly one blank line, then
//! the target block cut off at its cue (`Answer:` or `Question:`) with no
//! trailing space. The per-kind stop sequence is the first line a model would
//! emit if it started generating the next exemplar block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ExemplarSet, IndividualExemplarSet, Letter, McqaItem};

/// The eleven prompt formats.
///
/// - `Full` is the standard question-plus-choices format.
/// - `ChoicesOnly` drops the question (partial input).
/// - `GoldChoices`, `EmptyChoices`, and `NoChoices` remove all discriminative
///   choice information, so they are answerable only from memory of the item.
/// - `IndividualFull` / `IndividualChoicesOnly` classify one choice as
///   True/False instead of picking a letter.
/// - `QuestionGeneration` asks the model to invent a question for the
///   choices; `SelfAsk` answers that generated question and `RandomQuestion`
///   answers an unrelated one.
/// - `OneStepAqi` renders like `QuestionGeneration` but the continuation is
///   expected to carry question and answer in a single generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Full,
    ChoicesOnly,
    GoldChoices,
    EmptyChoices,
    NoChoices,
    IndividualFull,
    IndividualChoicesOnly,
    QuestionGeneration,
    SelfAsk,
    RandomQuestion,
    OneStepAqi,
}

impl PromptKind {
    pub const ALL: [PromptKind; 11] = [
        PromptKind::Full,
        PromptKind::ChoicesOnly,
        PromptKind::GoldChoices,
        PromptKind::EmptyChoices,
        PromptKind::NoChoices,
        PromptKind::IndividualFull,
        PromptKind::IndividualChoicesOnly,
        PromptKind::QuestionGeneration,
        PromptKind::SelfAsk,
        PromptKind::RandomQuestion,
        PromptKind::OneStepAqi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Full => "full",
            PromptKind::ChoicesOnly => "choices_only",
            PromptKind::GoldChoices => "gold_choices",
            PromptKind::EmptyChoices => "empty_choices",
            PromptKind::NoChoices => "no_choices",
            PromptKind::IndividualFull => "individual_full",
            PromptKind::IndividualChoicesOnly => "individual_choices_only",
            PromptKind::QuestionGeneration => "question_generation",
            PromptKind::SelfAsk => "self_ask",
            PromptKind::RandomQuestion => "random_question",
            PromptKind::OneStepAqi => "one_step_aqi",
        }
    }

    /// Kinds that classify a single choice as True/False.
    pub fn is_individual(self) -> bool {
        matches!(
            self,
            PromptKind::IndividualFull | PromptKind::IndividualChoicesOnly
        )
    }

    /// Kinds whose target block needs auxiliary text beyond the item itself.
    pub fn requires_aux(self) -> bool {
        matches!(
            self,
            PromptKind::SelfAsk
                | PromptKind::RandomQuestion
                | PromptKind::IndividualFull
                | PromptKind::IndividualChoicesOnly
        )
    }

    /// What the auxiliary text means for this kind.
    pub fn aux_role(self) -> &'static str {
        match self {
            PromptKind::SelfAsk => "the generated question",
            PromptKind::RandomQuestion => "the random question",
            PromptKind::IndividualFull | PromptKind::IndividualChoicesOnly => {
                "the choice under test"
            }
            _ => "nothing",
        }
    }

    /// The cue the rendered target block ends with.
    pub fn cue(self) -> &'static str {
        match self {
            PromptKind::QuestionGeneration | PromptKind::OneStepAqi => "Question:",
            _ => "Answer:",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown prompt kind `{s}`"))
    }
}

/// A prompt ready to send: exact text plus enough provenance to audit it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub stop_sequence: String,
    pub item_id: String,
    pub exemplar_ids: Vec<String>,
    /// Generated/random question for `SelfAsk`/`RandomQuestion`, the choice
    /// under test for the individual kinds, absent otherwise.
    pub aux: Option<String>,
}

/// Exemplar container for [`render_prompt`]; the individual kinds take the
/// True/False entries, every other kind takes plain items.
#[derive(Clone, Copy)]
pub enum Exemplars<'a> {
    Standard(&'a ExemplarSet),
    Individual(&'a IndividualExemplarSet),
}

impl<'a> From<&'a ExemplarSet> for Exemplars<'a> {
    fn from(set: &'a ExemplarSet) -> Self {
        Exemplars::Standard(set)
    }
}

impl<'a> From<&'a IndividualExemplarSet> for Exemplars<'a> {
    fn from(set: &'a IndividualExemplarSet) -> Self {
        Exemplars::Individual(set)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt kind `{kind}` requires auxiliary text: {role}")]
    MissingAux { kind: PromptKind, role: &'static str },
    #[error("prompt kind `{kind}` does not take auxiliary text")]
    UnexpectedAux { kind: PromptKind },
    #[error("prompt kind `{kind}` requires {expected} exemplars")]
    WrongExemplarContainer {
        kind: PromptKind,
        expected: &'static str,
    },
}

/// Stop sequence for a kind: a newline plus the first line of the block that
/// would follow, so generation halts when the model starts a new exemplar.
pub fn stop_sequence_for(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Full
        | PromptKind::NoChoices
        | PromptKind::IndividualFull
        | PromptKind::SelfAsk
        | PromptKind::RandomQuestion => "\nQuestion:",
        PromptKind::ChoicesOnly
        | PromptKind::GoldChoices
        | PromptKind::EmptyChoices
        | PromptKind::QuestionGeneration
        | PromptKind::OneStepAqi => "\nChoices:",
        PromptKind::IndividualChoicesOnly => "\nChoice:",
    }
}

/// `Choices:` header plus one `(X) text` line per choice.
fn choices_lines(texts: [&str; 4]) -> String {
    let mut out = String::from("Choices:");
    for (letter, text) in Letter::ALL.iter().zip(texts) {
        out.push('\n');
        out.push('(');
        out.push(letter.as_char());
        out.push(')');
        out.push(' ');
        out.push_str(text);
    }
    out
}

/// Letter lines with no choice text and no trailing space.
const EMPTY_CHOICES_LINES: &str = "Choices:\n(A)\n(B)\n(C)\n(D)";

fn as_refs(choices: &[String; 4]) -> [&str; 4] {
    [&choices[0], &choices[1], &choices[2], &choices[3]]
}

/// One block for the answer-eliciting group kinds, up to and including the
/// `Answer:` cue. `question` is passed separately because the self-ask and
/// random-question targets substitute it.
fn group_block(kind: PromptKind, question: &str, item: &McqaItem) -> String {
    let mut s = String::new();
    match kind {
        PromptKind::Full | PromptKind::SelfAsk | PromptKind::RandomQuestion => {
            s.push_str("Question: ");
            s.push_str(question);
            s.push('\n');
            s.push_str(&choices_lines(as_refs(&item.choices)));
        }
        PromptKind::ChoicesOnly => {
            s.push_str(&choices_lines(as_refs(&item.choices)));
        }
        PromptKind::GoldChoices => {
            let g = item.gold_text();
            s.push_str("Question: ");
            s.push_str(question);
            s.push('\n');
            s.push_str(&choices_lines([g, g, g, g]));
        }
        PromptKind::EmptyChoices => {
            s.push_str("Question: ");
            s.push_str(question);
            s.push('\n');
            s.push_str(EMPTY_CHOICES_LINES);
        }
        PromptKind::NoChoices => {
            s.push_str("Question: ");
            s.push_str(question);
        }
        _ => unreachable!("group_block only renders the answer-eliciting group kinds"),
    }
    s.push_str("\nAnswer:");
    s
}

/// One block for the single-choice True/False kinds, up to the `Answer:` cue.
fn individual_block(question: Option<&str>, choice: &str) -> String {
    let mut s = String::new();
    if let Some(q) = question {
        s.push_str("Question: ");
        s.push_str(q);
        s.push('\n');
    }
    s.push_str("Choice: ");
    s.push_str(choice);
    s.push_str("\nAnswer:");
    s
}

/// Question-generation block: choices first, then the `Question:` cue. The
/// exemplar variant appends the original question and its answer line.
fn question_generation_block(item: &McqaItem, completed: bool) -> String {
    let mut s = choices_lines(as_refs(&item.choices));
    s.push_str("\nQuestion:");
    if completed {
        s.push(' ');
        s.push_str(&item.question);
        s.push_str("\nAnswer: (");
        s.push(item.gold.as_char());
        s.push(')');
    }
    s
}

/// Render a prompt for `target`: completed exemplar blocks joined by one
/// blank line, then the target block ending at the kind's cue.
///
/// `aux` carries the generated question (`SelfAsk`), the random question
/// (`RandomQuestion`), or the choice under test (individual kinds); it must
/// be absent for every other kind.
pub fn render_prompt<'a>(
    kind: PromptKind,
    target: &McqaItem,
    exemplars: impl Into<Exemplars<'a>>,
    aux: Option<&str>,
) -> Result<RenderedPrompt, PromptError> {
    if kind.requires_aux() && aux.is_none() {
        return Err(PromptError::MissingAux {
            kind,
            role: kind.aux_role(),
        });
    }
    if !kind.requires_aux() && aux.is_some() {
        return Err(PromptError::UnexpectedAux { kind });
    }

    let exemplars = exemplars.into();
    let mut blocks: Vec<String> = Vec::new();
    let exemplar_ids: Vec<String> = match (kind.is_individual(), exemplars) {
        (true, Exemplars::Individual(set)) => {
            for entry in &set.entries {
                let question =
                    (kind == PromptKind::IndividualFull).then(|| entry.item.question.as_str());
                let mut block = individual_block(question, &entry.choice_text);
                block.push(' ');
                block.push_str(if entry.label { "True" } else { "False" });
                blocks.push(block);
            }
            let question = (kind == PromptKind::IndividualFull).then(|| target.question.as_str());
            blocks.push(individual_block(question, aux.expect("checked above")));
            set.entries.iter().map(|e| e.item.id.clone()).collect()
        }
        (false, Exemplars::Standard(set)) => {
            match kind {
                PromptKind::QuestionGeneration | PromptKind::OneStepAqi => {
                    for ex in &set.exemplars {
                        blocks.push(question_generation_block(ex, true));
                    }
                    blocks.push(question_generation_block(target, false));
                }
                _ => {
                    // Exemplars always show their own original question, even
                    // for the kinds that substitute the target's question.
                    for ex in &set.exemplars {
                        let mut block = group_block(kind, &ex.question, ex);
                        block.push_str(" (");
                        block.push(ex.gold.as_char());
                        block.push(')');
                        blocks.push(block);
                    }
                    let question = match kind {
                        PromptKind::SelfAsk | PromptKind::RandomQuestion => {
                            aux.expect("checked above")
                        }
                        _ => target.question.as_str(),
                    };
                    blocks.push(group_block(kind, question, target));
                }
            }
            set.exemplars.iter().map(|e| e.id.clone()).collect()
        }
        (true, Exemplars::Standard(_)) => {
            return Err(PromptError::WrongExemplarContainer {
                kind,
                expected: "single-choice True/False",
            });
        }
        (false, Exemplars::Individual(_)) => {
            return Err(PromptError::WrongExemplarContainer {
                kind,
                expected: "standard",
            });
        }
    };

    Ok(RenderedPrompt {
        kind,
        text: blocks.join("\n\n"),
        stop_sequence: stop_sequence_for(kind).to_string(),
        item_id: target.id.clone(),
        exemplar_ids,
        aux: aux.map(String::from),
    })
}
