//! Deterministic in-process backends for tests and offline runs.
//!
//! Three behaviors cover the harness's needs: a constant responder, a
//! scripted map from prompt hash to continuation, and two dataset-aware
//! responders — an oracle that always answers correctly and a majority
//! responder that always answers the most frequent gold letter.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::backend::{
    effective_text, prompt_hash, Backend, BackendError, Completion, GenerationParams,
};
use crate::dataset::{Dataset, Letter, McqaItem};
use crate::promptkit::{PromptKind, RenderedPrompt};

enum Behavior {
    Constant(String),
    Scripted(HashMap<String, String>),
    Oracle(HashMap<String, McqaItem>),
    Majority(Letter),
}

/// A deterministic backend; every instance counts its live calls so tests
/// can assert that cached replays hit the backend zero times.
pub struct MockBackend {
    id: String,
    behavior: Behavior,
    calls: AtomicUsize,
}

impl MockBackend {
    /// Always return `text`, regardless of prompt.
    pub fn constant(text: &str) -> Self {
        MockBackend {
            id: format!("mock:constant:{text}"),
            behavior: Behavior::Constant(text.to_string()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Respond per prompt hash (see [`prompt_hash`]); unknown prompts are an
    /// error.
    pub fn scripted(script: HashMap<String, String>) -> Self {
        MockBackend {
            id: "mock:scripted".to_string(),
            behavior: Behavior::Scripted(script),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answer every prompt correctly using the dataset's gold labels: the
    /// gold letter for letter prompts, `True`/`False` for individual-choice
    /// prompts, and the item's original question for question-generation
    /// prompts.
    pub fn oracle(dataset: &Dataset) -> Self {
        let items = dataset
            .items
            .iter()
            .map(|i| (i.id.clone(), i.clone()))
            .collect();
        MockBackend {
            id: "mock:oracle".to_string(),
            behavior: Behavior::Oracle(items),
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answer the dataset's most frequent gold letter (ties toward
    /// the alphabetically earliest), mirroring the majority-class baseline.
    pub fn majority(dataset: &Dataset) -> Self {
        let mut counts = [0usize; 4];
        for item in &dataset.items {
            counts[item.gold.index()] += 1;
        }
        let best = *counts.iter().max().unwrap_or(&0);
        let letter = Letter::ALL
            .into_iter()
            .find(|l| counts[l.index()] == best)
            .unwrap_or(Letter::A);
        MockBackend {
            id: "mock:majority".to_string(),
            behavior: Behavior::Majority(letter),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of live (non-cached) completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn oracle_response(
        items: &HashMap<String, McqaItem>,
        prompt: &RenderedPrompt,
    ) -> Result<String, BackendError> {
        let item = items
            .get(&prompt.item_id)
            .ok_or_else(|| BackendError::UnknownItem {
                item_id: prompt.item_id.clone(),
            })?;
        Ok(match prompt.kind {
            PromptKind::IndividualFull | PromptKind::IndividualChoicesOnly => {
                let is_gold = prompt.aux.as_deref() == Some(item.gold_text());
                if is_gold { " True" } else { " False" }.to_string()
            }
            PromptKind::QuestionGeneration | PromptKind::OneStepAqi => {
                format!(" {}\nAnswer: ({})", item.question, item.gold)
            }
            _ => format!(" ({})", item.gold),
        })
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        params.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = prompt_hash(&prompt.text);
        let raw = match &self.behavior {
            Behavior::Constant(text) => text.clone(),
            Behavior::Scripted(script) => script
                .get(&hash)
                .cloned()
                .ok_or(BackendError::Unscripted { prompt_hash: hash.clone() })?,
            Behavior::Oracle(items) => Self::oracle_response(items, prompt)?,
            Behavior::Majority(letter) => format!(" ({letter})"),
        };
        Ok(Completion {
            text: effective_text(&raw, &params.stop),
            raw_text: raw,
            prompt_hash: hash,
            backend_id: self.id.clone(),
            latency_ms: 0,
            from_cache: false,
        })
    }
}
