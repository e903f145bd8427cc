//! Canonical MCQA data: loading, validation, and seeded exemplar selection.
//!
//! The ingestion format is JSONL with one object per line:
//!
//! ```json
//! {"id": "q1", "question": "...", "choices": ["...", "...", "...", "..."],
//!  "gold": "B", "subject": "physics", "source": "activitynet"}
//! ```
//!
//! `subject` and `source` are optional. Items whose `choices` array does not
//! have exactly four entries are dropped and counted rather than rejected.
//! All sampling in this module is a pure function of its inputs and an
//! explicit seed.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Answer letter of a four-choice question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        match self {
            Letter::A => 0,
            Letter::B => 1,
            Letter::C => 2,
            Letter::D => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Letter> {
        Letter::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One question with exactly four choices and a gold letter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaItem {
    pub id: String,
    pub question: String,
    pub choices: [String; 4],
    pub gold: Letter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl McqaItem {
    /// Text of the gold choice.
    pub fn gold_text(&self) -> &str {
        &self.choices[self.gold.index()]
    }

    /// The three non-gold choice texts, in position order.
    pub fn distractors(&self) -> Vec<&str> {
        self.choices
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.gold.index())
            .map(|(_, c)| c.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// An ordered collection of validated MCQA items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub items: Vec<McqaItem>,
    /// Items discarded by the exactly-four-choices filter during loading.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items whose subject tag equals `subject`.
    pub fn by_subject(&self, subject: &str) -> Vec<&McqaItem> {
        self.items
            .iter()
            .filter(|i| i.subject.as_deref() == Some(subject))
            .collect()
    }

    /// Sorted list of distinct subject tags present in the dataset.
    pub fn subjects(&self) -> Vec<String> {
        let set: HashSet<&str> = self
            .items
            .iter()
            .filter_map(|i| i.subject.as_deref())
            .collect();
        let mut v: Vec<String> = set.into_iter().map(String::from).collect();
        v.sort();
        v
    }
}

/// Ordered few-shot demonstrations with a letter-balance guarantee.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub exemplars: Vec<McqaItem>,
    pub seed: u64,
}

impl ExemplarSet {
    /// Wrap a pre-selected list of exemplars, enforcing the balance rule.
    pub fn from_items(exemplars: Vec<McqaItem>, seed: u64) -> Result<Self, DatasetError> {
        let set = ExemplarSet { exemplars, seed };
        let counts = set.letter_counts();
        let max = counts.values().copied().max().unwrap_or(0);
        let min = Letter::ALL
            .iter()
            .map(|l| counts.get(l).copied().unwrap_or(0))
            .min()
            .unwrap_or(0);
        if !set.exemplars.is_empty() && max - min > 1 {
            return Err(DatasetError::Unbalanced { max, min });
        }
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.exemplars.len()
    }

    /// Gold-letter frequencies over the exemplars.
    pub fn letter_counts(&self) -> BTreeMap<Letter, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.exemplars {
            *counts.entry(item.gold).or_insert(0) += 1;
        }
        counts
    }
}

/// One True/False demonstration for the single-choice classification prompts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndividualExemplar {
    pub item: McqaItem,
    pub choice_text: String,
    pub label: bool,
}

/// Demonstrations for the single-choice prompts: ceil(n/2) False entries
/// pairing an item with one of its distractors, floor(n/2) True entries
/// pairing an item with its gold choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndividualExemplarSet {
    pub entries: Vec<IndividualExemplar>,
}

impl IndividualExemplarSet {
    /// Wrap pre-built entries, enforcing the label-count and text invariants.
    pub fn from_entries(entries: Vec<IndividualExemplar>) -> Result<Self, DatasetError> {
        let n = entries.len();
        let false_count = entries.iter().filter(|e| !e.label).count();
        if false_count != n.div_ceil(2) {
            return Err(DatasetError::BadLabelSplit {
                n,
                false_count,
            });
        }
        for e in &entries {
            let is_gold = e.choice_text == e.item.gold_text();
            if e.label != is_gold {
                return Err(DatasetError::LabelTextMismatch {
                    item_id: e.item.id.clone(),
                });
            }
        }
        Ok(IndividualExemplarSet { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line} in {path}: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate item id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("insufficient items: need {needed}, pool has {available}{context}")]
    InsufficientItems {
        needed: usize,
        available: usize,
        context: String,
    },
    #[error("source balancing requested but item `{id}` has no source tag")]
    MissingSource { id: String },
    #[error("exemplar letter counts unbalanced: max {max}, min {min}")]
    Unbalanced { max: usize, min: usize },
    #[error("individual exemplar split must have ceil(n/2) False labels, got {false_count} of {n}")]
    BadLabelSplit { n: usize, false_count: usize },
    #[error("individual exemplar label disagrees with choice text for item `{item_id}`")]
    LabelTextMismatch { item_id: String },
    #[error("dataset has {len} items, need at least 2 to sample a random question")]
    TooSmallForSampling { len: usize },
}

#[derive(Deserialize)]
struct RawItem {
    id: String,
    question: String,
    choices: Vec<String>,
    gold: Letter,
    #[serde(default)]
    subject: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

/// Parse canonical JSONL from any reader. Blank lines are skipped; items
/// without exactly four choices are dropped and counted.
pub fn read_jsonl<R: BufRead>(
    reader: R,
    name: &str,
    split: Split,
) -> Result<Dataset, DatasetError> {
    let mut items = Vec::new();
    let mut dropped = 0usize;
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::MalformedLine {
            path: name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
                path: name.to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        if raw.choices.len() != 4 {
            dropped += 1;
            continue;
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId {
                id: raw.id,
                line: line_no,
            });
        }
        let mut choices = raw.choices.into_iter();
        items.push(McqaItem {
            id: raw.id,
            question: raw.question,
            choices: [
                choices.next().unwrap(),
                choices.next().unwrap(),
                choices.next().unwrap(),
                choices.next().unwrap(),
            ],
            gold: raw.gold,
            subject: raw.subject,
            source: raw.source,
        });
    }
    Ok(Dataset {
        name: name.to_string(),
        split,
        items,
        dropped,
    })
}

/// Load a canonical JSONL dataset from disk. The dataset name is the file
/// stem.
pub fn load_dataset(path: &Path, split: Split) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    read_jsonl(std::io::BufReader::new(file), &name, split)
}

/// Derive a sub-seed for a named sub-task so that per-item or per-subject
/// draws are independent of each other and stable across processes.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Per-letter quotas that are as equal as possible (max - min <= 1), with
/// the surplus letters for n % 4 != 0 chosen by seeded draw.
fn letter_quotas(n: usize, rng: &mut ChaCha8Rng) -> BTreeMap<Letter, usize> {
    let base = n / 4;
    let surplus = n % 4;
    let mut quotas: BTreeMap<Letter, usize> = Letter::ALL.iter().map(|l| (*l, base)).collect();
    let picks = rand::seq::index::sample(rng, 4, surplus);
    for i in picks.iter() {
        *quotas.get_mut(&Letter::ALL[i]).unwrap() += 1;
    }
    quotas
}

/// Evenly-split totals over `groups` names, surplus assigned by seeded draw.
fn group_quotas(
    n: usize,
    groups: &[String],
    rng: &mut ChaCha8Rng,
) -> BTreeMap<String, usize> {
    let base = n / groups.len();
    let surplus = n % groups.len();
    let mut quotas: BTreeMap<String, usize> =
        groups.iter().map(|g| (g.clone(), base)).collect();
    let picks = rand::seq::index::sample(rng, groups.len(), surplus);
    for i in picks.iter() {
        *quotas.get_mut(&groups[i]).unwrap() += 1;
    }
    quotas
}

fn sample_items<'a>(
    pool: &[&'a McqaItem],
    count: usize,
    context: String,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'a McqaItem>, DatasetError> {
    if pool.len() < count {
        return Err(DatasetError::InsufficientItems {
            needed: count,
            available: pool.len(),
            context,
        });
    }
    let picks = rand::seq::index::sample(rng, pool.len(), count);
    Ok(picks.iter().map(|i| pool[i]).collect())
}

/// Select `n` few-shot exemplars whose gold letters are as balanced as
/// possible, in seeded random order. With `source_balance` the draw is
/// additionally split evenly across the distinct `source` tags, as with
/// datasets assembled from multiple portions.
pub fn select_exemplars(
    train: &Dataset,
    n: usize,
    seed: u64,
    source_balance: bool,
) -> Result<ExemplarSet, DatasetError> {
    if train.items.len() < n {
        return Err(DatasetError::InsufficientItems {
            needed: n,
            available: train.items.len(),
            context: String::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quotas = letter_quotas(n, &mut rng);
    let mut selected: Vec<&McqaItem> = Vec::with_capacity(n);

    if source_balance {
        for item in &train.items {
            if item.source.is_none() {
                return Err(DatasetError::MissingSource {
                    id: item.id.clone(),
                });
            }
        }
        let mut sources: Vec<String> = train
            .items
            .iter()
            .filter_map(|i| i.source.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        sources.sort();
        let source_totals = group_quotas(n, &sources, &mut rng);
        // Tie order for distributing letter units across sources.
        let mut priority = sources.clone();
        priority.shuffle(&mut rng);
        let mut remaining = source_totals;
        let mut cells: BTreeMap<(Letter, String), usize> = BTreeMap::new();
        for letter in Letter::ALL {
            for _ in 0..quotas[&letter] {
                let target = priority
                    .iter()
                    .filter(|s| remaining[*s] > 0)
                    .max_by_key(|s| remaining[*s])
                    .expect("total remaining capacity equals units left")
                    .clone();
                *remaining.get_mut(&target).unwrap() -= 1;
                *cells.entry((letter, target)).or_insert(0) += 1;
            }
        }
        for ((letter, source), count) in cells {
            let pool: Vec<&McqaItem> = train
                .items
                .iter()
                .filter(|i| i.gold == letter && i.source.as_deref() == Some(source.as_str()))
                .collect();
            let context = format!(" (gold {letter} in source `{source}`)");
            selected.extend(sample_items(&pool, count, context, &mut rng)?);
        }
    } else {
        for letter in Letter::ALL {
            let pool: Vec<&McqaItem> =
                train.items.iter().filter(|i| i.gold == letter).collect();
            let context = format!(" (gold {letter})");
            selected.extend(sample_items(&pool, quotas[&letter], context, &mut rng)?);
        }
    }

    let mut exemplars: Vec<McqaItem> = selected.into_iter().cloned().collect();
    exemplars.shuffle(&mut rng);
    Ok(ExemplarSet { exemplars, seed })
}

/// Convert a standard exemplar set into single-choice True/False entries:
/// ceil(n/2) items classify a seeded-random distractor as False, the rest
/// classify their gold choice as True, in seeded-shuffled order.
pub fn split_individual_exemplars(base: &ExemplarSet, seed: u64) -> IndividualExemplarSet {
    let n = base.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let false_count = n.div_ceil(2);
    let false_idx: HashSet<usize> = rand::seq::index::sample(&mut rng, n, false_count)
        .iter()
        .collect();
    let mut entries: Vec<IndividualExemplar> = Vec::with_capacity(n);
    for (i, item) in base.exemplars.iter().enumerate() {
        if false_idx.contains(&i) {
            let distractors = item.distractors();
            let pick = rng.gen_range(0..distractors.len());
            entries.push(IndividualExemplar {
                item: item.clone(),
                choice_text: distractors[pick].to_string(),
                label: false,
            });
        } else {
            entries.push(IndividualExemplar {
                item: item.clone(),
                choice_text: item.gold_text().to_string(),
                label: true,
            });
        }
    }
    entries.shuffle(&mut rng);
    IndividualExemplarSet { entries }
}

/// Seeded-uniform question text from `eval`, never the item `exclude_id`.
pub fn sample_random_question(
    eval: &Dataset,
    exclude_id: &str,
    seed: u64,
) -> Result<String, DatasetError> {
    if eval.items.len() < 2 {
        return Err(DatasetError::TooSmallForSampling {
            len: eval.items.len(),
        });
    }
    let candidates: Vec<&McqaItem> = eval
        .items
        .iter()
        .filter(|i| i.id != exclude_id)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = rng.gen_range(0..candidates.len());
    Ok(candidates[pick].question.clone())
}
