//! End-to-end experiment orchestration.
//!
//! A [`Runner`] binds a [`RunConfig`] to a backend and a pair of datasets,
//! then executes experiment pipelines: render a prompt per item (or four,
//! or two chained steps), complete it, parse, score, and persist the run
//! directory described in [`store`]. Item-level work is distributed over a
//! bounded thread pool; results are aggregated after a sort by item id, so
//! schedules never affect output. Every completion goes through the run's
//! own completion cache, which is what makes interrupted runs resumable:
//! re-running the same configuration against the same directory replays
//! cached completions and only calls the backend for missing items.

pub mod store;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use chrono::Utc;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::cache::{CachedBackend, CompletionCache};
use crate::backend::{Backend, BackendError, Completion, GenerationParams};
use crate::dataset::{
    derive_seed, load_dataset, sample_random_question, select_exemplars,
    split_individual_exemplars, Dataset, DatasetError, ExemplarSet, IndividualExemplarSet,
    McqaItem, Split,
};
use crate::metrics::{cohens_kappa, elimination_score, item_score, MetricsError, ScoreSummary};
use crate::parse::{
    extract_generated_question, parse_bool, parse_letter, parse_one_step, AnswerStatus,
    ParsedAnswer,
};
use crate::promptkit::{render_prompt, PromptError, PromptKind, RenderedPrompt};

pub use store::{
    load_run, EvalRecord, Experiment, RunConfig, RunManifest, RunResult, StoreError,
};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid run configuration: {message}")]
    InvalidConfig { message: String },
    #[error("selecting exemplars for subject `{subject}`: {source}")]
    SubjectExemplars {
        subject: String,
        #[source]
        source: DatasetError,
    },
    #[error("item `{item_id}` has no subject tag but the run asks for per-subject exemplars")]
    MissingSubject { item_id: String },
    #[error("runs cover different items (`{example}` is only in one of them)")]
    ItemMismatch { example: String },
}

/// One unit of an experiment: a prompt kind or a multi-prompt pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// One prompt per item, parsed for a letter.
    Single(PromptKind),
    /// Four True/False prompts per item, combined by elimination scoring.
    Individual { with_question: bool },
    /// Question inference: two chained completions, or one combined.
    Aqi { one_step: bool },
}

impl Task {
    /// Directory name for this task's run inside an experiment.
    pub fn label(self) -> &'static str {
        match self {
            Task::Single(kind) => kind.as_str(),
            Task::Individual {
                with_question: true,
            } => "individual_full",
            Task::Individual {
                with_question: false,
            } => "individual_choices_only",
            Task::Aqi { one_step: false } => "aqi_two_step",
            Task::Aqi { one_step: true } => "aqi_one_step",
        }
    }
}

impl Experiment {
    /// The tasks this experiment expands to, in execution order.
    pub fn plan(self) -> &'static [Task] {
        match self {
            Experiment::FullVsChoicesOnly => &[
                Task::Single(PromptKind::Full),
                Task::Single(PromptKind::ChoicesOnly),
            ],
            Experiment::Memorization => &[
                Task::Single(PromptKind::GoldChoices),
                Task::Single(PromptKind::EmptyChoices),
                Task::Single(PromptKind::NoChoices),
            ],
            Experiment::ChoiceDynamics => &[
                Task::Individual {
                    with_question: true,
                },
                Task::Individual {
                    with_question: false,
                },
            ],
            Experiment::AqiTwoStep => &[Task::Aqi { one_step: false }],
            Experiment::AqiOneStep => &[Task::Aqi { one_step: true }],
            Experiment::RandomQuestion => &[Task::Single(PromptKind::RandomQuestion)],
        }
    }
}

/// The evaluation subset selected by `eval_fraction`: a seeded prefix of a
/// seeded permutation, so the same (dataset, fraction, seed) always yields
/// the same items. A fraction of 1.0 keeps the dataset unchanged; smaller
/// fractions keep at least one item.
pub fn eval_subset(eval: &Dataset, fraction: f64, seed: u64) -> Dataset {
    let items = if fraction >= 1.0 {
        eval.items.clone()
    } else {
        let take = ((fraction * eval.items.len() as f64).floor() as usize)
            .clamp(1, eval.items.len());
        let mut order: Vec<usize> = (0..eval.items.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "eval-subset")));
        order.truncate(take);
        order.into_iter().map(|i| eval.items[i].clone()).collect()
    };
    Dataset {
        name: eval.name.clone(),
        split: eval.split,
        items,
        dropped: eval.dropped,
    }
}

/// Exemplars for one run: the plain few-shot set and its True/False
/// derivative for the individual-choice kinds.
struct ExemplarPair {
    standard: ExemplarSet,
    individual: IndividualExemplarSet,
}

fn build_pair(
    train: &Dataset,
    n_shot: usize,
    seed: u64,
    source_balance: bool,
    tag: &str,
) -> Result<ExemplarPair, DatasetError> {
    let standard = select_exemplars(
        train,
        n_shot,
        derive_seed(seed, &format!("exemplars:{tag}")),
        source_balance,
    )?;
    let individual = split_individual_exemplars(
        &standard,
        derive_seed(seed, &format!("individual-exemplars:{tag}")),
    );
    Ok(ExemplarPair {
        standard,
        individual,
    })
}

/// Where an item's exemplars come from: one shared draw, or one draw per
/// subject out of that subject's training pool.
enum ExemplarProvider {
    Global(ExemplarPair),
    PerSubject(BTreeMap<String, ExemplarPair>),
}

impl ExemplarProvider {
    fn build(
        config: &RunConfig,
        train: &Dataset,
        eval: &Dataset,
    ) -> Result<Self, RunnerError> {
        if !config.per_subject_exemplars {
            let pair = build_pair(train, config.n_shot, config.seed, config.source_balance, "")?;
            return Ok(ExemplarProvider::Global(pair));
        }
        let mut subjects: Vec<&str> = Vec::new();
        for item in &eval.items {
            match item.subject.as_deref() {
                Some(subject) => {
                    if !subjects.contains(&subject) {
                        subjects.push(subject);
                    }
                }
                None => {
                    return Err(RunnerError::MissingSubject {
                        item_id: item.id.clone(),
                    })
                }
            }
        }
        let mut sets = BTreeMap::new();
        for subject in subjects {
            let pool = Dataset {
                name: train.name.clone(),
                split: train.split,
                items: train
                    .items
                    .iter()
                    .filter(|i| i.subject.as_deref() == Some(subject))
                    .cloned()
                    .collect(),
                dropped: 0,
            };
            let pair = build_pair(
                &pool,
                config.n_shot,
                config.seed,
                config.source_balance,
                subject,
            )
            .map_err(|source| RunnerError::SubjectExemplars {
                subject: subject.to_string(),
                source,
            })?;
            sets.insert(subject.to_string(), pair);
        }
        Ok(ExemplarProvider::PerSubject(sets))
    }

    fn for_item(&self, item: &McqaItem) -> Result<&ExemplarPair, RunnerError> {
        match self {
            ExemplarProvider::Global(pair) => Ok(pair),
            ExemplarProvider::PerSubject(sets) => item
                .subject
                .as_deref()
                .and_then(|s| sets.get(s))
                .ok_or_else(|| RunnerError::MissingSubject {
                    item_id: item.id.clone(),
                }),
        }
    }
}

/// Everything produced for one evaluation item: its score, the records to
/// persist, and whether question extraction failed on it.
struct ItemOutcome {
    id: String,
    score: f64,
    extraction_failed: bool,
    records: Vec<EvalRecord>,
}

/// Executes experiment pipelines for one configuration against one backend.
pub struct Runner<'a> {
    config: RunConfig,
    backend: &'a dyn Backend,
    /// The working evaluation set, after `eval_fraction` subsampling.
    eval: Dataset,
    provider: ExemplarProvider,
}

impl<'a> Runner<'a> {
    /// Load the datasets named by the config and build a runner.
    pub fn new(config: RunConfig, backend: &'a dyn Backend) -> Result<Self, RunnerError> {
        let train = load_dataset(&config.train, Split::Train)?;
        let eval = load_dataset(&config.dataset, Split::Eval)?;
        Runner::from_datasets(config, backend, &train, &eval)
    }

    /// Build a runner from datasets already in memory (they are subsampled
    /// and copied as needed; the config's paths are kept as provenance).
    pub fn from_datasets(
        config: RunConfig,
        backend: &'a dyn Backend,
        train: &Dataset,
        eval: &Dataset,
    ) -> Result<Self, RunnerError> {
        validate_config(&config)?;
        if eval.is_empty() {
            return Err(RunnerError::InvalidConfig {
                message: format!("evaluation set `{}` is empty", eval.name),
            });
        }
        let eval = eval_subset(eval, config.eval_fraction, config.seed);
        let provider = ExemplarProvider::build(&config, train, &eval)?;
        Ok(Runner {
            config,
            backend,
            eval,
            provider,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// The items actually evaluated, i.e. the post-subsampling dataset.
    /// Baselines comparable to this run must be computed on exactly this
    /// set.
    pub fn working_set(&self) -> &Dataset {
        &self.eval
    }

    /// Run every task of the configured experiment, each into its own
    /// subdirectory of `out_root` named by [`Task::label`].
    pub fn run_experiment(&self, out_root: &Path) -> Result<Vec<RunResult>, RunnerError> {
        let mut results = Vec::with_capacity(self.config.experiment.plan().len());
        for task in self.config.experiment.plan() {
            results.push(self.run_task(*task, &out_root.join(task.label()))?);
        }
        Ok(results)
    }

    pub fn run_task(&self, task: Task, out_dir: &Path) -> Result<RunResult, RunnerError> {
        match task {
            Task::Single(kind) => self.run_single_prompt(kind, out_dir),
            Task::Individual { with_question } => self.run_individual(with_question, out_dir),
            Task::Aqi { one_step } => self.run_aqi(one_step, out_dir),
        }
    }

    /// One prompt per item, parsed for a letter and scored against gold.
    pub fn run_single_prompt(
        &self,
        kind: PromptKind,
        out_dir: &Path,
    ) -> Result<RunResult, RunnerError> {
        const SINGLE: [PromptKind; 6] = [
            PromptKind::Full,
            PromptKind::ChoicesOnly,
            PromptKind::GoldChoices,
            PromptKind::EmptyChoices,
            PromptKind::NoChoices,
            PromptKind::RandomQuestion,
        ];
        if !SINGLE.contains(&kind) {
            return Err(RunnerError::InvalidConfig {
                message: format!(
                    "`{kind}` is not a single-prompt kind; use the individual or \
                     question-inference pipelines"
                ),
            });
        }
        self.execute(kind.as_str(), out_dir, |backend, item| {
            self.single_item(backend, kind, item)
        })
    }

    /// Four True/False prompts per item (one per choice), combined into an
    /// elimination score.
    pub fn run_individual(
        &self,
        with_question: bool,
        out_dir: &Path,
    ) -> Result<RunResult, RunnerError> {
        let label = Task::Individual { with_question }.label();
        self.execute(label, out_dir, |backend, item| {
            self.individual_item(backend, with_question, item)
        })
    }

    /// Question inference: generate the missing question from the choices,
    /// then answer it — as two chained completions, or as one when
    /// `one_step`.
    pub fn run_aqi(&self, one_step: bool, out_dir: &Path) -> Result<RunResult, RunnerError> {
        let label = Task::Aqi { one_step }.label();
        self.execute(label, out_dir, |backend, item| {
            self.aqi_item(backend, one_step, item)
        })
    }

    /// Shared driver: write the in-flight manifest, open the run's
    /// completion cache, map `item_fn` over the working set with bounded
    /// parallelism, aggregate in item-id order, and persist the result.
    fn execute<F>(&self, label: &str, out_dir: &Path, item_fn: F) -> Result<RunResult, RunnerError>
    where
        F: Fn(&dyn Backend, &McqaItem) -> Result<ItemOutcome, RunnerError> + Sync,
    {
        let started = Utc::now().to_rfc3339();
        log::info!(
            "task {label}: {} items on {} -> {}",
            self.eval.len(),
            self.eval.name,
            out_dir.display()
        );
        store::write_manifest(
            out_dir,
            &RunManifest {
                config: self.config.clone(),
                label: label.to_string(),
                dataset_name: self.eval.name.clone(),
                n_items: self.eval.len(),
                dropped_item_count: self.eval.dropped,
                started: started.clone(),
                finished: None,
                summary: None,
                extraction_failures: 0,
            },
        )?;
        let cache = CompletionCache::open(&out_dir.join(store::COMPLETIONS_FILE))
            .map_err(BackendError::from)?;
        let backend = CachedBackend::new(self.backend, cache);
        let items = &self.eval.items;
        let mut outcomes = parallel_map(items.len(), self.config.parallelism, |i| {
            item_fn(&backend, &items[i])
        })?;
        outcomes.sort_by(|a, b| a.id.cmp(&b.id));

        let per_item: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
        let extraction_failures = outcomes.iter().filter(|o| o.extraction_failed).count() as u64;
        let records: Vec<EvalRecord> = outcomes.into_iter().flat_map(|o| o.records).collect();
        let result = RunResult {
            config: self.config.clone(),
            label: label.to_string(),
            dataset_name: self.eval.name.clone(),
            n_items: self.eval.len(),
            dropped_item_count: self.eval.dropped,
            started,
            finished: Utc::now().to_rfc3339(),
            summary: ScoreSummary::from_scores(per_item, self.config.policy),
            extraction_failures,
            records,
        };
        store::write_run(out_dir, &result)?;
        log::info!(
            "task {label}: mean {:.4} over {} items",
            result.summary.mean,
            result.summary.n
        );
        Ok(result)
    }

    fn params_for(&self, prompt: &RenderedPrompt) -> GenerationParams {
        GenerationParams {
            stop: prompt.stop_sequence.clone(),
            ..self.config.generation.clone()
        }
    }

    fn complete(
        &self,
        backend: &dyn Backend,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, RunnerError> {
        Ok(backend.complete(prompt, &self.params_for(prompt))?)
    }

    fn single_item(
        &self,
        backend: &dyn Backend,
        kind: PromptKind,
        item: &McqaItem,
    ) -> Result<ItemOutcome, RunnerError> {
        // The random question for an item is a pure function of the run
        // seed and the item id, so reruns and resumes draw the same one.
        let aux = if kind == PromptKind::RandomQuestion {
            let seed = derive_seed(self.config.seed, &format!("random-question:{}", item.id));
            Some(sample_random_question(&self.eval, &item.id, seed)?)
        } else {
            None
        };
        let pair = self.provider.for_item(item)?;
        let prompt = render_prompt(kind, item, &pair.standard, aux.as_deref())?;
        let completion = self.complete(backend, &prompt)?;
        let parsed = parse_letter(&completion.text, item.choices.len());
        let score = item_score(parsed.status, item.gold, self.config.policy);
        Ok(ItemOutcome {
            id: item.id.clone(),
            score,
            extraction_failed: false,
            records: vec![EvalRecord {
                item_id: item.id.clone(),
                kind,
                raw: completion.raw_text,
                parsed,
                score,
                aux,
            }],
        })
    }

    fn individual_item(
        &self,
        backend: &dyn Backend,
        with_question: bool,
        item: &McqaItem,
    ) -> Result<ItemOutcome, RunnerError> {
        let kind = if with_question {
            PromptKind::IndividualFull
        } else {
            PromptKind::IndividualChoicesOnly
        };
        let pair = self.provider.for_item(item)?;
        let mut flags = [false; 4];
        let mut responses = Vec::with_capacity(item.choices.len());
        for (idx, choice) in item.choices.iter().enumerate() {
            let prompt = render_prompt(kind, item, &pair.individual, Some(choice))?;
            let completion = self.complete(backend, &prompt)?;
            let parsed = parse_bool(&completion.text);
            // Anything other than an explicit True counts as not flagged.
            flags[idx] = parsed.status == AnswerStatus::ValidBool(true);
            responses.push((choice.clone(), completion.raw_text, parsed));
        }
        let score = elimination_score(flags, item.gold.index());
        let records = responses
            .into_iter()
            .map(|(choice, raw, parsed)| EvalRecord {
                item_id: item.id.clone(),
                kind,
                raw,
                parsed,
                score,
                aux: Some(choice),
            })
            .collect();
        Ok(ItemOutcome {
            id: item.id.clone(),
            score,
            extraction_failed: false,
            records,
        })
    }

    fn aqi_item(
        &self,
        backend: &dyn Backend,
        one_step: bool,
        item: &McqaItem,
    ) -> Result<ItemOutcome, RunnerError> {
        let pair = self.provider.for_item(item)?;
        if one_step {
            let prompt = render_prompt(PromptKind::OneStepAqi, item, &pair.standard, None)?;
            let completion = self.complete(backend, &prompt)?;
            let parsed = parse_one_step(&completion.text, item.choices.len());
            let q_gen = extract_generated_question(&completion.text);
            let score = item_score(parsed.status, item.gold, self.config.policy);
            return Ok(ItemOutcome {
                id: item.id.clone(),
                score,
                extraction_failed: q_gen.is_none(),
                records: vec![EvalRecord {
                    item_id: item.id.clone(),
                    kind: PromptKind::OneStepAqi,
                    raw: completion.raw_text,
                    parsed,
                    score,
                    aux: q_gen,
                }],
            });
        }

        let step_one = render_prompt(PromptKind::QuestionGeneration, item, &pair.standard, None)?;
        let generation = self.complete(backend, &step_one)?;
        match extract_generated_question(&generation.text) {
            Some(q_gen) => {
                let step_two =
                    render_prompt(PromptKind::SelfAsk, item, &pair.standard, Some(&q_gen))?;
                let answer = self.complete(backend, &step_two)?;
                let parsed = parse_letter(&answer.text, item.choices.len());
                let score = item_score(parsed.status, item.gold, self.config.policy);
                Ok(ItemOutcome {
                    id: item.id.clone(),
                    score,
                    extraction_failed: false,
                    records: vec![EvalRecord {
                        item_id: item.id.clone(),
                        kind: PromptKind::SelfAsk,
                        raw: answer.raw_text,
                        parsed,
                        score,
                        aux: Some(q_gen),
                    }],
                })
            }
            None => {
                // No usable question came back; the item stays in the
                // denominator as an invalid answer rather than being
                // skipped.
                let parsed = ParsedAnswer {
                    status: AnswerStatus::Invalid,
                    matched_span: None,
                    raw: generation.text.clone(),
                };
                let score = self.config.policy.invalid_score();
                Ok(ItemOutcome {
                    id: item.id.clone(),
                    score,
                    extraction_failed: true,
                    records: vec![EvalRecord {
                        item_id: item.id.clone(),
                        kind: PromptKind::QuestionGeneration,
                        raw: generation.raw_text,
                        parsed,
                        score,
                        aux: None,
                    }],
                })
            }
        }
    }
}

fn validate_config(config: &RunConfig) -> Result<(), RunnerError> {
    if !(config.eval_fraction > 0.0 && config.eval_fraction <= 1.0) {
        return Err(RunnerError::InvalidConfig {
            message: format!(
                "eval_fraction must be in (0, 1], got {}",
                config.eval_fraction
            ),
        });
    }
    if config.parallelism == 0 {
        return Err(RunnerError::InvalidConfig {
            message: "parallelism must be at least 1".to_string(),
        });
    }
    config.generation.validate()?;
    Ok(())
}

/// Run `task(0..n)` on up to `parallelism` threads, keeping results in
/// index order. Items are handed out through a shared counter; on the
/// first error remaining items are abandoned and the lowest-index error is
/// returned.
fn parallel_map<T, F>(n: usize, parallelism: usize, task: F) -> Result<Vec<T>, RunnerError>
where
    T: Send,
    F: Fn(usize) -> Result<T, RunnerError> + Sync,
{
    let workers = parallelism.min(n).max(1);
    if workers == 1 {
        return (0..n).map(task).collect();
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<T, RunnerError>)>();
    thread::scope(|scope| {
        let (next, abort, task) = (&next, &abort, &task);
        for _ in 0..workers {
            let tx = tx.clone();
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = task(i);
                if result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut slots: Vec<Option<Result<T, RunnerError>>> = (0..n).map(|_| None).collect();
    for (i, result) in rx.try_iter() {
        slots[i] = Some(result);
    }
    if slots.iter().any(|s| matches!(s, Some(Err(_)))) {
        for slot in slots {
            if let Some(Err(e)) = slot {
                return Err(e);
            }
        }
        unreachable!("an error slot was found and then lost");
    }
    Ok(slots
        .into_iter()
        .map(|slot| match slot {
            Some(Ok(value)) => value,
            // Only an aborting error leaves gaps, and that path returned
            // above.
            _ => unreachable!("item task neither completed nor errored"),
        })
        .collect())
}

/// Chance-corrected agreement between the per-item correctness of two
/// runs (a record is "correct" when its score is exactly 1). The runs
/// must cover the same item ids.
pub fn agreement(run_a: &RunResult, run_b: &RunResult) -> Result<f64, RunnerError> {
    let a = correctness_by_id(run_a);
    let b = correctness_by_id(run_b);
    if !a.keys().eq(b.keys()) {
        let example = a
            .keys()
            .find(|k| !b.contains_key(*k))
            .or_else(|| b.keys().find(|k| !a.contains_key(*k)))
            .cloned()
            .unwrap_or_default();
        return Err(RunnerError::ItemMismatch { example });
    }
    let va: Vec<bool> = a.values().copied().collect();
    let vb: Vec<bool> = b.values().copied().collect();
    Ok(cohens_kappa(&va, &vb)?)
}

/// Per-item correctness, keyed and ordered by item id. Individual-choice
/// runs store the item's score on each of its four records, so repeated
/// inserts are harmless.
pub(crate) fn correctness_by_id(run: &RunResult) -> BTreeMap<String, bool> {
    run.records
        .iter()
        .map(|r| (r.item_id.clone(), r.score == 1.0))
        .collect()
}
