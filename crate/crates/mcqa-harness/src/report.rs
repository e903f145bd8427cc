//! Tables and exports over persisted runs.
//!
//! Reports are pure functions of stored [`RunResult`]s: accuracy tables
//! with significance stars against a baseline, agreement tables, validity
//! tables, and JSONL samples for human annotation. Tables serialize to
//! JSON and CSV losslessly — emit → parse → emit is byte-identical — and
//! to Markdown for reading.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Letter};
use crate::metrics::{random_kappa_baseline, welch_t_test, MetricsError, ScoreSummary};
use crate::parse::AnswerStatus;
use crate::runner::store::Experiment;
use crate::runner::{agreement, correctness_by_id, RunResult, RunnerError};

/// The per-item accuracy difference must be this unlikely under the null
/// before a run earns a significance star.
pub const STAR_P_THRESHOLD: f64 = 5e-5;
/// Validity rates below this are flagged in validity tables.
pub const VALIDITY_FLAG_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Accuracy,
    Kappa,
    Validity,
}

impl TableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TableKind::Accuracy => "accuracy",
            TableKind::Kappa => "kappa",
            TableKind::Validity => "validity",
        }
    }
}

/// One table line. `mark` means: significant outperformance (accuracy
/// tables) or a sub-threshold validity rate (validity tables); it is
/// always false in kappa tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub dataset: String,
    pub value: f64,
    pub mark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub kind: TableKind,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("runs span different datasets (`{a}` vs `{b}`)")]
    MixedDatasets { a: String, b: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("run `{label}` is not a question-inference run and has no generated questions")]
    NotAqiRun { label: String },
    #[error("{stratum} stratum has {available} records, fewer than the {needed} requested")]
    StratumTooSmall {
        stratum: String,
        needed: usize,
        available: usize,
    },
    #[error("record references item `{item_id}` which is not in the dataset")]
    UnknownItem { item_id: String },
    #[error("report i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unreadable table: {message}")]
    Parse { message: String },
}

fn require_same_dataset(runs: &[&RunResult]) -> Result<(), ReportError> {
    for pair in runs.windows(2) {
        if pair[0].dataset_name != pair[1].dataset_name {
            return Err(ReportError::MixedDatasets {
                a: pair[0].dataset_name.clone(),
                b: pair[1].dataset_name.clone(),
            });
        }
    }
    Ok(())
}

/// One row per run: mean accuracy, starred when the run significantly
/// outperforms the baseline — two-sided Welch p below
/// [`STAR_P_THRESHOLD`] *and* a mean strictly above the baseline's.
pub fn build_accuracy_table(
    runs: &[RunResult],
    baseline: &ScoreSummary,
) -> Result<ReportTable, ReportError> {
    require_same_dataset(&runs.iter().collect::<Vec<_>>())?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let test = welch_t_test(&run.summary.per_item, &baseline.per_item)?;
        rows.push(ReportRow {
            label: run.label.clone(),
            dataset: run.dataset_name.clone(),
            value: run.summary.mean,
            mark: test.p < STAR_P_THRESHOLD && run.summary.mean > baseline.mean,
        });
    }
    Ok(ReportTable {
        kind: TableKind::Accuracy,
        rows,
    })
}

/// One row per (run, prompt kind): the fraction of records whose answer
/// parsed as valid, flagged when under [`VALIDITY_FLAG_THRESHOLD`]. A run
/// normally holds one kind; question-inference runs can mix in
/// generation-step records for items whose question never materialized.
pub fn build_validity_table(runs: &[RunResult]) -> ReportTable {
    let mut rows = Vec::new();
    for run in runs {
        let mut by_kind: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
        for record in &run.records {
            let (valid, total) = by_kind.entry(record.kind.as_str()).or_insert((0, 0));
            *total += 1;
            if record.parsed.status.is_valid() {
                *valid += 1;
            }
        }
        for (kind, (valid, total)) in by_kind {
            let value = valid as f64 / total as f64;
            rows.push(ReportRow {
                label: format!("{}/{}", run.label, kind),
                dataset: run.dataset_name.clone(),
                value,
                mark: value < VALIDITY_FLAG_THRESHOLD,
            });
        }
    }
    ReportTable {
        kind: TableKind::Validity,
        rows,
    }
}

/// Agreement between the per-item correctness of two runs, with an
/// optional chance reference: the mean agreement of run A against
/// `trials` uniformly random labelings.
pub fn build_kappa_table(
    run_a: &RunResult,
    run_b: &RunResult,
    random_baseline: Option<(usize, u64)>,
) -> Result<ReportTable, ReportError> {
    require_same_dataset(&[run_a, run_b])?;
    let kappa = agreement(run_a, run_b)?;
    let mut rows = vec![ReportRow {
        label: format!("{} vs {}", run_a.label, run_b.label),
        dataset: run_a.dataset_name.clone(),
        value: kappa,
        mark: false,
    }];
    if let Some((trials, seed)) = random_baseline {
        let a: Vec<bool> = correctness_by_id(run_a).into_values().collect();
        rows.push(ReportRow {
            label: format!("{} vs random ({trials} trials)", run_a.label),
            dataset: run_a.dataset_name.clone(),
            value: random_kappa_baseline(&a, trials, seed)?,
            mark: false,
        });
    }
    Ok(ReportTable {
        kind: TableKind::Kappa,
        rows,
    })
}

/// One exportable judgment: everything an annotator needs to assess a
/// generated question and the answer it led to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub item_id: String,
    pub question: String,
    pub choices: [String; 4],
    pub gold: Letter,
    /// The question the model produced; absent when extraction failed.
    pub q_gen: Option<String>,
    /// The letter the model finally chose, when one parsed.
    pub selected: Option<Letter>,
    pub score: f64,
}

/// Sample `n` records of a question-inference run for human annotation
/// and write them as JSONL, joined with the original items. With
/// `stratify_by_correctness`, the sample is split into ⌈n/2⌉ fully
/// correct and ⌊n/2⌋ not-fully-correct records; either stratum running
/// short is an error naming it. Returns the rows in item-id order.
pub fn export_annotation_sample(
    run: &RunResult,
    dataset: &Dataset,
    n: usize,
    stratify_by_correctness: bool,
    seed: u64,
    out: &Path,
) -> Result<Vec<AnnotationRow>, ReportError> {
    if !matches!(
        run.config.experiment,
        Experiment::AqiTwoStep | Experiment::AqiOneStep
    ) {
        return Err(ReportError::NotAqiRun {
            label: run.label.clone(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = if stratify_by_correctness {
        let correct: Vec<usize> = (0..run.records.len())
            .filter(|&i| run.records[i].score == 1.0)
            .collect();
        let incorrect: Vec<usize> = (0..run.records.len())
            .filter(|&i| run.records[i].score != 1.0)
            .collect();
        let want_correct = n.div_ceil(2);
        let want_incorrect = n / 2;
        let mut take = sample_from(&correct, want_correct, "correct", &mut rng)?;
        take.extend(sample_from(&incorrect, want_incorrect, "incorrect", &mut rng)?);
        take
    } else {
        sample_from(&(0..run.records.len()).collect::<Vec<_>>(), n, "whole-run", &mut rng)?
    };
    picked.sort_unstable();

    let mut rows = Vec::with_capacity(picked.len());
    for idx in picked {
        let record = &run.records[idx];
        let item = dataset
            .items
            .iter()
            .find(|i| i.id == record.item_id)
            .ok_or_else(|| ReportError::UnknownItem {
                item_id: record.item_id.clone(),
            })?;
        let selected = match record.parsed.status {
            AnswerStatus::ValidLetter(letter) => Some(letter),
            _ => None,
        };
        rows.push(AnnotationRow {
            item_id: item.id.clone(),
            question: item.question.clone(),
            choices: item.choices.clone(),
            gold: item.gold,
            q_gen: record.aux.clone(),
            selected,
            score: record.score,
        });
    }

    let file = File::create(out).map_err(|e| ReportError::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut writer = BufWriter::new(file);
    for row in &rows {
        let line = serde_json::to_string(row).expect("annotation row serializes");
        writeln!(writer, "{line}").map_err(|e| ReportError::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| ReportError::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    Ok(rows)
}

/// Draw `want` distinct elements of `pool` in seeded order, erroring with
/// the stratum name when the pool is too small.
fn sample_from(
    pool: &[usize],
    want: usize,
    stratum: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, ReportError> {
    if pool.len() < want {
        return Err(ReportError::StratumTooSmall {
            stratum: stratum.to_string(),
            needed: want,
            available: pool.len(),
        });
    }
    Ok(rand::seq::index::sample(rng, pool.len(), want)
        .iter()
        .map(|i| pool[i])
        .collect())
}

impl ReportTable {
    /// Pretty-printed JSON, ending in a newline.
    pub fn to_json(&self) -> String {
        let mut body = serde_json::to_string_pretty(self).expect("table serializes");
        body.push('\n');
        body
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Parse {
            message: e.to_string(),
        })
    }

    /// CSV with a `kind,label,dataset,value,mark` header; the mark column
    /// holds `*` or nothing. Values print in Rust's shortest round-trip
    /// form, so re-emitting a parsed table reproduces it byte for byte.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["kind", "label", "dataset", "value", "mark"])
            .expect("csv header");
        for row in &self.rows {
            writer
                .write_record([
                    self.kind.as_str(),
                    &row.label,
                    &row.dataset,
                    &row.value.to_string(),
                    if row.mark { "*" } else { "" },
                ])
                .expect("csv row");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv is utf-8")
    }

    /// Parse [`ReportTable::to_csv`] output. A table with no rows has no
    /// kind column to read back and is taken to be an accuracy table.
    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let parse_err = |message: String| ReportError::Parse { message };
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut kind = TableKind::Accuracy;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            if record.len() != 5 {
                return Err(parse_err(format!(
                    "expected 5 columns, found {}",
                    record.len()
                )));
            }
            kind = match &record[0] {
                "accuracy" => TableKind::Accuracy,
                "kappa" => TableKind::Kappa,
                "validity" => TableKind::Validity,
                other => return Err(parse_err(format!("unknown table kind `{other}`"))),
            };
            rows.push(ReportRow {
                label: record[1].to_string(),
                dataset: record[2].to_string(),
                value: record[3]
                    .parse()
                    .map_err(|e| parse_err(format!("bad value `{}`: {e}", &record[3])))?,
                mark: match &record[4] {
                    "*" => true,
                    "" => false,
                    other => return Err(parse_err(format!("bad mark `{other}`"))),
                },
            });
        }
        Ok(ReportTable { kind, rows })
    }

    /// A Markdown table for reading; not meant to be parsed back.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let heading = match self.kind {
            TableKind::Accuracy => "Accuracy",
            TableKind::Kappa => "Agreement",
            TableKind::Validity => "Validity",
        };
        let _ = writeln!(out, "## {heading}");
        let _ = writeln!(out);
        let _ = writeln!(out, "| Label | Dataset | Value | Mark |");
        let _ = writeln!(out, "|---|---|---:|:-:|");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {} |",
                row.label,
                row.dataset,
                row.value,
                if row.mark { "*" } else { "" }
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ScoringPolicy;
    use crate::parse::ParsedAnswer;
    use crate::promptkit::PromptKind;
    use crate::runner::{EvalRecord, RunConfig};

    fn run_with_scores(label: &str, dataset: &str, scores: &[f64]) -> RunResult {
        run_with(label, dataset, PromptKind::Full, scores, Experiment::FullVsChoicesOnly)
    }

    fn run_with(
        label: &str,
        dataset: &str,
        kind: PromptKind,
        scores: &[f64],
        experiment: Experiment,
    ) -> RunResult {
        let records: Vec<EvalRecord> = scores
            .iter()
            .enumerate()
            .map(|(i, score)| {
                let valid = *score == 1.0;
                EvalRecord {
                    item_id: format!("item-{i:04}"),
                    kind,
                    raw: " (A)".to_string(),
                    parsed: ParsedAnswer {
                        status: if valid {
                            AnswerStatus::ValidLetter(Letter::A)
                        } else {
                            AnswerStatus::Invalid
                        },
                        matched_span: valid.then_some((1, 3)),
                        raw: " (A)".to_string(),
                    },
                    score: *score,
                    aux: Some(format!("Generated question {i}?")),
                }
            })
            .collect();
        RunResult {
            config: RunConfig::new(experiment, "eval.jsonl", "train.jsonl", "mock:test"),
            label: label.to_string(),
            dataset_name: dataset.to_string(),
            n_items: scores.len(),
            dropped_item_count: 0,
            started: "2024-01-01T00:00:00+00:00".to_string(),
            finished: "2024-01-01T00:00:09+00:00".to_string(),
            summary: ScoreSummary::from_scores(scores.to_vec(), ScoringPolicy::Lenient),
            extraction_failures: 0,
            records,
        }
    }

    fn quarterish_baseline(n: usize) -> ScoreSummary {
        // Roughly one hit in four, with real variance in the vector.
        let scores: Vec<f64> = (0..n).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        ScoreSummary::from_scores(scores, ScoringPolicy::Lenient)
    }

    #[test]
    fn clear_outperformance_earns_a_star() {
        let run = run_with_scores("full", "eval", &vec![1.0; 1000]);
        let baseline = quarterish_baseline(1000);
        let table = build_accuracy_table(std::slice::from_ref(&run), &baseline).unwrap();
        assert_eq!(table.kind, TableKind::Accuracy);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].value, 1.0);
        assert!(table.rows[0].mark);
    }

    #[test]
    fn matching_or_trailing_runs_get_no_star() {
        let baseline = quarterish_baseline(1000);
        // Identical per-item vector: degenerate test, p = 1.
        let same = run_with_scores("same", "eval", &baseline.per_item);
        // Significantly *below* the baseline: direction rules the star out.
        let worse = run_with_scores("worse", "eval", &vec![0.0; 1000]);
        let table = build_accuracy_table(&[same, worse], &baseline).unwrap();
        assert!(!table.rows[0].mark);
        assert!(!table.rows[1].mark);
        assert!(table.rows[1].value < baseline.mean);
    }

    #[test]
    fn empty_run_list_builds_an_empty_table() {
        let table = build_accuracy_table(&[], &quarterish_baseline(8)).unwrap();
        assert!(table.rows.is_empty());
    }

    #[test]
    fn mixed_datasets_are_rejected() {
        let a = run_with_scores("full", "eval-one", &[1.0, 0.0]);
        let b = run_with_scores("full", "eval-two", &[1.0, 0.0]);
        let err = build_accuracy_table(&[a, b], &quarterish_baseline(2)).unwrap_err();
        assert!(matches!(err, ReportError::MixedDatasets { .. }), "{err}");
    }

    #[test]
    fn validity_rows_flag_sub_threshold_rates() {
        let mut scores = vec![1.0; 18];
        scores.extend([0.25, 0.25]); // two invalid records: 90% validity
        let shaky = run_with_scores("full", "eval", &scores);
        let clean = run_with_scores("choices_only", "eval", &[1.0; 4]);
        let table = build_validity_table(&[shaky, clean]);
        assert_eq!(table.kind, TableKind::Validity);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].label, "full/full");
        assert!((table.rows[0].value - 0.9).abs() < 1e-12);
        assert!(table.rows[0].mark);
        assert_eq!(table.rows[1].value, 1.0);
        assert!(!table.rows[1].mark);
    }

    #[test]
    fn mixed_kind_runs_get_one_validity_row_per_kind() {
        let mut run = run_with(
            "aqi_two_step",
            "eval",
            PromptKind::SelfAsk,
            &[1.0, 1.0, 0.25],
            Experiment::AqiTwoStep,
        );
        // The third item's question never materialized: its record stays
        // on the generation step.
        run.records[2].kind = PromptKind::QuestionGeneration;
        let table = build_validity_table(std::slice::from_ref(&run));
        let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            ["aqi_two_step/question_generation", "aqi_two_step/self_ask"]
        );
    }

    #[test]
    fn kappa_table_matches_agreement() {
        let a = run_with_scores("aqi_two_step", "eval", &[1.0, 1.0, 0.0, 0.0]);
        let b = run_with_scores("choices_only", "eval", &[1.0, 0.0, 1.0, 0.0]);
        let table = build_kappa_table(&a, &b, None).unwrap();
        assert_eq!(table.kind, TableKind::Kappa);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].value, agreement(&a, &b).unwrap());
        assert_eq!(table.rows[0].label, "aqi_two_step vs choices_only");

        let with_reference = build_kappa_table(&a, &b, Some((500, 11))).unwrap();
        assert_eq!(with_reference.rows.len(), 2);
        assert!(with_reference.rows[1].value.abs() < 0.2);
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let run = run_with_scores("full", "eval", &[1.0, 0.0, 0.25]);
        let table = build_accuracy_table(
            std::slice::from_ref(&run),
            &quarterish_baseline(3),
        )
        .unwrap();
        let emitted = table.to_json();
        let reparsed = ReportTable::from_json(&emitted).unwrap();
        assert_eq!(reparsed, table);
        assert_eq!(reparsed.to_json(), emitted);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let table = ReportTable {
            kind: TableKind::Validity,
            rows: vec![
                ReportRow {
                    label: "full/full".to_string(),
                    dataset: "eval".to_string(),
                    value: 2.0 / 3.0,
                    mark: true,
                },
                ReportRow {
                    // Exercises CSV quoting.
                    label: "choices,only".to_string(),
                    dataset: "eval \"primary\"".to_string(),
                    value: 1.0,
                    mark: false,
                },
            ],
        };
        let emitted = table.to_csv();
        let reparsed = ReportTable::from_csv(&emitted).unwrap();
        assert_eq!(reparsed, table);
        assert_eq!(reparsed.to_csv(), emitted);
        assert!(emitted.starts_with("kind,label,dataset,value,mark\n"));
        assert!(emitted.contains("\"choices,only\""));
    }

    #[test]
    fn csv_parsing_rejects_garbage() {
        assert!(ReportTable::from_csv("kind,label,dataset,value,mark\nbogus,a,b,0.5,\n").is_err());
        assert!(
            ReportTable::from_csv("kind,label,dataset,value,mark\naccuracy,a,b,not-a-number,\n")
                .is_err()
        );
        assert!(
            ReportTable::from_csv("kind,label,dataset,value,mark\naccuracy,a,b,0.5,?\n").is_err()
        );
        // Header-only input parses as an empty table and re-emits the
        // same bytes.
        let empty = "kind,label,dataset,value,mark\n";
        let table = ReportTable::from_csv(empty).unwrap();
        assert!(table.rows.is_empty());
        assert_eq!(table.to_csv(), empty);
    }

    #[test]
    fn markdown_shows_marks() {
        let table = ReportTable {
            kind: TableKind::Accuracy,
            rows: vec![ReportRow {
                label: "choices_only".to_string(),
                dataset: "eval".to_string(),
                value: 0.585,
                mark: true,
            }],
        };
        let md = table.to_markdown();
        assert!(md.contains("## Accuracy"));
        assert!(md.contains("| choices_only | eval | 0.5850 | * |"));
    }

    fn aqi_dataset(n: usize) -> Dataset {
        use crate::dataset::{McqaItem, Split};
        Dataset {
            name: "eval".to_string(),
            split: Split::Eval,
            items: (0..n)
                .map(|i| McqaItem {
                    id: format!("item-{i:04}"),
                    question: format!("Original question {i}?"),
                    choices: [
                        format!("{i} alpha"),
                        format!("{i} beta"),
                        format!("{i} gamma"),
                        format!("{i} delta"),
                    ],
                    gold: Letter::ALL[i % 4],
                    subject: None,
                    source: None,
                })
                .collect(),
            dropped: 0,
        }
    }

    #[test]
    fn stratified_export_splits_half_and_half() {
        let scores: Vec<f64> = (0..10).map(|i| if i < 6 { 1.0 } else { 0.0 }).collect();
        let run = run_with("aqi_two_step", "eval", PromptKind::SelfAsk, &scores, Experiment::AqiTwoStep);
        let dataset = aqi_dataset(10);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("annotations.jsonl");
        let rows = export_annotation_sample(&run, &dataset, 6, true, 3, &out).unwrap();

        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.score == 1.0).count(), 3);
        assert_eq!(rows.iter().filter(|r| r.score != 1.0).count(), 3);
        assert!(rows.windows(2).all(|w| w[0].item_id < w[1].item_id));
        assert!(rows.iter().all(|r| r.q_gen.is_some()));

        // The file holds exactly the returned rows, one JSON object per line.
        let body = std::fs::read_to_string(&out).unwrap();
        let parsed: Vec<AnnotationRow> = body
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, rows);

        // Same seed, same sample; different seed, (almost surely) different.
        let again = export_annotation_sample(&run, &dataset, 6, true, 3, &out).unwrap();
        assert_eq!(again, rows);
    }

    #[test]
    fn export_errors_name_the_short_stratum() {
        let scores: Vec<f64> = (0..10).map(|i| if i < 6 { 1.0 } else { 0.0 }).collect();
        let run = run_with("aqi_two_step", "eval", PromptKind::SelfAsk, &scores, Experiment::AqiTwoStep);
        let dataset = aqi_dataset(10);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("annotations.jsonl");
        // 10 stratified needs 5 incorrect; only 4 exist.
        match export_annotation_sample(&run, &dataset, 10, true, 3, &out).unwrap_err() {
            ReportError::StratumTooSmall {
                stratum,
                needed,
                available,
            } => {
                assert_eq!(stratum, "incorrect");
                assert_eq!(needed, 5);
                assert_eq!(available, 4);
            }
            other => panic!("unexpected error: {other}"),
        }
        // Unstratified sampling is bounded by the run size.
        assert!(matches!(
            export_annotation_sample(&run, &dataset, 11, false, 3, &out).unwrap_err(),
            ReportError::StratumTooSmall { .. }
        ));
    }

    #[test]
    fn export_rejects_non_aqi_runs() {
        let run = run_with_scores("full", "eval", &[1.0, 0.0]);
        let dataset = aqi_dataset(2);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("annotations.jsonl");
        assert!(matches!(
            export_annotation_sample(&run, &dataset, 1, false, 3, &out).unwrap_err(),
            ReportError::NotAqiRun { .. }
        ));
    }

    #[test]
    fn export_joins_records_with_their_items() {
        let run = run_with(
            "aqi_one_step",
            "eval",
            PromptKind::OneStepAqi,
            &[1.0, 0.0, 1.0],
            Experiment::AqiOneStep,
        );
        let dataset = aqi_dataset(3);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("annotations.jsonl");
        let rows = export_annotation_sample(&run, &dataset, 3, false, 9, &out).unwrap();
        for row in &rows {
            let item = dataset.items.iter().find(|i| i.id == row.item_id).unwrap();
            assert_eq!(row.question, item.question);
            assert_eq!(row.choices, item.choices);
            assert_eq!(row.gold, item.gold);
        }
        // A record pointing at a missing item is an error, not a skip.
        let tiny = aqi_dataset(1);
        assert!(matches!(
            export_annotation_sample(&run, &tiny, 3, false, 9, &out).unwrap_err(),
            ReportError::UnknownItem { .. }
        ));
    }
}
