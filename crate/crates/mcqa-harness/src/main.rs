//! Command-line front end: run experiments, build report tables, compare
//! runs, and export annotation samples.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcqa_harness::backend::http::HttpBackend;
use mcqa_harness::backend::mock::MockBackend;
use mcqa_harness::backend::{Backend, GenerationParams};
use mcqa_harness::dataset::{load_dataset, Dataset, Split};
use mcqa_harness::metrics::{majority_baseline, ScoreSummary, ScoringPolicy};
use mcqa_harness::report::{
    build_accuracy_table, build_kappa_table, build_validity_table, export_annotation_sample,
    ReportTable,
};
use mcqa_harness::runner::store::{read_manifest, MANIFEST_FILE};
use mcqa_harness::runner::{
    eval_subset, load_run, Experiment, RunConfig, RunResult, Runner,
};

#[derive(Parser)]
#[command(name = "mcqa", version, about = "Multiple-choice evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment against a backend and persist the run directory.
    Run(RunArgs),
    /// Build an accuracy or validity table from finished runs.
    Report(ReportArgs),
    /// Measure agreement between the per-item correctness of two runs.
    Kappa(KappaArgs),
    /// Sample a question-inference run for human annotation.
    ExportAnnotations(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment to run (e.g. `full-vs-choices-only`, `aqi-two-step`).
    #[arg(long)]
    experiment: Experiment,
    /// Evaluation-split JSONL.
    #[arg(long)]
    dataset: PathBuf,
    /// Training-split JSONL (exemplar pool).
    #[arg(long)]
    train: PathBuf,
    /// Few-shot exemplar count.
    #[arg(long, default_value_t = 5)]
    n_shot: usize,
    /// Base seed for every random decision in the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backend id: `http` (reads MCQA_BACKEND_URL / MCQA_BACKEND_TOKEN /
    /// MCQA_BACKEND_MODEL), `mock:oracle`, `mock:majority`, or
    /// `mock:constant:<TEXT>`.
    #[arg(long)]
    backend: String,
    /// How unparseable answers are scored.
    #[arg(long, default_value = "lenient")]
    policy: ScoringPolicy,
    /// Fraction of the evaluation set to run on, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    eval_fraction: f64,
    /// Items evaluated concurrently.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Draw a separate exemplar set per subject from that subject's
    /// training pool.
    #[arg(long)]
    per_subject_exemplars: bool,
    /// Split the exemplar draw evenly across `source` tags.
    #[arg(long)]
    source_balance: bool,
    /// Override the default completion length cap.
    #[arg(long)]
    max_new_tokens: Option<u32>,
    /// Override the default completion length floor.
    #[arg(long)]
    min_new_tokens: Option<u32>,
    /// Sampling temperature (omitted = greedy).
    #[arg(long)]
    temperature: Option<f64>,
    /// Decoding seed forwarded to the backend.
    #[arg(long)]
    gen_seed: Option<u64>,
    /// New directory for this run's outputs (one subdirectory per task).
    #[arg(long, required_unless_present = "resume", conflicts_with = "resume")]
    out: Option<PathBuf>,
    /// Existing run directory to continue after an interruption; cached
    /// completions are replayed, so finished items cost no backend calls.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories (or experiment directories holding several runs).
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Baseline to compare against; only `auto` (majority class of the
    /// evaluated subset) is supported.
    #[arg(long, default_value = "auto")]
    baseline: String,
    #[arg(long, value_enum, default_value = "md")]
    format: OutputFormat,
    /// Which table to build.
    #[arg(long, value_enum, default_value = "accuracy")]
    table: TableChoice,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long)]
    run_a: PathBuf,
    #[arg(long)]
    run_b: PathBuf,
    /// Also report mean agreement of run A against this many uniformly
    /// random labelings.
    #[arg(long)]
    random_baseline: Option<usize>,
    /// Seed for the random labelings.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "md")]
    format: OutputFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Question-inference run directory.
    #[arg(long)]
    run: PathBuf,
    /// Sample size.
    #[arg(short = 'n', long = "count")]
    count: usize,
    /// Split the sample evenly between correct and incorrect items.
    #[arg(long)]
    stratify: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path.
    #[arg(long, default_value = "annotations.jsonl")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Md,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableChoice {
    Accuracy,
    Validity,
}

fn main() -> std::process::ExitCode {
    env_logger::init();
    let result = match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
        Command::Kappa(args) => cmd_kappa(args),
        Command::ExportAnnotations(args) => cmd_export(args),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            // `:#` joins the context chain on one line.
            eprintln!("error: {err:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let train = load_dataset(&args.train, Split::Train)
        .with_context(|| format!("loading training split {}", args.train.display()))?;
    let eval = load_dataset(&args.dataset, Split::Eval)
        .with_context(|| format!("loading evaluation split {}", args.dataset.display()))?;
    let backend = build_backend(&args.backend, &eval)?;

    let mut config = RunConfig::new(args.experiment, &args.dataset, &args.train, backend.id());
    config.n_shot = args.n_shot;
    config.seed = args.seed;
    config.policy = args.policy;
    config.generation = generation_params(&args);
    config.parallelism = args.parallelism;
    config.per_subject_exemplars = args.per_subject_exemplars;
    config.source_balance = args.source_balance;
    config.eval_fraction = args.eval_fraction;

    let resuming = args.resume.is_some();
    let out_root = args
        .resume
        .or(args.out)
        .expect("clap enforces --out or --resume");
    check_out_root(&out_root, &config, resuming)?;
    std::fs::create_dir_all(&out_root)
        .with_context(|| format!("creating {}", out_root.display()))?;

    let runner = Runner::from_datasets(config, backend.as_ref(), &train, &eval)?;
    let results = runner.run_experiment(&out_root)?;
    for result in &results {
        println!(
            "{} on {}: mean {:.4} over {} items",
            result.label, result.dataset_name, result.summary.mean, result.summary.n
        );
        if result.extraction_failures > 0 {
            println!("  question extraction failed for {} items", result.extraction_failures);
        }
    }
    println!("run directory: {}", out_root.display());
    Ok(())
}

/// Refuse to clobber a directory that already holds runs, and refuse to
/// resume one produced by a different configuration.
fn check_out_root(out_root: &Path, config: &RunConfig, resuming: bool) -> Result<()> {
    for task in config.experiment.plan() {
        let dir = out_root.join(task.label());
        if !dir.join(MANIFEST_FILE).exists() {
            continue;
        }
        if !resuming {
            bail!(
                "`{}` already holds a run; pass --resume to continue it",
                dir.display()
            );
        }
        let manifest =
            read_manifest(&dir).with_context(|| format!("reading {}", dir.display()))?;
        if manifest.config != *config {
            bail!(
                "`{}` was started with a different configuration; refusing to resume it",
                dir.display()
            );
        }
    }
    Ok(())
}

fn generation_params(args: &RunArgs) -> GenerationParams {
    let mut generation = GenerationParams::default();
    if let Some(v) = args.max_new_tokens {
        generation.max_new_tokens = v;
    }
    if let Some(v) = args.min_new_tokens {
        generation.min_new_tokens = v;
    }
    if let Some(v) = args.temperature {
        generation.temperature = Some(v);
    }
    if let Some(v) = args.gen_seed {
        generation.seed = Some(v);
    }
    generation
}

fn build_backend(id: &str, eval: &Dataset) -> Result<Box<dyn Backend>> {
    match id {
        "http" => Ok(Box::new(HttpBackend::from_env()?)),
        "mock:oracle" => Ok(Box::new(MockBackend::oracle(eval))),
        "mock:majority" => Ok(Box::new(MockBackend::majority(eval))),
        other => {
            if let Some(text) = other.strip_prefix("mock:constant:") {
                Ok(Box::new(MockBackend::constant(text)))
            } else {
                bail!(
                    "unknown backend `{other}`; expected `http`, `mock:oracle`, \
                     `mock:majority`, or `mock:constant:<TEXT>`"
                )
            }
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    if args.baseline != "auto" {
        bail!("only `--baseline auto` (majority class of the evaluated subset) is supported");
    }
    let mut runs = Vec::new();
    for dir in &args.runs {
        runs.extend(collect_runs(dir)?);
    }
    let table = match args.table {
        TableChoice::Accuracy => {
            let baseline = auto_baseline(&runs)?;
            eprintln!(
                "baseline (majority class): mean {:.4} over {} items",
                baseline.mean, baseline.n
            );
            build_accuracy_table(&runs, &baseline)?
        }
        TableChoice::Validity => build_validity_table(&runs),
    };
    emit(&table, args.format, args.out.as_deref())
}

/// Load the run at `dir`, or — when `dir` itself holds no manifest — every
/// run in its immediate subdirectories, in name order.
fn collect_runs(dir: &Path) -> Result<Vec<RunResult>> {
    if dir.join(MANIFEST_FILE).exists() {
        let run = load_run(dir).with_context(|| format!("loading run {}", dir.display()))?;
        return Ok(vec![run]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| path.join(MANIFEST_FILE).exists())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        bail!("no run manifest in `{}` or its subdirectories", dir.display());
    }
    subdirs
        .iter()
        .map(|sub| load_run(sub).with_context(|| format!("loading run {}", sub.display())))
        .collect()
}

/// The majority-class baseline over the exact subset the runs evaluated.
/// All runs must have drawn that subset the same way.
fn auto_baseline(runs: &[RunResult]) -> Result<ScoreSummary> {
    let first = &runs[0];
    for run in runs {
        if run.config.dataset != first.config.dataset
            || run.config.eval_fraction != first.config.eval_fraction
            || run.config.seed != first.config.seed
        {
            bail!(
                "runs `{}` and `{}` did not evaluate the same subset; a shared baseline \
                 needs matching dataset, eval fraction, and seed",
                first.label,
                run.label
            );
        }
    }
    let eval = load_dataset(&first.config.dataset, Split::Eval)
        .with_context(|| format!("loading evaluation split {}", first.config.dataset.display()))?;
    let subset = eval_subset(&eval, first.config.eval_fraction, first.config.seed);
    Ok(majority_baseline(&subset)?)
}

fn cmd_kappa(args: KappaArgs) -> Result<()> {
    let run_a =
        load_run(&args.run_a).with_context(|| format!("loading run {}", args.run_a.display()))?;
    let run_b =
        load_run(&args.run_b).with_context(|| format!("loading run {}", args.run_b.display()))?;
    let random = args.random_baseline.map(|trials| (trials, args.seed));
    let table = build_kappa_table(&run_a, &run_b, random)?;
    emit(&table, args.format, args.out.as_deref())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let run =
        load_run(&args.run).with_context(|| format!("loading run {}", args.run.display()))?;
    let dataset = load_dataset(&run.config.dataset, Split::Eval)
        .with_context(|| format!("loading evaluation split {}", run.config.dataset.display()))?;
    let rows = export_annotation_sample(&run, &dataset, args.count, args.stratify, args.seed, &args.out)?;
    println!("wrote {} annotation rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn emit(table: &ReportTable, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Md => table.to_markdown(),
        OutputFormat::Json => table.to_json(),
        OutputFormat::Csv => table.to_csv(),
    };
    match out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
