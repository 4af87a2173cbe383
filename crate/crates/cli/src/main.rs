//! `polytrans`: validate a corpus, run translation experiments, report.
//!
//! Exit status: 0 success, 1 domain failure (failing solutions, bad
//! configuration or inputs), 2 environment failure (missing toolchains,
//! provider errors, interruption).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use polytrans::exec::{validate_corpus, Judge, SolutionStatus, Toolchains, ValidationReport};
use polytrans::lang::ProgrammingLanguage;
use polytrans::llm::{CacheStore, ModelConfig};
use polytrans::metrics::{
    aggregate, compare_strategies, read_attempts_csv, read_records, released_after, write_attempts_csv, write_grid,
    write_pass_report, AggregateOptions, AttemptRow, Dimension, ReportFormat,
};
use polytrans::run::{Run, RunConfig, RunError, RunStatus};
use polytrans::strategy::{AttemptBudget, StrategyKind};
use polytrans::task::{enumerate_tasks, load_corpus, Difficulty};

mod report_text;

#[derive(Parser)]
#[command(name = "polytrans", version, about = "Multi-language program translation with LLMs, judged by execution")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every reference solution passes its own tests.
    Validate(ValidateArgs),
    /// Plan and execute a translation run, or resume one.
    Translate(TranslateArgs),
    /// Compute pass@k and relative improvements from run records.
    Report(ReportArgs),
    /// Inspect or clear the completion cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Take corpus, toolchains and limits from a run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    toolchains: Option<PathBuf>,
    /// Skip languages whose toolchain is unavailable instead of failing.
    #[arg(long)]
    skip_missing: bool,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue the run with this id under the output directory.
    #[arg(long, conflicts_with = "run_id")]
    resume: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    skip_validate: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that take precedence over the configuration file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions base URL, or `mock`.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Strategies, e.g. `D,P,PC,D&P,D&PC,D_and_PL:java`.
    #[arg(long = "strategy", value_delimiter = ',')]
    strategies: Vec<StrategyKind>,
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    difficulty: Vec<Difficulty>,
    #[arg(long, value_delimiter = ',')]
    source: Vec<ProgrammingLanguage>,
    #[arg(long, value_delimiter = ',')]
    target: Vec<ProgrammingLanguage>,
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
    #[arg(long)]
    released_after: Option<NaiveDate>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    #[arg(long)]
    toolchains: Option<PathBuf>,
    /// Stop judging a candidate at its first failing test.
    #[arg(long)]
    early_exit: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory, or run id under --runs-dir. Repeatable.
    #[arg(long = "run")]
    runs: Vec<String>,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Attempt table (CSV) to include. Repeatable.
    #[arg(long = "attempts")]
    attempts: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    k: Vec<u32>,
    #[arg(long, default_value = "difficulty,strategy")]
    group_by: String,
    /// Base strategy for relative improvements.
    #[arg(long)]
    base: Option<StrategyKind>,
    /// Treatments compared to the base; defaults to every other strategy.
    #[arg(long = "treatment", value_delimiter = ',')]
    treatments: Vec<StrategyKind>,
    /// k of the improvement grid; defaults to the largest --k.
    #[arg(long)]
    grid_k: Option<u32>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<ReportFormat>,
    /// Keep only problems released strictly after this date.
    #[arg(long)]
    released_after: Option<NaiveDate>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    #[arg(long, default_value = "report")]
    name: String,
    /// Leave out units lacking attempts instead of failing.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Subcommand)]
enum CacheAction {
    Stats(CacheArgs),
    Clear(CacheArgs),
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Domain(String),
    Environment(String),
}

impl Failure {
    fn domain(e: impl std::fmt::Display) -> Self {
        Self::Domain(e.to_string())
    }

    fn env(e: impl std::fmt::Display) -> Self {
        Self::Environment(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_environment() {
            Self::env(e)
        } else {
            Self::domain(e)
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    // usage errors are input errors: exit 1, since 2 means the environment failed
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();

    let result = match cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Report(a) => cmd_report(a),
        Command::Cache { action } => cmd_cache(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Environment(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(Failure::domain),
        None => Ok(RunConfig::default()),
    }
}

fn load_toolchains(path: Option<&Path>) -> Result<Toolchains, Failure> {
    match path {
        Some(p) => Toolchains::load(p).map_err(Failure::domain),
        None => Ok(Toolchains::default()),
    }
}

fn workers(jobs: usize) -> usize {
    if jobs > 0 {
        jobs
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn print_validation(report: &ValidationReport) {
    for check in &report.checks {
        if check.status == SolutionStatus::Passed || check.status == SolutionStatus::Skipped {
            continue;
        }
        let status = match check.status {
            SolutionStatus::Failed => "FAILED",
            _ => "TOOLCHAIN MISSING",
        };
        let mut line = format!("{status} {}/{}", check.problem_id, check.language);
        if let Some(b) = check.build_status {
            line.push_str(&format!(" build={}", serde_json::to_value(b).unwrap_or_default().as_str().unwrap_or("")));
        }
        if !check.failing_tests.is_empty() {
            let idx: Vec<String> = check.failing_tests.iter().map(|(i, _)| i.to_string()).collect();
            line.push_str(&format!(" failing_tests=[{}]", idx.join(",")));
        }
        if !check.detail.is_empty() {
            line.push_str(&format!(" :: {}", check.detail.lines().next().unwrap_or("")));
        }
        println!("{line}");
    }
    for (problem, langs) in &report.incomplete {
        let langs: Vec<&str> = langs.iter().map(|l| l.id()).collect();
        println!("INCOMPLETE {problem}: no solution in {}", langs.join(", "));
    }
    if !report.skipped_languages.is_empty() {
        let langs: Vec<&str> = report.skipped_languages.iter().map(|l| l.id()).collect();
        println!("SKIPPED languages (toolchain unavailable): {}", langs.join(", "));
    }
    println!(
        "passed {} failed {} toolchain_missing {} skipped {} of {} solutions",
        report.count(SolutionStatus::Passed),
        report.count(SolutionStatus::Failed),
        report.count(SolutionStatus::ToolchainMissing),
        report.count(SolutionStatus::Skipped),
        report.checks.len()
    );
}

fn missing_languages(report: &ValidationReport) -> Vec<ProgrammingLanguage> {
    let set: BTreeSet<_> = report
        .checks
        .iter()
        .filter(|c| c.status == SolutionStatus::ToolchainMissing)
        .map(|c| c.language)
        .collect();
    set.into_iter().collect()
}

fn validation_outcome(report: &ValidationReport) -> Outcome {
    let failed: Vec<String> = report.failures().map(|c| format!("{}/{}", c.problem_id, c.language)).collect();
    if !failed.is_empty() {
        return Err(Failure::Domain(format!("{} reference solutions failed: {}", failed.len(), failed.join(", "))));
    }
    let missing = missing_languages(report);
    if !missing.is_empty() {
        let langs: Vec<&str> = missing.iter().map(|l| l.id()).collect();
        return Err(Failure::Environment(format!(
            "toolchains unavailable for: {} (use --skip-missing to skip these languages)",
            langs.join(", ")
        )));
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Outcome {
    let config = load_config(args.config.as_deref())?;
    let corpus_dir = args.corpus.unwrap_or(config.corpus.clone());
    let toolchains = load_toolchains(args.toolchains.as_deref().or(config.toolchains.as_deref()))?;
    let corpus = load_corpus(&corpus_dir).map_err(Failure::domain)?;
    let judge = Judge::new(toolchains, config.limits.clone());
    let report = validate_corpus(&corpus, &judge, args.skip_missing, workers(args.jobs)).map_err(Failure::env)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Failure::domain)?);
    } else {
        print_validation(&report);
    }
    validation_outcome(&report)
}

fn apply_overrides(config: &mut RunConfig, o: Overrides) {
    if let Some(v) = o.corpus {
        config.corpus = v;
    }
    if let Some(v) = o.output_dir {
        config.output_dir = v;
    }
    if let Some(v) = o.cache_dir {
        config.cache_dir = Some(v);
    }
    if o.model.is_some() || o.endpoint.is_some() {
        let model = o.model.unwrap_or_else(|| config.translator.model_id.clone());
        let endpoint = o.endpoint.unwrap_or_else(|| config.translator.endpoint.clone());
        config.translator = ModelConfig {
            model_id: model,
            endpoint,
            ..config.translator.clone()
        };
    }
    if let Some(v) = o.api_key_env {
        config.translator.api_key_env = Some(v);
    }
    if let Some(v) = o.temperature {
        config.translator.temperature = v;
    }
    if let Some(v) = o.mock_script {
        config.mock_script = Some(v);
    }
    if !o.strategies.is_empty() {
        config.strategies = o.strategies;
    }
    if let Some(v) = o.budget {
        config.budget = AttemptBudget::new(v);
    }
    if let Some(v) = o.repeats {
        config.repeats = v;
    }
    if let Some(v) = o.parallelism {
        config.parallelism = v;
    }
    if !o.difficulty.is_empty() {
        config.filter.difficulties = Some(o.difficulty.into_iter().collect());
    }
    if !o.source.is_empty() {
        config.filter.source_languages = Some(o.source.into_iter().collect());
    }
    if !o.target.is_empty() {
        config.filter.target_languages = Some(o.target.into_iter().collect());
    }
    if !o.problem.is_empty() {
        config.filter.problem_ids = Some(o.problem.into_iter().collect());
    }
    if let Some(v) = o.released_after {
        config.filter.released_after = Some(v);
    }
    if let Some(v) = o.templates_dir {
        config.templates_dir = Some(v);
    }
    if let Some(v) = o.toolchains {
        config.toolchains = Some(v);
    }
    if o.early_exit {
        config.early_exit = true;
    }
}

/// Checks reference solutions and target toolchains before anything is
/// written or requested.
fn preflight(config: &RunConfig, skip_validate: bool) -> Outcome {
    let corpus = load_corpus(&config.corpus).map_err(Failure::domain)?;
    let toolchains = load_toolchains(config.toolchains.as_deref())?;
    let tasks = enumerate_tasks(&corpus, &config.filter);
    let languages: BTreeSet<ProgrammingLanguage> = tasks.iter().map(|t| t.target_language).collect();
    let missing: Vec<&str> = languages.iter().filter(|l| !toolchains.available(**l)).map(|l| l.id()).collect();
    if !missing.is_empty() {
        return Err(Failure::Environment(format!(
            "toolchains unavailable for target languages: {} (narrow --target or install them)",
            missing.join(", ")
        )));
    }
    if skip_validate {
        return Ok(());
    }
    let judge = Judge::new(toolchains, config.limits.clone());
    let report = validate_corpus(&corpus, &judge, true, config.workers()).map_err(Failure::env)?;
    let failed: Vec<String> = report
        .failures()
        .filter(|c| tasks.iter().any(|t| t.problem.id == c.problem_id && t.source_language == c.language))
        .map(|c| format!("{}/{}", c.problem_id, c.language))
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Domain(format!(
            "reference solutions fail their tests: {} (fix them or pass --skip-validate)",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn cmd_translate(args: TranslateArgs) -> Outcome {
    let run = if let Some(id) = &args.resume {
        let config = load_config(args.config.as_deref())?;
        let output_dir = args.overrides.output_dir.clone().unwrap_or(config.output_dir);
        Run::open(&output_dir.join(id), args.overrides.parallelism)?
    } else {
        let mut config = load_config(args.config.as_deref())?;
        apply_overrides(&mut config, args.overrides);
        config.validate().map_err(|e| Failure::from(RunError::from(e)))?;
        preflight(&config, args.skip_validate)?;
        Run::create(config, args.run_id.clone())?
    };

    let cancel = Arc::new(AtomicBool::new(false));
    install_interrupt_handler(cancel.clone());

    eprintln!(
        "run {} at {}: {} items ({} pairs skipped)",
        run.run_id,
        run.dir.display(),
        run.plan.items.len(),
        run.plan.skipped.len()
    );
    let summary = run.execute(&cancel)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Failure::domain)?);
    match summary.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Interrupted => Err(Failure::Environment(format!(
            "interrupted after {} of {} items; resume with --resume {}",
            summary.items_done, summary.items_total, summary.run_id
        ))),
    }
}

/// First SIGINT stops scheduling new items; a second one exits at once.
fn install_interrupt_handler(cancel: Arc<AtomicBool>) {
    let action = move || {
        if cancel.swap(true, Ordering::SeqCst) {
            unsafe { libc::_exit(2) };
        }
        let msg = b"interrupt: finishing in-flight items, press Ctrl-C again to abort\n";
        // eprintln! may allocate or lock; write(2) is async-signal-safe.
        unsafe { libc::write(2, msg.as_ptr().cast(), msg.len()) };
    };
    if let Err(e) = unsafe { signal_hook_registry::register(libc::SIGINT, action) } {
        tracing::warn!(error = %e, "could not install the interrupt handler");
    }
}

fn collect_rows(args: &ReportArgs) -> Result<Vec<AttemptRow>, Failure> {
    let mut rows = Vec::new();
    for r in &args.runs {
        let direct = PathBuf::from(r);
        let dir = if direct.is_dir() { direct } else { args.runs_dir.join(r) };
        let path = dir.join("records.jsonl");
        if !path.is_file() {
            return Err(Failure::Domain(format!("no records at {}", path.display())));
        }
        rows.extend(read_records(&path).map_err(Failure::domain)?.iter().map(|rec| rec.attempt_row()));
    }
    for path in &args.attempts {
        rows.extend(read_attempts_csv(path).map_err(Failure::domain)?);
    }
    if rows.is_empty() {
        return Err(Failure::Domain("no attempts given; pass --run or --attempts".into()));
    }
    if let Some(cutoff) = args.released_after {
        let before = rows.len();
        rows = released_after(rows, cutoff);
        eprintln!("kept {} of {} attempts released after {cutoff}", rows.len(), before);
    }
    Ok(rows)
}

fn cmd_report(args: ReportArgs) -> Outcome {
    let rows = collect_rows(&args)?;
    let group_by = Dimension::parse_list(&args.group_by).map_err(Failure::domain)?;
    let options = AggregateOptions {
        allow_partial: args.allow_partial,
    };
    let report = aggregate(&rows, &group_by, &args.k, options).map_err(Failure::domain)?;
    std::fs::create_dir_all(&args.out).map_err(Failure::env)?;
    let path_for = |stem: &str, f: ReportFormat| args.out.join(format!("{stem}.{}", f.extension()));

    print!("{}", report_text::pass_table(&report));
    for &f in args.format.iter().filter(|f| **f != ReportFormat::Svg) {
        write_pass_report(&report, f, &path_for(&args.name, f)).map_err(Failure::domain)?;
    }
    write_attempts_csv(&rows, &args.out.join(format!("{}.attempts.csv", args.name))).map_err(Failure::domain)?;

    if let Some(base) = args.base {
        let treatments: Vec<StrategyKind> = if args.treatments.is_empty() {
            let present: BTreeSet<_> = rows.iter().map(|r| r.strategy).collect();
            present.into_iter().filter(|s| *s != base).collect()
        } else {
            args.treatments.clone()
        };
        let k = args.grid_k.or_else(|| args.k.iter().copied().max()).unwrap_or(10);
        let grid = compare_strategies(&rows, base, &treatments, &group_by, k, options).map_err(Failure::domain)?;
        print!("{}", report_text::grid_table(&grid));
        let stem = format!("{}.vs-{}", args.name, base.to_string().replace(['&', ':'], "_"));
        for &f in &args.format {
            write_grid(&grid, f, &path_for(&stem, f)).map_err(Failure::domain)?;
        }
    } else if args.format.contains(&ReportFormat::Svg) {
        return Err(Failure::Domain("--format svg draws an improvement heatmap and needs --base".into()));
    }
    Ok(())
}

fn cmd_cache(action: CacheAction) -> Outcome {
    let (CacheAction::Stats(args) | CacheAction::Clear(args)) = &action;
    let dir = match (&args.cache_dir, &args.config) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => load_config(Some(c))?
            .cache_dir
            .ok_or_else(|| Failure::Domain(format!("{} sets no cache_dir", c.display())))?,
        (None, None) => return Err(Failure::Domain("pass --cache-dir or --config".into())),
    };
    let store = CacheStore::new(dir);
    match action {
        CacheAction::Stats(_) => {
            let stats = store.stats().map_err(Failure::env)?;
            println!("{} entries, {} bytes in {}", stats.entries, stats.bytes, store.dir().display());
        }
        CacheAction::Clear(_) => {
            store.clear().map_err(Failure::env)?;
            println!("cleared {}", store.dir().display());
        }
    }
    Ok(())
}
