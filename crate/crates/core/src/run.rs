//! Run configuration and the resumable translate-and-judge orchestrator.
//!
//! A run directory holds `config.json`, `templates.json`, `plan.json` and
//! `records.jsonl`. Records are written in plan order, item by item, so
//! the completed items always form a prefix of the plan and a resumed run
//! produces the same file as an uninterrupted one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::json_digest;
use crate::error::Error;
use crate::exec::{ExecLimits, Judge, RunOptions as ExecRunOptions, Toolchains, Verdict};
use crate::llm::{CacheStore, Gateway, GatewayError, MockFile, MockProvider, ModelConfig, RetryPolicy};
use crate::metrics::{RecordWriter, RunRecord, RECORD_SCHEMA_VERSION};
use crate::prompt::TemplateSet;
use crate::strategy::{
    plan_run, run_strategy, AttemptBudget, PlanError, PseudocodeSource, PseudocodeSourceConfig, RunPlan,
    StrategyContext, StrategyError, StrategyKind, WorkItem,
};
use crate::task::{enumerate_tasks, load_corpus, Corpus, TaskFilter, TranslationTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub translator: ModelConfig,
    pub pseudocode_source: PseudocodeSourceConfig,
    pub strategies: Vec<StrategyKind>,
    pub budget: AttemptBudget,
    pub repeats: u32,
    pub filter: TaskFilter,
    pub limits: ExecLimits,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available CPU.
    pub parallelism: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toolchains: Option<PathBuf>,
    /// Response script for models whose endpoint is `"mock"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    pub reuse_halves: bool,
    pub early_exit: bool,
    pub retry: RetryPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_limit_per_minute: Option<u32>,
    pub request_timeout_secs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            translator: ModelConfig::mock("mock"),
            pseudocode_source: PseudocodeSourceConfig::SelfModel,
            strategies: StrategyKind::BASIC.to_vec(),
            budget: AttemptBudget::default(),
            repeats: 3,
            filter: TaskFilter::default(),
            limits: ExecLimits::default(),
            cache_dir: None,
            output_dir: PathBuf::from("runs"),
            parallelism: 0,
            templates_dir: None,
            toolchains: None,
            mock_script: None,
            reuse_halves: false,
            early_exit: false,
            retry: RetryPolicy::default(),
            rate_limit_per_minute: None,
            request_timeout_secs: 300,
        }
    }
}

impl RunConfig {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let parsed = if is_toml {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that can be checked without network access or
    /// subprocesses.
    pub fn validate(&self) -> Result<(), Error> {
        let cfg = |m: String| Error::Config(m);
        if !self.corpus.is_dir() {
            return Err(cfg(format!("corpus directory {} does not exist", self.corpus.display())));
        }
        if self.strategies.is_empty() {
            return Err(cfg("no strategies configured".into()));
        }
        if self.repeats == 0 {
            return Err(cfg("repeats must be positive".into()));
        }
        self.budget.validate().map_err(cfg)?;
        self.limits.validate().map_err(cfg)?;
        let mut models = vec![&self.translator];
        if let PseudocodeSourceConfig::External { model } = &self.pseudocode_source {
            models.push(model);
        }
        for m in &models {
            m.validate().map_err(cfg)?;
            if m.is_mock() {
                match &self.mock_script {
                    Some(p) if p.is_file() => {}
                    Some(p) => return Err(cfg(format!("mock script {} does not exist", p.display()))),
                    None => return Err(cfg(format!("model `{}` uses the mock endpoint but no mock_script is set", m.model_id))),
                }
            } else if let Some(var) = &m.api_key_env {
                if std::env::var_os(var).is_none() {
                    return Err(Error::Gateway(GatewayError::MissingApiKey(var.clone())));
                }
            }
        }
        if let PseudocodeSourceConfig::Precomputed { root, model } = &self.pseudocode_source {
            if !root.join(model).is_dir() {
                return Err(cfg(format!("precomputed pseudocode directory {} does not exist", root.join(model).display())));
            }
        }
        Ok(())
    }

    /// Digest of the settings that determine results. Output location,
    /// cache location and parallelism do not.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        c.parallelism = 0;
        json_digest(&c)
    }

    pub fn workers(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("run directory {0} already exists; resume it or choose another run id")]
    Exists(PathBuf),
    #[error("{path}: {message}")]
    Records { path: PathBuf, message: String },
    #[error("provider failure, run stopped (resume to continue): {0}")]
    Provider(GatewayError),
    #[error("execution environment failure, run stopped (resume to continue): {0}")]
    Environment(String),
}

impl RunError {
    /// Whether the failure lies in the environment (credentials, quota,
    /// sandbox) rather than in the inputs.
    pub fn is_environment(&self) -> bool {
        matches!(self, RunError::Provider(_) | RunError::Environment(_))
            || matches!(self, RunError::Setup(Error::Gateway(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Interrupted,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub status: RunStatus,
    pub items_total: usize,
    pub items_done: usize,
    pub items_resumed: usize,
    pub records_written: usize,
    pub skipped_pairs: usize,
    pub provider_calls: u64,
    pub cache_hits: u64,
}

/// A prepared run: configuration, inputs and plan, ready to execute.
pub struct Run {
    pub run_id: String,
    pub dir: PathBuf,
    pub config: RunConfig,
    pub plan: RunPlan,
    pub corpus: Corpus,
    tasks: HashMap<String, TranslationTask>,
    templates: TemplateSet,
    pseudocode: PseudocodeSource,
    gateway: Gateway,
    judge: Arc<Judge>,
}

fn build_gateway(config: &RunConfig) -> Result<Gateway, Error> {
    let mut gateway = Gateway::new(config.retry.clone());
    let mut models = vec![config.translator.clone()];
    if let PseudocodeSourceConfig::External { model } = &config.pseudocode_source {
        models.push(model.clone());
    }
    for m in &models {
        if m.is_mock() {
            let path = config.mock_script.as_ref().ok_or_else(|| Error::Config("mock_script is not set".into()))?;
            let mock = MockProvider::from_file(MockFile::load(path)?)?;
            gateway.register("mock", Arc::new(mock));
        } else {
            gateway.register_http(m, Duration::from_secs(config.request_timeout_secs))?;
        }
    }
    if let Some(dir) = &config.cache_dir {
        gateway = gateway.with_cache(CacheStore::new(dir));
    }
    if let Some(rpm) = config.rate_limit_per_minute {
        gateway = gateway.with_rate_limit(rpm);
    }
    Ok(gateway)
}

/// Default run id: UTC time plus a short config digest.
pub fn default_run_id(config: &RunConfig) -> String {
    format!("{}-{}", Utc::now().format("%Y%m%dT%H%M%SZ"), &config.digest()[..8])
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Run {
    fn assemble(config: RunConfig, run_id: String, dir: PathBuf, plan: Option<RunPlan>) -> Result<Self, RunError> {
        config.validate()?;
        let corpus = load_corpus(&config.corpus)?;
        let templates = match &config.templates_dir {
            Some(d) => TemplateSet::load(d).map_err(Error::from)?,
            None => TemplateSet::builtin(),
        };
        let toolchains = match &config.toolchains {
            Some(p) => Toolchains::load(p)?,
            None => Toolchains::default(),
        };
        let pseudocode = config.pseudocode_source.resolve()?;
        let tasks = enumerate_tasks(&corpus, &config.filter);
        if let PseudocodeSource::Precomputed(store) = &pseudocode {
            let needs_pc = config.strategies.iter().any(|s| {
                matches!(s, StrategyKind::P | StrategyKind::PC | StrategyKind::DAndP | StrategyKind::DAndPC)
            });
            let missing = store.missing(&tasks);
            if needs_pc && !missing.is_empty() {
                return Err(Error::Config(format!(
                    "precomputed pseudocode missing for {} source programs, e.g. {}",
                    missing.len(),
                    missing[0]
                ))
                .into());
            }
        }
        let fresh = plan_run(&tasks, &config.strategies, config.budget, config.repeats, config.digest())?;
        let plan = match plan {
            Some(existing) => {
                existing.check_config(&config.digest())?;
                if existing.items != fresh.items {
                    return Err(RunError::Setup(Error::Config(
                        "the corpus no longer yields the planned work items".into(),
                    )));
                }
                existing
            }
            None => fresh,
        };
        let gateway = build_gateway(&config)?;
        let judge = Judge::new(toolchains, config.limits.clone())
            .with_options(ExecRunOptions {
                early_exit: config.early_exit,
            })
            .with_work_root(dir.join("work"));
        Ok(Self {
            run_id,
            dir,
            plan,
            corpus,
            tasks: tasks.into_iter().map(|t| (t.id(), t)).collect(),
            templates,
            pseudocode,
            gateway,
            judge: Arc::new(judge),
            config,
        })
    }

    /// Plans a new run under `config.output_dir/<run_id>` and writes its
    /// configuration, template hashes and plan.
    pub fn create(config: RunConfig, run_id: Option<String>) -> Result<Self, RunError> {
        config.validate()?;
        let run_id = run_id.unwrap_or_else(|| default_run_id(&config));
        let dir = config.output_dir.join(&run_id);
        if dir.join("plan.json").exists() {
            return Err(RunError::Exists(dir));
        }
        let run = Self::assemble(config, run_id, dir.clone(), None)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_json(&dir.join("config.json"), &run.config)?;
        write_json(&dir.join("templates.json"), &run.templates.hashes())?;
        run.plan.save(&dir.join("plan.json"))?;
        Ok(run)
    }

    /// Reopens an existing run directory. The stored configuration is
    /// authoritative; only `parallelism` may be overridden.
    pub fn open(dir: &Path, parallelism: Option<usize>) -> Result<Self, RunError> {
        let mut config = RunConfig::load(&dir.join("config.json"))?;
        if let Some(p) = parallelism {
            config.parallelism = p;
        }
        let plan = RunPlan::load(&dir.join("plan.json"))?;
        let run_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("bad run directory {}", dir.display())))?
            .to_string();
        let stored: BTreeMap<String, String> = serde_json::from_str(
            &std::fs::read_to_string(dir.join("templates.json")).map_err(|e| Error::io(dir.join("templates.json"), e))?,
        )
        .map_err(|e| Error::Config(format!("templates.json: {e}")))?;
        let run = Self::assemble(config, run_id, dir.to_path_buf(), Some(plan))?;
        if stored != run.templates.hashes() {
            return Err(Error::Config("prompt templates changed since the run started".into()).into());
        }
        Ok(run)
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn judge(&self) -> &Judge {
        &self.judge
    }

    /// Drops records of partially written items and a torn last line,
    /// then returns the ids of complete items.
    fn recover(&self) -> Result<BTreeSet<String>, RunError> {
        let path = self.records_path();
        if !path.exists() {
            return Ok(BTreeSet::new());
        }
        let err = |m: String| RunError::Records {
            path: path.clone(),
            message: m,
        };
        let file = std::fs::File::open(&path).map_err(|e| err(e.to_string()))?;
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| err(e.to_string()))?;
        let budget = self.plan.budget.total as usize;
        let mut per_item: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut keep = vec![false; lines.len()];
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match crate::metrics::parse_record(line, &path, i + 1) {
                Ok(rec) => {
                    if rec.run_id != self.run_id {
                        return Err(err(format!("line {}: record of run `{}`", i + 1, rec.run_id)));
                    }
                    per_item.entry(rec.item_id).or_default().push(i);
                }
                Err(e) if i + 1 == lines.len() => {
                    tracing::warn!(error = %e, "dropping torn last record");
                }
                Err(e) => return Err(err(e.to_string())),
            }
        }
        let mut complete = BTreeSet::new();
        for (id, idx) in per_item {
            if idx.len() == budget {
                idx.iter().for_each(|&i| keep[i] = true);
                complete.insert(id);
            } else {
                tracing::info!(item = %id, records = idx.len(), "discarding partially recorded item");
            }
        }
        if keep.iter().zip(&lines).any(|(k, l)| !k && !l.trim().is_empty()) {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| err(e.to_string()))?;
            for (line, _) in lines.iter().zip(&keep).filter(|(_, k)| **k) {
                writeln!(tmp, "{line}").map_err(|e| err(e.to_string()))?;
            }
            tmp.persist(&path).map_err(|e| err(e.to_string()))?;
        }
        Ok(complete)
    }

    fn run_item(&self, item: &WorkItem) -> Result<Vec<RunRecord>, RunError> {
        let task = self
            .tasks
            .get(&item.task.id())
            .ok_or_else(|| RunError::Setup(Error::Config(format!("unknown task {}", item.task.id()))))?;
        let ctx = StrategyContext {
            gateway: &self.gateway,
            templates: &self.templates,
            translator: &self.config.translator,
            pseudocode: &self.pseudocode,
            reuse_halves: self.config.reuse_halves,
        };
        let started_at = Utc::now();
        let candidates = match run_strategy(&ctx, task, item.strategy, &self.plan.budget, item.repeat_index) {
            Ok(c) => c,
            Err(StrategyError::Fatal(e)) => return Err(RunError::Provider(e)),
            Err(e) => return Err(RunError::Setup(Error::Config(e.to_string()))),
        };
        let tests = &task.problem.tests;
        let driver = self.corpus.driver(&task.problem.id, task.target_language);
        let mut out = Vec::with_capacity(candidates.len());
        for candidate in candidates {
            let verdict = match &candidate.code {
                crate::strategy::CandidateCode::Failed { reason } => Verdict::no_code(reason.clone()),
                crate::strategy::CandidateCode::Extracted(code) => self
                    .judge
                    .evaluate(&code.text, task.target_language, tests, driver)
                    .map_err(|e| RunError::Environment(e.to_string()))?,
            };
            out.push(RunRecord {
                schema_version: RECORD_SCHEMA_VERSION,
                run_id: self.run_id.clone(),
                item_id: item.id.clone(),
                candidate,
                verdict,
                started_at,
                finished_at: Utc::now(),
            });
        }
        Ok(out)
    }

    /// Executes pending items with the configured parallelism. Setting
    /// `cancel` stops scheduling new items; finished items are still
    /// written, so the run can be resumed.
    pub fn execute(&self, cancel: &AtomicBool) -> Result<RunSummary, RunError> {
        let completed = self.recover()?;
        let pending: Vec<(usize, &WorkItem)> = self.plan.pending(&completed).collect();
        let path = self.records_path();
        let mut writer = RecordWriter::append(&path).map_err(|e| RunError::Records {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let workers = self.config.workers().min(pending.len().max(1));
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let mut failure = None;
        let mut done = 0;
        let mut written = 0;

        std::thread::scope(|s| {
            let (tx, rx) = mpsc::channel::<(usize, Result<Vec<RunRecord>, RunError>)>();
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, stop, pending) = (&next, &stop, &pending);
                s.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) || cancel.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((_, item)) = pending.get(i) else { break };
                    let result = self.run_item(item);
                    if result.is_err() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if tx.send((i, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            let mut buffered = BTreeMap::new();
            let mut next_write = 0;
            for (i, result) in rx {
                buffered.insert(i, result);
                while failure.is_none() {
                    let Some(result) = buffered.remove(&next_write) else { break };
                    next_write += 1;
                    match result {
                        Ok(records) => {
                            let io = records
                                .iter()
                                .try_for_each(|r| writer.write(r))
                                .and_then(|_| writer.flush());
                            match io {
                                Ok(()) => {
                                    done += 1;
                                    written += records.len();
                                }
                                Err(e) => {
                                    stop.store(true, Ordering::SeqCst);
                                    failure = Some(RunError::Records {
                                        path: path.clone(),
                                        message: e.to_string(),
                                    });
                                }
                            }
                        }
                        Err(e) => failure = Some(e),
                    }
                }
            }
        });

        if let Some(e) = failure {
            return Err(e);
        }
        let status = if done == pending.len() {
            RunStatus::Completed
        } else {
            RunStatus::Interrupted
        };
        let work = self.dir.join("work");
        if work.exists() {
            let _ = std::fs::remove_dir_all(&work);
        }
        Ok(RunSummary {
            run_id: self.run_id.clone(),
            run_dir: self.dir.clone(),
            status,
            items_total: self.plan.items.len(),
            items_done: completed.len() + done,
            items_resumed: completed.len(),
            records_written: written,
            skipped_pairs: self.plan.skipped.len(),
            provider_calls: self.gateway.provider_calls(),
            cache_hits: self.gateway.cache_hits(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_formats() {
        let c = RunConfig::default();
        assert_eq!(c.budget.total, 10);
        assert_eq!(c.repeats, 3);
        assert_eq!(c.translator.temperature, 0.2);
        assert_eq!(c.translator.max_output_tokens, 3000);

        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("run.toml");
        std::fs::write(
            &toml_path,
            "corpus = \"c\"\nstrategies = [\"D\", \"D&PL:rust\"]\nrepeats = 1\n[translator]\nmodel_id = \"gpt-4o-mini\"\nendpoint = \"https://api.openai.com/v1\"\napi_key_env = \"OPENAI_API_KEY\"\n",
        )
        .unwrap();
        let c = RunConfig::load(&toml_path).unwrap();
        assert_eq!(c.strategies, vec![StrategyKind::D, StrategyKind::DAndPL(crate::lang::ProgrammingLanguage::Rust)]);
        assert_eq!(c.repeats, 1);
        assert_eq!(c.budget.total, 10);

        let json_path = dir.path().join("run.json");
        std::fs::write(&json_path, serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(RunConfig::load(&json_path).unwrap(), c);

        std::fs::write(&json_path, "{\"bogus\": 1}").unwrap();
        assert!(RunConfig::load(&json_path).is_err());
    }

    #[test]
    fn digest_ignores_locations() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.parallelism = 7;
        b.cache_dir = Some("cache".into());
        assert_eq!(a.digest(), b.digest());
        b.repeats = 2;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn validation_happens_before_io() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig {
            corpus: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("mock_script"));
        c.translator = ModelConfig::new("m", "https://example.invalid/v1");
        c.translator.api_key_env = Some("POLYTRANS_TEST_KEY_THAT_IS_NOT_SET".into());
        assert!(matches!(c.validate(), Err(Error::Gateway(GatewayError::MissingApiKey(_)))));
        c.translator.api_key_env = None;
        c.budget = AttemptBudget::new(0);
        assert!(c.validate().is_err());
    }
}
