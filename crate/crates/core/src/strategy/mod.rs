//! Translation strategies: direct, pseudocode-transitive, their hybrids and
//! the transitive baseline through an intermediate language.

mod plan;
mod pseudocode;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::lang::ProgrammingLanguage;
use crate::llm::{ChatRequest, Completion, FinishReason, Gateway, GatewayError, ModelConfig};
use crate::prompt::{extract_code, extract_pseudocode, ExtractedCode, Prompt, PromptKind, Pseudocode, TemplateSet};
use crate::task::{TaskRef, TranslationTask};

pub use plan::{plan_run, PlanError, RunPlan, SkippedItem, WorkItem, PLAN_SCHEMA_VERSION};
pub use pseudocode::{PrecomputedStore, PseudocodeSource, PseudocodeSourceConfig};

/// One translation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    D,
    P,
    PC,
    DAndP,
    DAndPC,
    DAndPL(ProgrammingLanguage),
}

/// The single-step procedures strategies are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    D,
    P,
    PC,
    PL(ProgrammingLanguage),
}

impl StrategyKind {
    pub const BASIC: [StrategyKind; 5] = [Self::D, Self::P, Self::PC, Self::DAndP, Self::DAndPC];

    /// First and second half procedures; the second is `None` for
    /// single-procedure strategies.
    pub fn halves(self) -> (StepKind, Option<StepKind>) {
        match self {
            Self::D => (StepKind::D, None),
            Self::P => (StepKind::P, None),
            Self::PC => (StepKind::PC, None),
            Self::DAndP => (StepKind::D, Some(StepKind::P)),
            Self::DAndPC => (StepKind::D, Some(StepKind::PC)),
            Self::DAndPL(l) => (StepKind::D, Some(StepKind::PL(l))),
        }
    }

    pub fn is_hybrid(self) -> bool {
        self.halves().1.is_some()
    }

    pub fn intermediate(self) -> Option<ProgrammingLanguage> {
        match self {
            Self::DAndPL(l) => Some(l),
            _ => None,
        }
    }

    /// Whether the strategy can run on a task between these languages.
    pub fn applies_to(self, source: ProgrammingLanguage, target: ProgrammingLanguage) -> bool {
        self.intermediate().is_none_or(|l| l != source && l != target)
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl StepKind {
    /// Prompt/completion steps per attempt.
    pub fn step_count(self) -> usize {
        match self {
            Self::D => 1,
            Self::P | Self::PC | Self::PL(_) => 2,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::D => f.write_str("D"),
            Self::P => f.write_str("P"),
            Self::PC => f.write_str("PC"),
            Self::DAndP => f.write_str("D&P"),
            Self::DAndPC => f.write_str("D&PC"),
            Self::DAndPL(l) => write!(f, "D&PL:{l}"),
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::D => f.write_str("D"),
            Self::P => f.write_str("P"),
            Self::PC => f.write_str("PC"),
            Self::PL(l) => write!(f, "PL:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}` (expected D, P, PC, D&P, D&PC or D&PL:<language>)")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    /// Accepts `D&PC` as well as `D_and_PC`; the transitive baseline takes
    /// its intermediate language after a colon.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || UnknownStrategy(s.to_string());
        let norm = s.trim().replace("_and_", "&");
        match norm.to_ascii_uppercase().as_str() {
            "D" => return Ok(Self::D),
            "P" => return Ok(Self::P),
            "PC" => return Ok(Self::PC),
            "D&P" => return Ok(Self::DAndP),
            "D&PC" => return Ok(Self::DAndPC),
            _ => {}
        }
        let (head, lang) = norm.split_once(':').ok_or_else(unknown)?;
        if !head.eq_ignore_ascii_case("D&PL") {
            return Err(unknown());
        }
        lang.trim().parse().map(Self::DAndPL).map_err(|_| unknown())
    }
}

impl FromStr for StepKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D" => Ok(Self::D),
            "P" => Ok(Self::P),
            "PC" => Ok(Self::PC),
            _ => s
                .strip_prefix("PL:")
                .and_then(|l| l.parse().ok())
                .map(Self::PL)
                .ok_or_else(|| UnknownStrategy(s.to_string())),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(StrategyKind);
string_serde!(StepKind);

/// Attempts per task, and for hybrids how they split between the halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptBudget {
    pub total: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<(u32, u32)>,
}

impl Default for AttemptBudget {
    fn default() -> Self {
        Self::new(10)
    }
}

impl AttemptBudget {
    pub fn new(total: u32) -> Self {
        Self { total, split: None }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.total == 0 {
            return Err("attempt budget must be positive".into());
        }
        if let Some((a, b)) = self.split {
            if a + b != self.total {
                return Err(format!("budget split {a}+{b} does not sum to {}", self.total));
            }
        }
        Ok(())
    }

    pub fn halves(&self) -> (u32, u32) {
        self.split.unwrap_or((self.total / 2, self.total - self.total / 2))
    }

    /// The procedure and the leg-local attempt number for each attempt.
    pub fn schedule(&self, kind: StrategyKind) -> Vec<(StepKind, u32)> {
        match kind.halves() {
            (only, None) => (0..self.total).map(|i| (only, i)).collect(),
            (first, Some(second)) => {
                let (a, b) = self.halves();
                (0..a).map(|i| (first, i)).chain((0..b).map(|i| (second, i))).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateProgram {
    pub language: ProgrammingLanguage,
    pub code: String,
}

/// One prompt/completion exchange, or the reason it did not happen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_kind: Option<PromptKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub attempt_seed: u64,
    pub namespace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudocode: Option<Pseudocode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<IntermediateProgram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProvenanceStep {
    fn new(seed: u64, namespace: &str) -> Self {
        Self {
            prompt_kind: None,
            template_hash: None,
            bindings: BTreeMap::new(),
            prompt_digest: None,
            model_id: None,
            attempt_seed: seed,
            namespace: namespace.to_string(),
            completion_digest: None,
            finish_reason: None,
            pseudocode: None,
            intermediate: None,
            error: None,
        }
    }

    fn skipped(seed: u64, namespace: &str, reason: &str) -> Self {
        Self {
            error: Some(format!("not run: {reason}")),
            ..Self::new(seed, namespace)
        }
    }

    fn with_prompt(mut self, prompt: &Prompt, model: &ModelConfig) -> Self {
        self.prompt_kind = Some(prompt.kind);
        self.template_hash = Some(prompt.template_hash.clone());
        self.bindings = prompt.bindings.clone();
        self.prompt_digest = Some(prompt.digest());
        self.model_id = Some(model.model_id.clone());
        self
    }

    fn with_completion(mut self, completion: &Completion) -> Self {
        self.completion_digest = Some(sha256_hex(completion.text.as_bytes()));
        self.finish_reason = Some(completion.finish_reason);
        if completion.finish_reason == FinishReason::Error {
            self.error = completion.diagnostic.clone();
        }
        self
    }

    /// Re-renders the recorded prompt; `None` for steps without a prompt.
    pub fn replay(&self, templates: &TemplateSet) -> Option<Result<Prompt, crate::prompt::PromptError>> {
        self.prompt_kind.map(|kind| templates.render(kind, &self.bindings))
    }
}

/// The code a candidate carries: extracted code, or why there is none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateCode {
    Extracted(ExtractedCode),
    Failed { reason: String },
}

impl CandidateCode {
    pub fn text(&self) -> Option<&str> {
        match self {
            Self::Extracted(c) => Some(&c.text),
            Self::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub task: TaskRef,
    pub strategy: StrategyKind,
    /// Procedure that produced this attempt (a half, for hybrids).
    pub step: StepKind,
    pub attempt_index: u32,
    pub repeat_index: u32,
    pub model: String,
    pub code: CandidateCode,
    pub provenance: Vec<ProvenanceStep>,
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("invalid attempt budget: {0}")]
    Budget(String),
    #[error("strategy {strategy} does not apply to task {task}")]
    NotApplicable { strategy: StrategyKind, task: String },
    /// A provider failure that makes further requests pointless.
    #[error("fatal provider error: {0}")]
    Fatal(#[from] GatewayError),
}

/// Everything a strategy needs besides the task.
pub struct StrategyContext<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub translator: &'a ModelConfig,
    pub pseudocode: &'a PseudocodeSource,
    /// Key requests by procedure instead of by strategy, so the halves of
    /// a hybrid reuse the cached samples of the matching pure runs.
    pub reuse_halves: bool,
}

enum AttemptError {
    Failed(String),
    Fatal(GatewayError),
}

impl From<GatewayError> for AttemptError {
    fn from(e: GatewayError) -> Self {
        if e.is_fatal() {
            AttemptError::Fatal(e)
        } else {
            AttemptError::Failed(format!("provider error: {e}"))
        }
    }
}

struct Attempt<'c, 'a> {
    ctx: &'c StrategyContext<'a>,
    task: &'c TranslationTask,
    seed: u64,
    repeat: u32,
    namespace: String,
    steps: Vec<ProvenanceStep>,
}

impl Attempt<'_, '_> {
    fn request(&mut self, prompt: &Prompt, model: &ModelConfig) -> Result<Completion, AttemptError> {
        let req = ChatRequest::new(model.clone(), prompt.messages.clone())
            .with_attempt(self.seed, self.repeat)
            .with_namespace(self.namespace.clone());
        let step = ProvenanceStep::new(self.seed, &self.namespace).with_prompt(prompt, model);
        match self.ctx.gateway.cached_complete(&req) {
            Ok(c) => {
                self.steps.push(step.with_completion(&c));
                Ok(c)
            }
            Err(e) => {
                self.steps.push(ProvenanceStep {
                    error: Some(e.to_string()),
                    ..step
                });
                Err(e.into())
            }
        }
    }

    fn fail_step(&mut self, reason: String) -> AttemptError {
        if let Some(last) = self.steps.last_mut() {
            last.error.get_or_insert_with(|| reason.clone());
        }
        AttemptError::Failed(reason)
    }

    fn translate_direct(
        &mut self,
        code: &str,
        source: ProgrammingLanguage,
        target: ProgrammingLanguage,
    ) -> Result<ExtractedCode, AttemptError> {
        let prompt = self.ctx.templates.build_direct_prompt_for(code, source, target);
        let completion = self.request(&prompt, self.ctx.translator)?;
        extract_code(&completion, target).map_err(|e| self.fail_step(e.to_string()))
    }

    fn resolve_pseudocode(&mut self) -> Result<Pseudocode, AttemptError> {
        let program = &self.task.source_program;
        match self.ctx.pseudocode {
            PseudocodeSource::Precomputed(store) => {
                let mut step = ProvenanceStep::new(self.seed, &self.namespace);
                step.model_id = Some(store.model().to_string());
                match store.lookup(program) {
                    Some(pc) => {
                        step.pseudocode = Some(pc.clone());
                        self.steps.push(step);
                        Ok(pc)
                    }
                    None => {
                        let reason = format!("no precomputed pseudocode for {}.{}", program.problem_id, program.language);
                        step.error = Some(reason.clone());
                        self.steps.push(step);
                        Err(AttemptError::Failed(reason))
                    }
                }
            }
            source => {
                let model = match source {
                    PseudocodeSource::External(m) => m,
                    _ => self.ctx.translator,
                };
                let prompt = self
                    .ctx
                    .templates
                    .build_pseudocode_prompt(program)
                    .map_err(|e| AttemptError::Failed(e.to_string()))?;
                let completion = self.request(&prompt, model)?;
                let (text, _) = extract_pseudocode(&completion).map_err(|e| self.fail_step(e.to_string()))?;
                let pc = Pseudocode {
                    text,
                    generator_model: model.model_id.clone(),
                    source_fingerprint: program.fingerprint(),
                };
                self.steps.last_mut().expect("step recorded").pseudocode = Some(pc.clone());
                Ok(pc)
            }
        }
    }

    fn run(&mut self, step: StepKind) -> Result<ExtractedCode, AttemptError> {
        let task = self.task;
        let target = task.target_language;
        match step {
            StepKind::D => self.translate_direct(&task.source_program.source_text, task.source_language, target),
            StepKind::P | StepKind::PC => {
                let pc = self.resolve_pseudocode()?;
                let prompt = if step == StepKind::P {
                    self.ctx.templates.build_pseudo_to_code_prompt(&pc, target)
                } else {
                    self.ctx.templates.build_pseudo_with_source_prompt(&pc, &task.source_program, target)
                }
                .map_err(|e| AttemptError::Failed(e.to_string()))?;
                let completion = self.request(&prompt, self.ctx.translator)?;
                extract_code(&completion, target).map_err(|e| self.fail_step(e.to_string()))
            }
            StepKind::PL(mid) => {
                let first = self.translate_direct(&task.source_program.source_text, task.source_language, mid)?;
                self.steps.last_mut().expect("step recorded").intermediate = Some(IntermediateProgram {
                    language: mid,
                    code: first.text.clone(),
                });
                self.translate_direct(&first.text, mid, target)
            }
        }
    }
}

fn namespace_for(kind: StrategyKind, step: StepKind, reuse_halves: bool) -> String {
    if reuse_halves {
        step.to_string()
    } else {
        kind.to_string()
    }
}

/// Produces exactly `budget.total` candidates for `task`. Attempts that
/// fail still yield a candidate, marked failed. Only fatal provider errors
/// (authentication, exhausted rate limits, missing credentials) abort.
pub fn run_strategy(
    ctx: &StrategyContext<'_>,
    task: &TranslationTask,
    kind: StrategyKind,
    budget: &AttemptBudget,
    repeat_index: u32,
) -> Result<Vec<Candidate>, StrategyError> {
    budget.validate().map_err(StrategyError::Budget)?;
    if !kind.applies_to(task.source_language, task.target_language) {
        return Err(StrategyError::NotApplicable {
            strategy: kind,
            task: task.id(),
        });
    }
    let task_ref = task.task_ref();
    let mut out = Vec::with_capacity(budget.total as usize);
    for (attempt_index, (step, leg_seed)) in budget.schedule(kind).into_iter().enumerate() {
        let mut attempt = Attempt {
            ctx,
            task,
            seed: leg_seed as u64,
            repeat: repeat_index,
            namespace: namespace_for(kind, step, ctx.reuse_halves),
            steps: Vec::new(),
        };
        let code = match attempt.run(step) {
            Ok(c) if c.text.trim().is_empty() => CandidateCode::Failed {
                reason: "extracted code is empty".into(),
            },
            Ok(c) => CandidateCode::Extracted(c),
            Err(AttemptError::Fatal(e)) => return Err(StrategyError::Fatal(e)),
            Err(AttemptError::Failed(reason)) => CandidateCode::Failed { reason },
        };
        let mut provenance = attempt.steps;
        while provenance.len() < step.step_count() {
            provenance.push(ProvenanceStep::skipped(leg_seed as u64, &attempt.namespace, "an earlier step failed"));
        }
        out.push(Candidate {
            task: task_ref.clone(),
            strategy: kind,
            step,
            attempt_index: attempt_index as u32,
            repeat_index,
            model: ctx.translator.model_id.clone(),
            code,
            provenance,
        });
    }
    Ok(out)
}
