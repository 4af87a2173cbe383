use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AttemptBudget, StrategyKind};
use crate::task::{TaskRef, TranslationTask};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("nothing to plan: {0}")]
    Empty(&'static str),
    #[error("invalid attempt budget: {0}")]
    Budget(String),
    #[error("repeats must be positive")]
    Repeats,
    #[error("strategy {strategy} applies to none of the selected tasks (the intermediate language is the source or target of every task)")]
    NotApplicable { strategy: StrategyKind },
    #[error("plan schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("run configuration changed since the plan was written (plan {planned}, now {current})")]
    ConfigMismatch { planned: String, current: String },
    #[error("{path}: {message}")]
    Store { path: String, message: String },
}

/// One (task, strategy, repeat) unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub id: String,
    pub task: TaskRef,
    pub strategy: StrategyKind,
    pub repeat_index: u32,
}

/// A (task, strategy) pair left out of the plan, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub task_id: String,
    pub strategy: StrategyKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub schema_version: u32,
    pub config_digest: String,
    pub budget: AttemptBudget,
    pub repeats: u32,
    pub items: Vec<WorkItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedItem>,
}

fn item_id(task: &TaskRef, strategy: StrategyKind, repeat: u32) -> String {
    format!("{}:{}:r{}", task.id(), strategy, repeat)
}

/// Enumerates work items in task, strategy, repeat order. A transitive
/// strategy is skipped on tasks whose source or target is its intermediate
/// language; a strategy that applies to no task at all is an error.
pub fn plan_run(
    tasks: &[TranslationTask],
    strategies: &[StrategyKind],
    budget: AttemptBudget,
    repeats: u32,
    config_digest: impl Into<String>,
) -> Result<RunPlan, PlanError> {
    if tasks.is_empty() {
        return Err(PlanError::Empty("no tasks selected"));
    }
    if strategies.is_empty() {
        return Err(PlanError::Empty("no strategies selected"));
    }
    budget.validate().map_err(PlanError::Budget)?;
    if repeats == 0 {
        return Err(PlanError::Repeats);
    }
    let mut seen = BTreeSet::new();
    let strategies: Vec<_> = strategies.iter().copied().filter(|s| seen.insert(*s)).collect();

    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut used = BTreeSet::new();
    for task in tasks {
        let task_ref = task.task_ref();
        for &strategy in &strategies {
            if !strategy.applies_to(task.source_language, task.target_language) {
                skipped.push(SkippedItem {
                    task_id: task_ref.id(),
                    strategy,
                    reason: "intermediate language equals the source or target language".into(),
                });
                continue;
            }
            used.insert(strategy);
            for repeat_index in 0..repeats {
                items.push(WorkItem {
                    id: item_id(&task_ref, strategy, repeat_index),
                    task: task_ref.clone(),
                    strategy,
                    repeat_index,
                });
            }
        }
    }
    if let Some(&strategy) = strategies.iter().find(|s| !used.contains(s)) {
        return Err(PlanError::NotApplicable { strategy });
    }
    Ok(RunPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        config_digest: config_digest.into(),
        budget,
        repeats,
        items,
        skipped,
    })
}

impl RunPlan {
    pub fn save(&self, path: &Path) -> Result<(), PlanError> {
        let store = |e: &dyn std::fmt::Display| PlanError::Store {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let json = serde_json::to_string_pretty(self).map_err(|e| store(&e))?;
        std::fs::write(path, json + "\n").map_err(|e| store(&e))
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let store = |e: &dyn std::fmt::Display| PlanError::Store {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let text = std::fs::read_to_string(path).map_err(|e| store(&e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| store(&e))?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != PLAN_SCHEMA_VERSION {
            return Err(PlanError::VersionMismatch {
                found,
                expected: PLAN_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| store(&e))
    }

    /// Fails unless the plan was made from the given configuration.
    pub fn check_config(&self, config_digest: &str) -> Result<(), PlanError> {
        if self.config_digest != config_digest {
            return Err(PlanError::ConfigMismatch {
                planned: self.config_digest.clone(),
                current: config_digest.to_string(),
            });
        }
        Ok(())
    }

    /// Items not in `completed`, in plan order.
    pub fn pending<'a>(&'a self, completed: &'a BTreeSet<String>) -> impl Iterator<Item = (usize, &'a WorkItem)> + 'a {
        self.items.iter().enumerate().filter(|(_, w)| !completed.contains(&w.id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::ProgrammingLanguage::{self, *};
    use crate::task::{enumerate_tasks, Corpus, Difficulty, Problem, SolutionProgram, TaskFilter};
    use std::sync::Arc;

    fn corpus(problems: usize, langs: &[ProgrammingLanguage]) -> Corpus {
        let mut c = Corpus::default();
        for i in 0..problems {
            let id = format!("p{i:03}");
            c.problems.insert(
                id.clone(),
                Arc::new(Problem {
                    id: id.clone(),
                    difficulty: Difficulty::Easy,
                    release_date: None,
                    statement: None,
                    tests: Vec::new(),
                }),
            );
            for &l in langs {
                c.solutions.insert(
                    (id.clone(), l),
                    Arc::new(SolutionProgram {
                        problem_id: id.clone(),
                        language: l,
                        source_text: "x".into(),
                    }),
                );
            }
        }
        c
    }

    fn among(langs: &[ProgrammingLanguage]) -> TaskFilter {
        let set: BTreeSet<_> = langs.iter().copied().collect();
        TaskFilter {
            source_languages: Some(set.clone()),
            target_languages: Some(set),
            ..Default::default()
        }
    }

    #[test]
    fn item_counts_are_products() {
        let tasks = enumerate_tasks(&corpus(323, &ProgrammingLanguage::ALL), &TaskFilter::default());
        assert_eq!(tasks.len(), 9690);
        let one = plan_run(&tasks, &[StrategyKind::D], AttemptBudget::new(10), 3, "c").unwrap();
        assert_eq!(one.items.len(), 29_070);
        let five = plan_run(&tasks, &StrategyKind::BASIC, AttemptBudget::new(10), 1, "c").unwrap();
        // 323 problems x 30 ordered pairs x 5 strategies
        assert_eq!(five.items.len(), 323 * 30 * 5);
        assert_eq!(five.items.len(), 48_450);
    }

    #[test]
    fn ids_are_unique_and_stable() {
        let tasks = enumerate_tasks(&corpus(2, &[Python, Go, Rust]), &among(&[Python, Go, Rust]));
        let a = plan_run(&tasks, &StrategyKind::BASIC, AttemptBudget::new(10), 3, "c").unwrap();
        let b = plan_run(&tasks, &StrategyKind::BASIC, AttemptBudget::new(10), 3, "c").unwrap();
        assert_eq!(a, b);
        let ids: BTreeSet<_> = a.items.iter().map(|w| w.id.clone()).collect();
        assert_eq!(ids.len(), a.items.len());
        assert_eq!(a.items[0].id, "p000:python->go:D:r0");
    }

    #[test]
    fn transitive_skips_and_rejects() {
        let tasks = enumerate_tasks(&corpus(1, &[Python, Java, Rust]), &among(&[Python, Java, Rust]));
        let plan = plan_run(&tasks, &[StrategyKind::DAndPL(Rust)], AttemptBudget::new(10), 1, "c").unwrap();
        // only python->java and java->python avoid rust
        assert_eq!(plan.items.len(), 2);
        assert_eq!(plan.skipped.len(), 4);

        let python_only: Vec<_> = tasks.iter().filter(|t| t.source_language == Python).cloned().collect();
        let err = plan_run(&python_only, &[StrategyKind::DAndPL(Python)], AttemptBudget::new(10), 1, "c");
        assert!(matches!(err, Err(PlanError::NotApplicable { .. })));
    }

    #[test]
    fn pending_skips_completed_and_persists() {
        let tasks = enumerate_tasks(&corpus(1, &[Python, Go]), &among(&[Python, Go]));
        let plan = plan_run(&tasks, &[StrategyKind::D, StrategyKind::P], AttemptBudget::new(4), 2, "c").unwrap();
        assert_eq!(plan.items.len(), 8);
        let done: BTreeSet<_> = plan.items[..3].iter().map(|w| w.id.clone()).collect();
        let pending: Vec<_> = plan.pending(&done).map(|(i, _)| i).collect();
        assert_eq!(pending, (3..8).collect::<Vec<_>>());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        assert_eq!(RunPlan::load(&path).unwrap(), plan);
        assert!(plan.check_config("other").is_err());

        let text = std::fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(RunPlan::load(&path), Err(PlanError::VersionMismatch { found: 99, .. })));
    }

    #[test]
    fn empty_inputs_rejected() {
        let tasks = enumerate_tasks(&corpus(1, &[Python, Go]), &among(&[Python, Go]));
        assert!(plan_run(&[], &[StrategyKind::D], AttemptBudget::new(1), 1, "c").is_err());
        assert!(plan_run(&tasks, &[], AttemptBudget::new(1), 1, "c").is_err());
        assert!(plan_run(&tasks, &[StrategyKind::D], AttemptBudget::new(0), 1, "c").is_err());
        assert!(plan_run(&tasks, &[StrategyKind::D], AttemptBudget::new(1), 0, "c").is_err());
    }
}
