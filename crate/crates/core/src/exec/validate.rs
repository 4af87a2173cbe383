//! Checks that every reference solution passes its own tests.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::{BuildStatus, EnvironmentError, Judge, TestStatus};
use crate::lang::ProgrammingLanguage;
use crate::task::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStatus {
    Passed,
    Failed,
    ToolchainMissing,
    /// Not run because the language's toolchain is unavailable and
    /// skipping was requested.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionCheck {
    pub problem_id: String,
    pub language: ProgrammingLanguage,
    pub status: SolutionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build_status: Option<BuildStatus>,
    /// Indices of failing tests with their status.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failing_tests: Vec<(usize, TestStatus)>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<SolutionCheck>,
    pub skipped_languages: Vec<ProgrammingLanguage>,
    /// Problems lacking a solution in some language.
    pub incomplete: Vec<(String, Vec<ProgrammingLanguage>)>,
}

impl ValidationReport {
    pub fn count(&self, status: SolutionStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SolutionCheck> {
        self.checks.iter().filter(|c| c.status == SolutionStatus::Failed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| matches!(c.status, SolutionStatus::Passed | SolutionStatus::Skipped))
    }

    pub fn missing_toolchains(&self) -> bool {
        self.checks.iter().any(|c| c.status == SolutionStatus::ToolchainMissing)
    }
}

/// Builds and tests every reference solution with `jobs` workers. Checks
/// come back in corpus order.
pub fn validate_corpus(
    corpus: &Corpus,
    judge: &Judge,
    skip_missing: bool,
    jobs: usize,
) -> Result<ValidationReport, EnvironmentError> {
    let skipped_languages: Vec<_> = ProgrammingLanguage::ALL
        .into_iter()
        .filter(|l| skip_missing && !judge.toolchains().available(*l))
        .collect();
    let work: Vec<_> = corpus.solutions.values().collect();
    let results: Mutex<Vec<Option<Result<SolutionCheck, EnvironmentError>>>> =
        Mutex::new((0..work.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);

    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(work.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sol) = work.get(i) else { break };
                let check = if skipped_languages.contains(&sol.language) {
                    Ok(SolutionCheck {
                        problem_id: sol.problem_id.clone(),
                        language: sol.language,
                        status: SolutionStatus::Skipped,
                        build_status: None,
                        failing_tests: Vec::new(),
                        detail: format!("{} toolchain unavailable", sol.language),
                    })
                } else {
                    check_one(corpus, judge, sol)
                };
                results.lock().unwrap()[i] = Some(check);
            });
        }
    });

    let mut checks = Vec::with_capacity(work.len());
    for r in results.into_inner().unwrap() {
        checks.push(r.expect("every index is processed")?);
    }
    Ok(ValidationReport {
        checks,
        skipped_languages,
        incomplete: corpus.incomplete().into_iter().collect(),
    })
}

fn check_one(
    corpus: &Corpus,
    judge: &Judge,
    sol: &crate::task::SolutionProgram,
) -> Result<SolutionCheck, EnvironmentError> {
    let problem = &corpus.problems[&sol.problem_id];
    let driver = corpus.driver(&sol.problem_id, sol.language);
    let verdict = judge.evaluate_uncached(&sol.source_text, sol.language, &problem.tests, driver)?;
    let status = match (verdict.passed, verdict.build.status) {
        (true, _) => SolutionStatus::Passed,
        (false, BuildStatus::ToolchainMissing) => SolutionStatus::ToolchainMissing,
        _ => SolutionStatus::Failed,
    };
    Ok(SolutionCheck {
        problem_id: sol.problem_id.clone(),
        language: sol.language,
        status,
        build_status: Some(verdict.build.status),
        failing_tests: verdict
            .test_outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.status != TestStatus::Pass)
            .map(|(i, o)| (i, o.status))
            .collect(),
        detail: verdict.build.diagnostics,
    })
}
