//! Corpus data model and translation-task enumeration.
//!
//! On disk a corpus is one directory per problem:
//!
//! ```text
//! <root>/<problem-id>/problem.json          id, difficulty, release_date
//! <root>/<problem-id>/tests.json            [{input, expected_output, comparison}]
//! <root>/<problem-id>/solutions/<lang>.<ext>
//! <root>/<problem-id>/drivers/<lang>.<ext>  optional, see `exec::apply_driver`
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::lang::ProgrammingLanguage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Config(format!("unknown difficulty `{other}`"))),
        }
    }
}

/// How a program's stdout is compared against the expected output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Comparison {
    #[default]
    Exact,
    Token,
    FloatTolerant { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
    #[serde(default, deserialize_with = "comparison_de")]
    pub comparison: Comparison,
}

// Accepts either `"token"` or `{"mode": "float_tolerant", "epsilon": 1e-6}`.
fn comparison_de<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Comparison, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Full(Comparison),
    }
    match Repr::deserialize(d)? {
        Repr::Full(c) => Ok(c),
        Repr::Name(n) => match n.as_str() {
            "exact" => Ok(Comparison::Exact),
            "token" => Ok(Comparison::Token),
            other => Err(serde::de::Error::custom(format!(
                "comparison `{other}` needs an object form (float_tolerant requires epsilon)"
            ))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    #[serde(skip)]
    pub tests: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionProgram {
    pub problem_id: String,
    pub language: ProgrammingLanguage,
    pub source_text: String,
}

impl SolutionProgram {
    /// Digest of the program text, used as the provenance fingerprint of
    /// pseudocode derived from it.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.source_text.as_bytes())
    }
}

/// A loaded corpus. Immutable after load and cheap to share.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub problems: BTreeMap<String, Arc<Problem>>,
    pub solutions: BTreeMap<(String, ProgrammingLanguage), Arc<SolutionProgram>>,
    /// Per-language driver templates (see `exec::apply_driver`).
    pub drivers: BTreeMap<(String, ProgrammingLanguage), String>,
}

impl Corpus {
    pub fn solution_count(&self) -> usize {
        self.solutions.len()
    }

    pub fn solution(&self, problem_id: &str, lang: ProgrammingLanguage) -> Option<&Arc<SolutionProgram>> {
        self.solutions.get(&(problem_id.to_string(), lang))
    }

    pub fn driver(&self, problem_id: &str, lang: ProgrammingLanguage) -> Option<&str> {
        self.drivers.get(&(problem_id.to_string(), lang)).map(String::as_str)
    }

    /// Problems lacking a solution in at least one language, with the
    /// missing languages.
    pub fn incomplete(&self) -> BTreeMap<String, Vec<ProgrammingLanguage>> {
        self.problems
            .keys()
            .filter_map(|id| {
                let missing: Vec<_> = ProgrammingLanguage::ALL
                    .into_iter()
                    .filter(|l| self.solution(id, *l).is_none())
                    .collect();
                (!missing.is_empty()).then(|| (id.clone(), missing))
            })
            .collect()
    }

    /// Writes the corpus back in the on-disk layout.
    pub fn save(&self, root: &Path) -> Result<()> {
        for (id, problem) in &self.problems {
            let dir = root.join(id);
            fs::create_dir_all(dir.join("solutions")).map_err(|e| Error::io(&dir, e))?;
            write_json(&dir.join("problem.json"), problem.as_ref())?;
            write_json(&dir.join("tests.json"), &problem.tests)?;
        }
        for ((id, lang), sol) in &self.solutions {
            let path = root
                .join(id)
                .join("solutions")
                .join(format!("{}.{}", lang.id(), lang.file_extension()));
            fs::write(&path, &sol.source_text).map_err(|e| Error::io(&path, e))?;
        }
        for ((id, lang), text) in &self.drivers {
            let dir = root.join(id).join("drivers");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join(format!("{}.{}", lang.id(), lang.file_extension()));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("corpus types serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads every problem directory under `root`.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();

    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("problem.json").is_file())
        .collect();
    dirs.sort();

    for dir in dirs {
        let descriptor_path = dir.join("problem.json");
        let mut problem: Problem = serde_json::from_str(&read_text(&descriptor_path)?).map_err(|e| {
            Error::MalformedDescriptor {
                path: descriptor_path.clone(),
                message: e.to_string(),
            }
        })?;
        if problem.id.trim().is_empty() {
            return Err(Error::MalformedDescriptor {
                path: descriptor_path,
                message: "empty id".into(),
            });
        }
        if let Some(first) = seen.get(&problem.id) {
            return Err(Error::DuplicateProblem {
                id: problem.id.clone(),
                path: descriptor_path,
                first: first.clone(),
            });
        }
        seen.insert(problem.id.clone(), descriptor_path.clone());

        let tests_path = dir.join("tests.json");
        let tests: Vec<TestCase> = serde_json::from_str(&read_text(&tests_path)?).map_err(|e| {
            Error::MalformedDescriptor {
                path: tests_path.clone(),
                message: e.to_string(),
            }
        })?;
        if tests.is_empty() {
            return Err(Error::MalformedDescriptor {
                path: tests_path,
                message: "problem has no tests".into(),
            });
        }
        for t in &tests {
            if let Comparison::FloatTolerant { epsilon } = t.comparison {
                if !(epsilon > 0.0) {
                    return Err(Error::MalformedDescriptor {
                        path: tests_path,
                        message: format!("float_tolerant epsilon must be positive, got {epsilon}"),
                    });
                }
            }
        }
        problem.tests = tests;

        for (sub, target) in [("solutions", true), ("drivers", false)] {
            let sub_dir = dir.join(sub);
            if !sub_dir.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = fs::read_dir(&sub_dir)
                .map_err(|e| Error::io(&sub_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for file in files {
                let Some(lang) = file
                    .extension()
                    .and_then(|e| e.to_str())
                    .and_then(ProgrammingLanguage::from_extension)
                else {
                    tracing::warn!(path = %file.display(), "ignoring file with unknown extension");
                    continue;
                };
                let text = read_text(&file)?;
                let key = (problem.id.clone(), lang);
                if target {
                    corpus.solutions.insert(
                        key,
                        Arc::new(SolutionProgram {
                            problem_id: problem.id.clone(),
                            language: lang,
                            source_text: text,
                        }),
                    );
                } else {
                    corpus.drivers.insert(key, text);
                }
            }
        }
        corpus.problems.insert(problem.id.clone(), Arc::new(problem));
    }

    for (id, missing) in corpus.incomplete() {
        let langs: Vec<_> = missing.iter().map(|l| l.id()).collect();
        tracing::info!(problem = %id, missing = ?langs, "problem lacks solutions in some languages");
    }
    Ok(corpus)
}

/// One unit of translation work: translate `source_program` into
/// `target_language`.
#[derive(Debug, Clone)]
pub struct TranslationTask {
    pub problem: Arc<Problem>,
    pub source_language: ProgrammingLanguage,
    pub target_language: ProgrammingLanguage,
    pub source_program: Arc<SolutionProgram>,
}

impl TranslationTask {
    pub fn new(problem: Arc<Problem>, source_program: Arc<SolutionProgram>, target: ProgrammingLanguage) -> Self {
        assert_ne!(source_program.language, target, "source and target language must differ");
        assert_eq!(source_program.problem_id, problem.id);
        Self {
            source_language: source_program.language,
            target_language: target,
            problem,
            source_program,
        }
    }

    pub fn id(&self) -> String {
        format!("{}:{}->{}", self.problem.id, self.source_language, self.target_language)
    }

    pub fn task_ref(&self) -> TaskRef {
        TaskRef {
            problem_id: self.problem.id.clone(),
            source_language: self.source_language,
            target_language: self.target_language,
            difficulty: self.problem.difficulty,
            release_date: self.problem.release_date,
        }
    }
}

/// Serialized reference to a task, carried in plans and run records.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskRef {
    pub problem_id: String,
    pub source_language: ProgrammingLanguage,
    pub target_language: ProgrammingLanguage,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_date: Option<NaiveDate>,
}

impl TaskRef {
    pub fn id(&self) -> String {
        format!("{}:{}->{}", self.problem_id, self.source_language, self.target_language)
    }
}

/// Task selection. An empty filter selects everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskFilter {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difficulties: Option<BTreeSet<Difficulty>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_languages: Option<BTreeSet<ProgrammingLanguage>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_languages: Option<BTreeSet<ProgrammingLanguage>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub released_after: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem_ids: Option<BTreeSet<String>>,
}

impl TaskFilter {
    fn admits_problem(&self, p: &Problem) -> bool {
        self.difficulties.as_ref().is_none_or(|d| d.contains(&p.difficulty))
            && self.problem_ids.as_ref().is_none_or(|ids| ids.contains(&p.id))
            && self
                .released_after
                .is_none_or(|cutoff| p.release_date.is_some_and(|d| d > cutoff))
    }
}

/// Enumerates one task per (problem, source, target) with source != target.
///
/// Order is by problem id, then source language, then target language.
/// A problem yields tasks only from languages it has a solution in.
pub fn enumerate_tasks(corpus: &Corpus, filter: &TaskFilter) -> Vec<TranslationTask> {
    let mut tasks = Vec::new();
    for problem in corpus.problems.values().filter(|p| filter.admits_problem(p)) {
        for source in ProgrammingLanguage::ALL {
            if filter.source_languages.as_ref().is_some_and(|s| !s.contains(&source)) {
                continue;
            }
            let Some(program) = corpus.solution(&problem.id, source) else {
                continue;
            };
            for target in ProgrammingLanguage::ALL {
                if target == source
                    || filter.target_languages.as_ref().is_some_and(|t| !t.contains(&target))
                {
                    continue;
                }
                tasks.push(TranslationTask::new(problem.clone(), program.clone(), target));
            }
        }
    }
    tasks
}

/// A task dropped by [`filter_by_release_date`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedTask {
    pub task_id: String,
    pub reason: String,
}

/// Keeps tasks whose problem was released strictly after `cutoff`.
///
/// Tasks whose problem has no release date are rejected with a diagnostic.
pub fn filter_by_release_date(
    tasks: Vec<TranslationTask>,
    cutoff: NaiveDate,
) -> (Vec<TranslationTask>, Vec<RejectedTask>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for task in tasks {
        match task.problem.release_date {
            Some(date) if date > cutoff => kept.push(task),
            Some(_) => {}
            None => rejected.push(RejectedTask {
                task_id: task.id(),
                reason: format!("problem `{}` has no release_date", task.problem.id),
            }),
        }
    }
    (kept, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProgrammingLanguage::*;

    fn toy_corpus(problems: usize, langs: &[ProgrammingLanguage]) -> Corpus {
        let mut c = Corpus::default();
        for i in 0..problems {
            let id = format!("p{i}");
            c.problems.insert(
                id.clone(),
                Arc::new(Problem {
                    id: id.clone(),
                    difficulty: Difficulty::Easy,
                    release_date: NaiveDate::from_ymd_opt(2024, 1, 1 + i as u32),
                    statement: None,
                    tests: vec![TestCase {
                        input: "1\n".into(),
                        expected_output: "1\n".into(),
                        comparison: Comparison::Exact,
                    }],
                }),
            );
            for &l in langs {
                c.solutions.insert(
                    (id.clone(), l),
                    Arc::new(SolutionProgram {
                        problem_id: id.clone(),
                        language: l,
                        source_text: format!("{id} in {l}"),
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
    fn restricted_languages_count() {
        let c = toy_corpus(2, &ProgrammingLanguage::ALL);
        let langs: BTreeSet<_> = [Python, Go, Rust].into();
        let filter = TaskFilter {
            source_languages: Some(langs.clone()),
            target_languages: Some(langs),
            ..Default::default()
        };
        assert_eq!(enumerate_tasks(&c, &filter).len(), 12);
    }

    #[test]
    fn single_source_yields_five_targets() {
        let c = toy_corpus(1, &ProgrammingLanguage::ALL);
        let filter = TaskFilter {
            source_languages: Some([Python].into()),
            ..Default::default()
        };
        let tasks = enumerate_tasks(&c, &filter);
        assert_eq!(tasks.len(), 5);
        assert!(tasks.iter().all(|t| t.target_language != Python));
    }

    #[test]
    fn study_scale_task_count() {
        let c = toy_corpus(323, &ProgrammingLanguage::ALL);
        assert_eq!(enumerate_tasks(&c, &TaskFilter::default()).len(), 9_690);
    }

    #[test]
    fn missing_language_only_removes_it_as_source() {
        let c = toy_corpus(1, &[Python, Cpp, Java, Javascript, Go]);
        let tasks = enumerate_tasks(&c, &TaskFilter::default());
        assert_eq!(tasks.len(), 5 * 5);
        assert!(tasks.iter().any(|t| t.target_language == Rust));
        assert!(tasks.iter().all(|t| t.source_language != Rust));
        assert_eq!(c.incomplete().get("p0"), Some(&vec![Rust]));
    }

    #[test]
    fn release_date_filter_edges() {
        let c = toy_corpus(3, &[Python, Rust]);
        let tasks = enumerate_tasks(&c, &among(&[Python, Rust]));
        let early = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let late = NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        let (kept, rejected) = filter_by_release_date(tasks.clone(), early);
        assert_eq!(kept.len(), tasks.len());
        assert!(rejected.is_empty());
        let (kept, _) = filter_by_release_date(tasks.clone(), late);
        assert!(kept.is_empty());
        // strictly after: p0 released 2024-01-01 is excluded by that cutoff
        let (kept, _) = filter_by_release_date(tasks, NaiveDate::from_ymd_opt(2024, 1, 1).unwrap());
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn missing_release_date_is_rejected() {
        let mut c = toy_corpus(1, &[Python, Rust]);
        let p = Arc::make_mut(c.problems.get_mut("p0").unwrap());
        p.release_date = None;
        let problem = c.problems["p0"].clone();
        let tasks: Vec<_> = enumerate_tasks(&c, &among(&[Python, Rust]))
            .into_iter()
            .map(|mut t| {
                t.problem = problem.clone();
                t
            })
            .collect();
        let (kept, rejected) = filter_by_release_date(tasks, NaiveDate::from_ymd_opt(2000, 1, 1).unwrap());
        assert!(kept.is_empty());
        assert_eq!(rejected.len(), 2);
        assert!(rejected[0].reason.contains("release_date"));
    }

    #[test]
    fn comparison_forms_parse() {
        let t: TestCase = serde_json::from_str(r#"{"input":"","expected_output":"1"}"#).unwrap();
        assert_eq!(t.comparison, Comparison::Exact);
        let t: TestCase =
            serde_json::from_str(r#"{"input":"","expected_output":"1","comparison":"token"}"#).unwrap();
        assert_eq!(t.comparison, Comparison::Token);
        let t: TestCase = serde_json::from_str(
            r#"{"input":"","expected_output":"1","comparison":{"mode":"float_tolerant","epsilon":0.001}}"#,
        )
        .unwrap();
        assert_eq!(t.comparison, Comparison::FloatTolerant { epsilon: 0.001 });
        assert!(serde_json::from_str::<TestCase>(
            r#"{"input":"","expected_output":"1","comparison":"float_tolerant"}"#
        )
        .is_err());
    }
}
