use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::ProgrammingLanguage;
use crate::llm::ModelConfig;
use crate::prompt::Pseudocode;
use crate::task::{SolutionProgram, TranslationTask};

/// Where pseudocode for P and PC comes from.
#[derive(Debug, Clone)]
pub enum PseudocodeSource {
    /// The translator model writes it, freshly for every attempt.
    SelfModel,
    /// A different model writes it, freshly for every attempt.
    External(ModelConfig),
    /// Stored text, the same for every attempt.
    Precomputed(PrecomputedStore),
}

/// Serialized form of [`PseudocodeSource`] in run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PseudocodeSourceConfig {
    #[default]
    #[serde(rename = "self")]
    SelfModel,
    External { model: ModelConfig },
    /// Reads `<root>/<model>/<problem-id>.<source-lang>.txt`.
    Precomputed { root: PathBuf, model: String },
}

impl PseudocodeSourceConfig {
    pub fn resolve(&self) -> Result<PseudocodeSource> {
        Ok(match self {
            Self::SelfModel => PseudocodeSource::SelfModel,
            Self::External { model } => PseudocodeSource::External(model.clone()),
            Self::Precomputed { root, model } => PseudocodeSource::Precomputed(PrecomputedStore::load(root, model)?),
        })
    }
}

/// Pseudocode loaded from `<root>/<model>/`, keyed by problem and source
/// language.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedStore {
    model: String,
    entries: BTreeMap<(String, ProgrammingLanguage), String>,
}

impl PrecomputedStore {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, problem_id: impl Into<String>, language: ProgrammingLanguage, text: impl Into<String>) {
        self.entries.insert((problem_id.into(), language), text.into());
    }

    pub fn load(root: &Path, model: &str) -> Result<Self> {
        let dir = root.join(model);
        let mut store = Self::new(model);
        let read = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in read {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let Some(stem) = name.strip_suffix(".txt") else { continue };
            let Some((problem, lang)) = stem.rsplit_once('.') else { continue };
            let Ok(lang) = lang.parse() else {
                tracing::warn!(path = %path.display(), "ignoring pseudocode file with unknown language");
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            store.insert(problem, lang, text);
        }
        Ok(store)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let dir = root.join(&self.model);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ((problem, lang), text) in &self.entries {
            let path = dir.join(format!("{problem}.{lang}.txt"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, program: &SolutionProgram) -> Option<Pseudocode> {
        self.entries
            .get(&(program.problem_id.clone(), program.language))
            .map(|text| Pseudocode {
                text: text.clone(),
                generator_model: self.model.clone(),
                source_fingerprint: program.fingerprint(),
            })
    }

    /// Tasks whose source program has no stored pseudocode.
    pub fn missing(&self, tasks: &[TranslationTask]) -> Vec<String> {
        let mut out: Vec<String> = tasks
            .iter()
            .filter(|t| !self.entries.contains_key(&(t.problem.id.clone(), t.source_language)))
            .map(|t| format!("{}.{}", t.problem.id, t.source_language))
            .collect();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ProgrammingLanguage::*;

    fn program(lang: ProgrammingLanguage) -> SolutionProgram {
        SolutionProgram {
            problem_id: "two-sum".into(),
            language: lang,
            source_text: "x".into(),
        }
    }

    #[test]
    fn store_round_trip_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PrecomputedStore::new("r1");
        store.insert("two-sum", Python, "read n\nprint n");
        store.save(dir.path()).unwrap();
        assert!(dir.path().join("r1/two-sum.python.txt").exists());

        let loaded = PrecomputedStore::load(dir.path(), "r1").unwrap();
        let a = loaded.lookup(&program(Python)).unwrap();
        let b = loaded.lookup(&program(Python)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generator_model, "r1");
        assert!(loaded.lookup(&program(Go)).is_none());
    }

    #[test]
    fn config_forms() {
        let c: PseudocodeSourceConfig = serde_json::from_str(r#"{"kind":"self"}"#).unwrap();
        assert_eq!(c, PseudocodeSourceConfig::SelfModel);
        let c: PseudocodeSourceConfig =
            serde_json::from_str(r#"{"kind":"precomputed","root":"pseudocode","model":"r1"}"#).unwrap();
        assert!(matches!(c, PseudocodeSourceConfig::Precomputed { .. }));
        assert!(serde_json::from_str::<PseudocodeSourceConfig>(r#"{"kind":"oracle"}"#).is_err());
    }
}
