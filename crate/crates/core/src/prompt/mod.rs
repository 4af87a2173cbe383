//! Prompt templates and extraction of code or pseudocode from replies.
//!
//! Templates are plain text with `{{source_lang}}`, `{{target_lang}}`,
//! `{{source_code}}` and `{{pseudocode}}` placeholders. Code-valued
//! placeholders are inserted inside a fence long enough to survive any
//! backticks in the value.

pub mod fence;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{json_digest, sha256_hex};
use crate::lang::ProgrammingLanguage;
use crate::llm::{ChatMessage, Completion, FinishReason};
use crate::task::{SolutionProgram, TranslationTask};

pub use fence::{fence, fenced_blocks, FencedBlock};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("template `{kind}`: {message}")]
    Template { kind: &'static str, message: String },
    #[error("cannot build a pseudocode prompt for an empty program")]
    EmptyProgram,
    #[error("pseudocode is empty")]
    EmptyPseudocode,
    #[error("pseudocode fingerprint {found} does not match the program ({expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("missing binding `{0}`")]
    MissingBinding(String),
    #[error("invalid binding `{name}`: {message}")]
    InvalidBinding { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Direct,
    PseudoGen,
    PseudoToCode,
    PseudoWithSourceToCode,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Direct,
        PromptKind::PseudoGen,
        PromptKind::PseudoToCode,
        PromptKind::PseudoWithSourceToCode,
    ];

    /// Template file stem.
    pub fn file_stem(self) -> &'static str {
        match self {
            PromptKind::Direct => "direct",
            PromptKind::PseudoGen => "pseudo_gen",
            PromptKind::PseudoToCode => "pseudo_to_code",
            PromptKind::PseudoWithSourceToCode => "pseudo_with_source",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            PromptKind::Direct => &["source_lang", "target_lang", "source_code"],
            PromptKind::PseudoGen => &["source_code"],
            PromptKind::PseudoToCode => &["target_lang", "pseudocode"],
            PromptKind::PseudoWithSourceToCode => &["source_lang", "target_lang", "source_code", "pseudocode"],
        }
    }

    fn forbidden(self) -> &'static [&'static str] {
        match self {
            PromptKind::Direct => &["pseudocode"],
            PromptKind::PseudoGen => &["target_lang", "pseudocode"],
            PromptKind::PseudoToCode => &["source_code", "source_lang"],
            PromptKind::PseudoWithSourceToCode => &[],
        }
    }
}

const PLACEHOLDERS: [&str; 4] = ["source_lang", "target_lang", "source_code", "pseudocode"];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([a-z_]+)\s*\}\}").unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub kind: PromptKind,
    pub text: String,
    pub hash: String,
}

impl Template {
    pub fn parse(kind: PromptKind, text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        let err = |message: String| PromptError::Template {
            kind: kind.file_stem(),
            message,
        };
        let used: Vec<&str> = placeholder_re()
            .captures_iter(&text)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        if let Some(unknown) = used.iter().find(|p| !PLACEHOLDERS.contains(p)) {
            return Err(err(format!("unknown placeholder `{{{{{unknown}}}}}`")));
        }
        for req in kind.required() {
            if !used.contains(req) {
                return Err(err(format!("missing required placeholder `{{{{{req}}}}}`")));
            }
        }
        for forbidden in kind.forbidden() {
            if used.contains(forbidden) {
                return Err(err(format!("placeholder `{{{{{forbidden}}}}}` is not allowed here")));
            }
        }
        Ok(Self {
            kind,
            hash: sha256_hex(text.as_bytes()),
            text,
        })
    }
}

/// The four templates used by the strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<PromptKind, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let sources = [
            (PromptKind::Direct, include_str!("../../templates/direct.tmpl")),
            (PromptKind::PseudoGen, include_str!("../../templates/pseudo_gen.tmpl")),
            (PromptKind::PseudoToCode, include_str!("../../templates/pseudo_to_code.tmpl")),
            (
                PromptKind::PseudoWithSourceToCode,
                include_str!("../../templates/pseudo_with_source.tmpl"),
            ),
        ];
        Self {
            templates: sources
                .into_iter()
                .map(|(k, t)| (k, Template::parse(k, t).expect("builtin templates are valid")))
                .collect(),
        }
    }

    /// Loads `<dir>/<kind>.tmpl`, falling back to the builtin template for
    /// files that do not exist.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{}.tmpl", kind.file_stem()));
            if let Ok(text) = std::fs::read_to_string(&path) {
                set.templates.insert(kind, Template::parse(kind, text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind) -> &Template {
        &self.templates[&kind]
    }

    /// Template hashes by file stem, recorded for provenance.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(k, t)| (k.file_stem().to_string(), t.hash.clone()))
            .collect()
    }

    /// Renders `kind` from raw bindings. Language bindings hold language
    /// ids; code bindings hold unfenced text.
    pub fn render(&self, kind: PromptKind, bindings: &BTreeMap<String, String>) -> Result<Prompt, PromptError> {
        let lang = |name: &str| -> Result<ProgrammingLanguage, PromptError> {
            let v = bindings
                .get(name)
                .ok_or_else(|| PromptError::MissingBinding(name.to_string()))?;
            v.parse().map_err(|_| PromptError::InvalidBinding {
                name: name.to_string(),
                message: format!("unknown language `{v}`"),
            })
        };
        let template = self.get(kind);
        let source_lang = bindings.contains_key("source_lang").then(|| lang("source_lang")).transpose()?;
        let mut missing = None;
        let text = placeholder_re().replace_all(&template.text, |caps: &Captures| {
            let name = caps.get(1).unwrap().as_str();
            let Some(value) = bindings.get(name) else {
                missing.get_or_insert_with(|| name.to_string());
                return String::new();
            };
            match name {
                "source_lang" | "target_lang" => value
                    .parse::<ProgrammingLanguage>()
                    .map(|l| l.display_name().to_string())
                    .unwrap_or_else(|_| value.clone()),
                "source_code" => fence(value, source_lang.map_or("", |l| l.fence_tag())),
                "pseudocode" => fence(value, ""),
                _ => value.clone(),
            }
        });
        if let Some(name) = missing {
            return Err(PromptError::MissingBinding(name));
        }
        if kind.required().contains(&"target_lang") {
            lang("target_lang")?;
        }
        Ok(Prompt {
            kind,
            messages: vec![ChatMessage::user(text.into_owned())],
            bindings: bindings.clone(),
            template_hash: template.hash.clone(),
        })
    }

    pub fn build_direct_prompt(&self, task: &TranslationTask) -> Prompt {
        let bindings = BTreeMap::from([
            ("source_lang".to_string(), task.source_language.id().to_string()),
            ("target_lang".to_string(), task.target_language.id().to_string()),
            ("source_code".to_string(), task.source_program.source_text.clone()),
        ]);
        self.render(PromptKind::Direct, &bindings)
            .expect("direct bindings are complete")
    }

    /// Direct translation of an arbitrary program, used for the legs of
    /// transitive translation through an intermediate language.
    pub fn build_direct_prompt_for(
        &self,
        source_code: &str,
        source: ProgrammingLanguage,
        target: ProgrammingLanguage,
    ) -> Prompt {
        let bindings = BTreeMap::from([
            ("source_lang".to_string(), source.id().to_string()),
            ("target_lang".to_string(), target.id().to_string()),
            ("source_code".to_string(), source_code.to_string()),
        ]);
        self.render(PromptKind::Direct, &bindings)
            .expect("direct bindings are complete")
    }

    pub fn build_pseudocode_prompt(&self, program: &SolutionProgram) -> Result<Prompt, PromptError> {
        if program.source_text.trim().is_empty() {
            return Err(PromptError::EmptyProgram);
        }
        let bindings = BTreeMap::from([
            ("source_lang".to_string(), program.language.id().to_string()),
            ("source_code".to_string(), program.source_text.clone()),
        ]);
        self.render(PromptKind::PseudoGen, &bindings)
    }

    pub fn build_pseudo_to_code_prompt(
        &self,
        pseudocode: &Pseudocode,
        target: ProgrammingLanguage,
    ) -> Result<Prompt, PromptError> {
        if pseudocode.text.trim().is_empty() {
            return Err(PromptError::EmptyPseudocode);
        }
        let bindings = BTreeMap::from([
            ("target_lang".to_string(), target.id().to_string()),
            ("pseudocode".to_string(), pseudocode.text.clone()),
        ]);
        self.render(PromptKind::PseudoToCode, &bindings)
    }

    pub fn build_pseudo_with_source_prompt(
        &self,
        pseudocode: &Pseudocode,
        program: &SolutionProgram,
        target: ProgrammingLanguage,
    ) -> Result<Prompt, PromptError> {
        if pseudocode.text.trim().is_empty() {
            return Err(PromptError::EmptyPseudocode);
        }
        let expected = program.fingerprint();
        if pseudocode.source_fingerprint != expected {
            return Err(PromptError::FingerprintMismatch {
                expected,
                found: pseudocode.source_fingerprint.clone(),
            });
        }
        let bindings = BTreeMap::from([
            ("source_lang".to_string(), program.language.id().to_string()),
            ("target_lang".to_string(), target.id().to_string()),
            ("source_code".to_string(), program.source_text.clone()),
            ("pseudocode".to_string(), pseudocode.text.clone()),
        ]);
        self.render(PromptKind::PseudoWithSourceToCode, &bindings)
    }
}

/// A rendered prompt with the bindings it was rendered from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub kind: PromptKind,
    pub messages: Vec<ChatMessage>,
    pub bindings: BTreeMap<String, String>,
    pub template_hash: String,
}

impl Prompt {
    pub fn digest(&self) -> String {
        json_digest(&self.messages)
    }

    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudocode {
    pub text: String,
    pub generator_model: String,
    pub source_fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionPath {
    TaggedFence,
    AnyFence,
    WholeReply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedCode {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
    pub extraction_path: ExtractionPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error("completion finished with an error: {0}")]
    ErrorCompletion(String),
    #[error("completion contains no code")]
    Empty,
}

fn check_completion(completion: &Completion) -> Result<(), ExtractionError> {
    if completion.finish_reason == FinishReason::Error {
        return Err(ExtractionError::ErrorCompletion(
            completion.diagnostic.clone().unwrap_or_default(),
        ));
    }
    if completion.text.trim().is_empty() {
        return Err(ExtractionError::Empty);
    }
    Ok(())
}

fn non_empty_blocks(text: &str) -> Vec<FencedBlock> {
    fenced_blocks(text)
        .into_iter()
        .filter(|b| !b.content.trim().is_empty())
        .collect()
}

/// Picks the last fence tagged with `target`, else the last fence of any
/// tag, else the whole reply.
pub fn extract_code(completion: &Completion, target: ProgrammingLanguage) -> Result<ExtractedCode, ExtractionError> {
    check_completion(completion)?;
    let blocks = non_empty_blocks(&completion.text);
    if let Some(b) = blocks
        .iter()
        .rev()
        .find(|b| b.tag.as_deref().and_then(ProgrammingLanguage::from_fence_tag) == Some(target))
    {
        return Ok(ExtractedCode {
            text: b.content.clone(),
            language_hint: b.tag.clone(),
            extraction_path: ExtractionPath::TaggedFence,
        });
    }
    if let Some(b) = blocks.last() {
        return Ok(ExtractedCode {
            text: b.content.clone(),
            language_hint: b.tag.clone(),
            extraction_path: ExtractionPath::AnyFence,
        });
    }
    if fenced_blocks(&completion.text).is_empty() {
        return Ok(ExtractedCode {
            text: completion.text.trim().to_string(),
            language_hint: None,
            extraction_path: ExtractionPath::WholeReply,
        });
    }
    Err(ExtractionError::Empty)
}

/// Last fenced block if any, else the whole reply. The caller attaches
/// the generator model and source fingerprint.
pub fn extract_pseudocode(completion: &Completion) -> Result<(String, ExtractionPath), ExtractionError> {
    check_completion(completion)?;
    let blocks = non_empty_blocks(&completion.text);
    if let Some(b) = blocks.last() {
        return Ok((b.content.clone(), ExtractionPath::AnyFence));
    }
    if fenced_blocks(&completion.text).is_empty() {
        return Ok((completion.text.trim().to_string(), ExtractionPath::WholeReply));
    }
    Err(ExtractionError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Comparison, Difficulty, Problem, TestCase};
    use std::sync::Arc;
    use ProgrammingLanguage::*;

    const CAN_MAKE_SQUARE_CPP: &str = "class Solution {\npublic:\n    bool canMakeSquare(vector<vector<char>>& grid) {\n        for (int i = 0; i < 2; i++)\n            for (int j = 0; j < 2; j++) {\n                int w = 0;\n                for (int x = 0; x < 2; x++)\n                    for (int y = 0; y < 2; y++)\n                        w += grid[i + x][j + y] == 'W';\n                if (w != 2) return true;\n            }\n        return false;\n    }\n};\n";

    fn program(lang: ProgrammingLanguage, text: &str) -> SolutionProgram {
        SolutionProgram {
            problem_id: "p".into(),
            language: lang,
            source_text: text.into(),
        }
    }

    fn task(text: &str, from: ProgrammingLanguage, to: ProgrammingLanguage) -> TranslationTask {
        let problem = Arc::new(Problem {
            id: "p".into(),
            difficulty: Difficulty::Easy,
            release_date: None,
            statement: None,
            tests: vec![TestCase {
                input: String::new(),
                expected_output: String::new(),
                comparison: Comparison::Exact,
            }],
        });
        TranslationTask::new(problem, Arc::new(program(from, text)), to)
    }

    fn pseudo(text: &str, of: &SolutionProgram) -> Pseudocode {
        Pseudocode {
            text: text.into(),
            generator_model: "m".into(),
            source_fingerprint: of.fingerprint(),
        }
    }

    #[test]
    fn direct_prompt_names_languages_and_embeds_source() {
        let set = TemplateSet::builtin();
        let p = set.build_direct_prompt(&task(CAN_MAKE_SQUARE_CPP, Cpp, Rust));
        let text = p.text();
        assert!(text.contains("C++"));
        assert!(text.contains("Rust"));
        assert!(text.contains(&fence(CAN_MAKE_SQUARE_CPP, "cpp")));
        assert_eq!(p, set.build_direct_prompt(&task(CAN_MAKE_SQUARE_CPP, Cpp, Rust)));
    }

    #[test]
    fn direct_prompt_fences_backticks_safely() {
        let src = "print(\"```\")\n";
        let p = TemplateSet::builtin().build_direct_prompt(&task(src, Python, Go));
        let blocks = fenced_blocks(&p.text());
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].content, src);
    }

    #[test]
    fn pseudocode_prompt_is_language_agnostic() {
        let set = TemplateSet::builtin();
        let prog = program(Cpp, CAN_MAKE_SQUARE_CPP);
        let p = set.build_pseudocode_prompt(&prog).unwrap();
        assert!(p.text().contains(CAN_MAKE_SQUARE_CPP));
        for lang in ProgrammingLanguage::ALL {
            assert!(!p.text().contains(&format!("Target language: {}", lang.display_name())));
        }
        assert_eq!(
            set.build_pseudocode_prompt(&program(Cpp, "  \n")),
            Err(PromptError::EmptyProgram)
        );
    }

    #[test]
    fn pseudo_to_code_never_contains_source() {
        let set = TemplateSet::builtin();
        let prog = program(Cpp, CAN_MAKE_SQUARE_CPP);
        let pc = pseudo("for each 2x2 block:\n  count W cells\n  if count != 2: return true", &prog);
        let p = set.build_pseudo_to_code_prompt(&pc, Rust).unwrap();
        assert!(!p.text().contains(CAN_MAKE_SQUARE_CPP));
        assert!(p.text().contains("Rust"));
        assert!(p.text().contains(&pc.text));
        assert_eq!(p, set.build_pseudo_to_code_prompt(&pc, Rust).unwrap());
    }

    #[test]
    fn pseudo_to_code_fences_fence_like_lines() {
        let prog = program(Python, "print(1)");
        let pc = pseudo("step 1\n```\nstep 2\n~~~", &prog);
        let p = TemplateSet::builtin().build_pseudo_to_code_prompt(&pc, Go).unwrap();
        let blocks = fenced_blocks(&p.text());
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].content, pc.text);
    }

    #[test]
    fn pseudo_with_source_checks_fingerprint() {
        let set = TemplateSet::builtin();
        let prog = program(Cpp, CAN_MAKE_SQUARE_CPP);
        let pc = pseudo("count W", &prog);
        let p = set.build_pseudo_with_source_prompt(&pc, &prog, Rust).unwrap();
        assert!(p.text().contains(CAN_MAKE_SQUARE_CPP));
        assert!(p.text().contains("count W"));
        assert!(p.text().contains("Reference implementation (C++)"));
        let other = program(Cpp, "int main(){}");
        assert!(matches!(
            set.build_pseudo_with_source_prompt(&pc, &other, Rust),
            Err(PromptError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn rerender_from_bindings_reproduces_digest() {
        let set = TemplateSet::builtin();
        let prog = program(Go, "package main\n");
        let pc = pseudo("x", &prog);
        let p = set.build_pseudo_with_source_prompt(&pc, &prog, Java).unwrap();
        let again = set.render(p.kind, &p.bindings).unwrap();
        assert_eq!(again.digest(), p.digest());
    }

    #[test]
    fn template_validation() {
        assert!(Template::parse(PromptKind::Direct, "{{source_lang}} {{target_lang}} {{source_code}}").is_ok());
        assert!(Template::parse(PromptKind::Direct, "{{source_lang}} {{source_code}}").is_err());
        assert!(Template::parse(PromptKind::PseudoToCode, "{{target_lang}} {{pseudocode}} {{source_code}}").is_err());
        assert!(Template::parse(PromptKind::PseudoGen, "{{source_code}} {{bogus}}").is_err());
        assert!(Template::parse(PromptKind::PseudoGen, "{{source_code}} into {{target_lang}}").is_err());
    }

    #[test]
    fn template_dir_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pseudo_gen.tmpl"), "Explain {{source_code}}").unwrap();
        let set = TemplateSet::load(dir.path()).unwrap();
        assert_eq!(set.get(PromptKind::PseudoGen).text, "Explain {{source_code}}");
        assert_eq!(set.get(PromptKind::Direct), TemplateSet::builtin().get(PromptKind::Direct));
        assert_ne!(set.hashes(), TemplateSet::builtin().hashes());
    }

    #[test]
    fn bindings_are_substituted_once() {
        let src = "// {{target_lang}} {{pseudocode}}";
        let p = TemplateSet::builtin().build_direct_prompt(&task(src, Rust, Go));
        assert!(p.text().contains(src));
    }

    #[test]
    fn extract_single_tagged_block() {
        let c = Completion::stop("Here you go:\n```rust\nfn main() {}\n```\nHope it helps.");
        let e = extract_code(&c, Rust).unwrap();
        assert_eq!(e.text, "fn main() {}");
        assert_eq!(e.extraction_path, ExtractionPath::TaggedFence);
    }

    #[test]
    fn extract_prefers_target_tag_then_last_block() {
        let c = Completion::stop("```python\nprint(1)\n```\n```rust\nfn main() {}\n```\n```\nnotes\n```");
        assert_eq!(extract_code(&c, Rust).unwrap().text, "fn main() {}");
        let any = extract_code(&c, Go).unwrap();
        assert_eq!(any.text, "notes");
        assert_eq!(any.extraction_path, ExtractionPath::AnyFence);
    }

    #[test]
    fn extract_whole_reply_and_failures() {
        let e = extract_code(&Completion::stop("\nfn main() {}\n"), Rust).unwrap();
        assert_eq!(e.extraction_path, ExtractionPath::WholeReply);
        assert_eq!(e.text, "fn main() {}");
        assert_eq!(extract_code(&Completion::stop("  "), Rust), Err(ExtractionError::Empty));
        assert!(matches!(
            extract_code(&Completion::error("boom"), Rust),
            Err(ExtractionError::ErrorCompletion(_))
        ));
    }

    #[test]
    fn extract_pseudocode_cases() {
        let (t, p) = extract_pseudocode(&Completion::stop("Sure:\n```\nloop i\n```")).unwrap();
        assert_eq!((t.as_str(), p), ("loop i", ExtractionPath::AnyFence));
        let (t, p) = extract_pseudocode(&Completion::stop("loop i over n")).unwrap();
        assert_eq!((t.as_str(), p), ("loop i over n", ExtractionPath::WholeReply));
        assert!(extract_pseudocode(&Completion::stop("")).is_err());
    }
}
