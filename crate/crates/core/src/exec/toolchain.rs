//! Per-language build and run adapters.
//!
//! Command templates are argv arrays; `{src}` expands to the source file
//! name, `{exe}` to the output binary name, `{main_class}` to the Java
//! entry class and `{dir}` to the working directory.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::sandbox::{run_process, Phase, ProcessLimits};
use crate::error::{Error, Result};
use crate::lang::ProgrammingLanguage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toolchain {
    pub language: ProgrammingLanguage,
    /// Source file name; may use `{main_class}`.
    pub source_file: String,
    /// Build or syntax-check command; `None` when the source runs as is.
    #[serde(default)]
    pub compile: Option<Vec<String>>,
    pub run: Vec<String>,
    pub version: Vec<String>,
    /// Apply the memory cap as an address-space limit.
    #[serde(default = "yes")]
    pub limit_address_space: bool,
    /// Extra environment; values may use `{dir}`.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

fn yes() -> bool {
    true
}

fn argv(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

impl Toolchain {
    pub fn default_for(language: ProgrammingLanguage) -> Self {
        use ProgrammingLanguage::*;
        let (source_file, compile, run, version, limit_as, env): (_, Option<Vec<String>>, _, _, _, &[(&str, &str)]) =
            match language {
                Python => (
                    "main.py",
                    Some(argv(&["python3", "-m", "py_compile", "{src}"])),
                    argv(&["python3", "{src}"]),
                    argv(&["python3", "--version"]),
                    true,
                    &[("PYTHONDONTWRITEBYTECODE", "1")],
                ),
                Cpp => (
                    "main.cpp",
                    Some(argv(&["g++", "-O2", "-std=c++17", "-o", "{exe}", "{src}"])),
                    argv(&["./{exe}"]),
                    argv(&["g++", "--version"]),
                    true,
                    &[],
                ),
                Java => (
                    "{main_class}.java",
                    Some(argv(&["javac", "-encoding", "UTF-8", "{src}"])),
                    argv(&["java", "-Xss64m", "-cp", ".", "{main_class}"]),
                    argv(&["javac", "-version"]),
                    false,
                    &[],
                ),
                Javascript => (
                    "main.js",
                    Some(argv(&["node", "--check", "{src}"])),
                    argv(&["node", "--stack-size=65500", "{src}"]),
                    argv(&["node", "--version"]),
                    false,
                    &[],
                ),
                Go => (
                    "main.go",
                    Some(argv(&["go", "build", "-o", "{exe}", "{src}"])),
                    argv(&["./{exe}"]),
                    argv(&["go", "version"]),
                    false,
                    &[("GOCACHE", "{dir}/.gocache"), ("GOPATH", "{dir}/.gopath"), ("GO111MODULE", "off")],
                ),
                Rust => (
                    "main.rs",
                    Some(argv(&["rustc", "-O", "--edition", "2021", "-o", "{exe}", "{src}"])),
                    argv(&["./{exe}"]),
                    argv(&["rustc", "--version"]),
                    true,
                    &[],
                ),
            };
        Self {
            language,
            source_file: source_file.into(),
            compile,
            run,
            version,
            limit_address_space: limit_as,
            env: env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Entry class of a Java program: the public class, else the class
    /// declaring `main`, else `Main`.
    pub fn java_main_class(code: &str) -> String {
        static PUBLIC: OnceLock<Regex> = OnceLock::new();
        static ANY: OnceLock<Regex> = OnceLock::new();
        let public = PUBLIC.get_or_init(|| {
            Regex::new(r"(?m)^\s*public\s+(?:final\s+|abstract\s+)*class\s+([A-Za-z_$][A-Za-z0-9_$]*)").unwrap()
        });
        let any = ANY.get_or_init(|| Regex::new(r"class\s+([A-Za-z_$][A-Za-z0-9_$]*)").unwrap());
        if let Some(c) = public.captures(code) {
            return c[1].to_string();
        }
        let main_pos = code.find("static void main");
        any.captures_iter(code)
            .filter(|c| main_pos.is_none_or(|p| c.get(0).unwrap().start() < p))
            .last()
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| "Main".to_string())
    }

    pub fn expand(&self, template: &[String], vars: &Vars) -> Vec<String> {
        template.iter().map(|part| vars.apply(part)).collect()
    }
}

/// Template variables for one build.
#[derive(Debug, Clone)]
pub struct Vars {
    pub src: String,
    pub exe: String,
    pub main_class: String,
    pub dir: String,
}

impl Vars {
    pub fn apply(&self, s: &str) -> String {
        s.replace("{src}", &self.src)
            .replace("{exe}", &self.exe)
            .replace("{main_class}", &self.main_class)
            .replace("{dir}", &self.dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolchainStatus {
    pub language: ProgrammingLanguage,
    pub available: bool,
    pub version: Option<String>,
}

/// The registered adapters, one per language.
#[derive(Debug, Clone)]
pub struct Toolchains {
    by_language: BTreeMap<ProgrammingLanguage, Toolchain>,
    probes: Arc<BTreeMap<ProgrammingLanguage, OnceLock<ToolchainStatus>>>,
}

impl Default for Toolchains {
    fn default() -> Self {
        Self::from_list(ProgrammingLanguage::ALL.map(Toolchain::default_for).to_vec())
            .expect("defaults cover every language")
    }
}

impl Toolchains {
    /// Builds the registry; every language must have exactly one adapter.
    pub fn from_list(list: Vec<Toolchain>) -> Result<Self> {
        let mut by_language = BTreeMap::new();
        for t in list {
            if t.run.is_empty() {
                return Err(Error::Config(format!("toolchain `{}` has an empty run command", t.language)));
            }
            if let Some(prev) = by_language.insert(t.language, t) {
                return Err(Error::Config(format!("duplicate toolchain for `{}`", prev.language)));
            }
        }
        if let Some(missing) = ProgrammingLanguage::ALL.iter().find(|l| !by_language.contains_key(l)) {
            return Err(Error::Config(format!("no toolchain registered for `{missing}`")));
        }
        Ok(Self {
            by_language,
            probes: Arc::new(ProgrammingLanguage::ALL.map(|l| (l, OnceLock::new())).into_iter().collect()),
        })
    }

    /// Reads a `toolchains.json` array. Languages it omits keep their
    /// default adapter.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let list: Vec<Toolchain> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut merged: BTreeMap<_, _> = ProgrammingLanguage::ALL
            .map(|l| (l, Toolchain::default_for(l)))
            .into_iter()
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for t in list {
            if !seen.insert(t.language) {
                return Err(Error::Config(format!("duplicate toolchain for `{}`", t.language)));
            }
            merged.insert(t.language, t);
        }
        Self::from_list(merged.into_values().collect())
    }

    pub fn get(&self, language: ProgrammingLanguage) -> &Toolchain {
        &self.by_language[&language]
    }

    /// Runs the version probe once per language.
    pub fn status(&self, language: ProgrammingLanguage) -> ToolchainStatus {
        self.probes[&language]
            .get_or_init(|| {
                let tc = self.get(language);
                let dir = std::env::temp_dir();
                let limits = ProcessLimits {
                    wall_time: Duration::from_secs(30),
                    address_space: None,
                    output_cap: 64 * 1024,
                };
                let outcome = run_process(&tc.version, &dir, &base_env(&dir), b"", &limits, Phase::Build);
                match outcome {
                    Ok(o) if o.success() => {
                        let text = String::from_utf8_lossy(if o.stdout.is_empty() { &o.stderr } else { &o.stdout });
                        ToolchainStatus {
                            language,
                            available: true,
                            version: text.lines().next().map(|l| l.trim().to_string()),
                        }
                    }
                    _ => ToolchainStatus {
                        language,
                        available: false,
                        version: None,
                    },
                }
            })
            .clone()
    }

    pub fn available(&self, language: ProgrammingLanguage) -> bool {
        self.status(language).available
    }
}

const INHERITED_ENV: [&str; 7] = ["PATH", "RUSTUP_HOME", "CARGO_HOME", "RUSTUP_TOOLCHAIN", "JAVA_HOME", "GOROOT", "LD_LIBRARY_PATH"];

/// Minimal environment for toolchain processes.
pub fn base_env(dir: &Path) -> BTreeMap<String, String> {
    let mut env: BTreeMap<String, String> = INHERITED_ENV
        .iter()
        .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
        .collect();
    env.insert("HOME".into(), dir.display().to_string());
    env.insert("TMPDIR".into(), dir.display().to_string());
    env.insert("LANG".into(), "C.UTF-8".into());
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn java_entry_class() {
        assert_eq!(Toolchain::java_main_class("public class Solution {\n}"), "Solution");
        assert_eq!(
            Toolchain::java_main_class("class Helper {}\nclass App {\n public static void main(String[] a){}}"),
            "App"
        );
        assert_eq!(Toolchain::java_main_class("int x;"), "Main");
    }

    #[test]
    fn registry_requires_every_language() {
        let partial = vec![Toolchain::default_for(ProgrammingLanguage::Rust)];
        assert!(Toolchains::from_list(partial).is_err());
        let mut dup = ProgrammingLanguage::ALL.map(Toolchain::default_for).to_vec();
        dup.push(Toolchain::default_for(ProgrammingLanguage::Go));
        assert!(Toolchains::from_list(dup).is_err());
    }

    #[test]
    fn load_merges_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toolchains.json");
        let mut py = Toolchain::default_for(ProgrammingLanguage::Python);
        py.run = argv(&["python3", "-S", "{src}"]);
        std::fs::write(&path, serde_json::to_string(&vec![py.clone()]).unwrap()).unwrap();
        let tcs = Toolchains::load(&path).unwrap();
        assert_eq!(tcs.get(ProgrammingLanguage::Python), &py);
        assert_eq!(tcs.get(ProgrammingLanguage::Rust), &Toolchain::default_for(ProgrammingLanguage::Rust));
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let mut list = ProgrammingLanguage::ALL.map(Toolchain::default_for).to_vec();
        list[0].version = argv(&["definitely-not-a-compiler-xyz", "--version"]);
        let tcs = Toolchains::from_list(list).unwrap();
        assert!(!tcs.available(ProgrammingLanguage::Python));
    }
}
