//! Building and testing programs in resource-limited sandboxes.

pub mod compare;
pub mod sandbox;
pub mod toolchain;
mod validate;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tempfile::TempDir;
use thiserror::Error;

use crate::digest::{json_digest, sha256_hex};
use crate::lang::ProgrammingLanguage;
use crate::task::TestCase;

pub use compare::compare_output;
pub use sandbox::{Phase, ProcessLimits, ProcessOutcome};
pub use toolchain::{Toolchain, ToolchainStatus, Toolchains};
pub use validate::{validate_corpus, SolutionCheck, SolutionStatus, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecLimits {
    pub compile_wall_ms: u64,
    pub run_wall_ms: u64,
    pub memory_bytes: u64,
    pub output_bytes: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            compile_wall_ms: 60_000,
            run_wall_ms: 10_000,
            memory_bytes: 1 << 30,
            output_bytes: 16 << 20,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.compile_wall_ms == 0 || self.run_wall_ms == 0 || self.memory_bytes == 0 || self.output_bytes == 0 {
            return Err("execution limits must all be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStatus {
    Ok,
    CompileError,
    ToolchainMissing,
    Timeout,
    /// The candidate carried no code (generation or extraction failed).
    NoCode,
}

/// A built program ready to run. Owns its private working directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    workdir: Arc<TempDir>,
    run_argv: Vec<String>,
    env: std::collections::BTreeMap<String, String>,
    address_space: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildResult {
    pub status: BuildStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostics: String,
    #[serde(skip)]
    pub artifact: Option<Artifact>,
}

impl PartialEq for BuildResult {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status && self.diagnostics == other.diagnostics
    }
}

impl BuildResult {
    fn failed(status: BuildStatus, diagnostics: impl Into<String>) -> Self {
        Self {
            status,
            diagnostics: diagnostics.into(),
            artifact: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
    OutputOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub status: TestStatus,
    /// Captured stdout for failing tests, truncated at the output cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub build: BuildResult,
    pub test_outcomes: Vec<TestOutcome>,
    pub passed: bool,
}

impl Verdict {
    pub fn no_code(reason: impl Into<String>) -> Self {
        Self {
            build: BuildResult::failed(BuildStatus::NoCode, reason),
            test_outcomes: Vec::new(),
            passed: false,
        }
    }
}

/// Failures of the harness itself, as opposed to failures of the program
/// under test.
#[derive(Debug, Error)]
pub enum EnvironmentError {
    #[error("cannot create working directory: {0}")]
    Workdir(std::io::Error),
    #[error("cannot write source file: {0}")]
    WriteSource(std::io::Error),
    #[error("sandbox setup failed: {0}")]
    Sandbox(std::io::Error),
}

const DIAGNOSTICS_CAP: usize = 8 * 1024;

fn truncate_utf8(bytes: &[u8], cap: usize) -> String {
    let text = String::from_utf8_lossy(&bytes[..bytes.len().min(cap)]);
    text.into_owned()
}

/// Inserts candidate code into a driver template at `{{solution}}`.
pub fn apply_driver(driver: Option<&str>, code: &str) -> String {
    match driver {
        Some(d) => d.replacen("{{solution}}", code, 1),
        None => code.to_string(),
    }
}

fn process_limits(limits: &ExecLimits, phase: Phase, toolchain: &Toolchain) -> ProcessLimits {
    let (wall, cap) = match phase {
        Phase::Build => (limits.compile_wall_ms, DIAGNOSTICS_CAP * 8),
        Phase::Run => (limits.run_wall_ms, limits.output_bytes as usize),
    };
    ProcessLimits {
        wall_time: Duration::from_millis(wall),
        // compilers get headroom beyond the program cap
        address_space: match phase {
            Phase::Run => toolchain.limit_address_space.then_some(limits.memory_bytes),
            Phase::Build => None,
        },
        output_cap: cap,
    }
}

/// Writes `code` into a fresh private directory and builds it.
///
/// Interpreted languages are syntax-checked instead of compiled.
pub fn build_program(
    toolchains: &Toolchains,
    code: &str,
    language: ProgrammingLanguage,
    work_root: Option<&std::path::Path>,
    limits: &ExecLimits,
) -> Result<BuildResult, EnvironmentError> {
    if code.trim().is_empty() {
        return Ok(BuildResult::failed(BuildStatus::CompileError, "empty program"));
    }
    if !toolchains.available(language) {
        return Ok(BuildResult::failed(
            BuildStatus::ToolchainMissing,
            format!("no working {language} toolchain"),
        ));
    }
    let toolchain = toolchains.get(language);
    let workdir = match work_root {
        Some(root) => {
            std::fs::create_dir_all(root).map_err(EnvironmentError::Workdir)?;
            tempfile::Builder::new().prefix("build-").tempdir_in(root)
        }
        None => tempfile::Builder::new().prefix("polytrans-").tempdir(),
    }
    .map_err(EnvironmentError::Workdir)?;
    let dir = workdir.path().to_path_buf();
    let main_class = if language == ProgrammingLanguage::Java {
        Toolchain::java_main_class(code)
    } else {
        "Main".to_string()
    };
    let mut vars = toolchain::Vars {
        src: String::new(),
        exe: "main".into(),
        main_class,
        dir: dir.display().to_string(),
    };
    vars.src = vars.apply(&toolchain.source_file);
    std::fs::write(dir.join(&vars.src), code).map_err(EnvironmentError::WriteSource)?;

    let mut env = toolchain::base_env(&dir);
    for (k, v) in &toolchain.env {
        env.insert(k.clone(), vars.apply(v));
    }

    if let Some(compile) = &toolchain.compile {
        let argv = toolchain.expand(compile, &vars);
        let plimits = process_limits(limits, Phase::Build, toolchain);
        let outcome = match sandbox::run_process(&argv, &dir, &env, b"", &plimits, Phase::Build) {
            Ok(o) => o,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(BuildResult::failed(BuildStatus::ToolchainMissing, format!("{}: {e}", argv[0])))
            }
            Err(e) => return Err(EnvironmentError::Sandbox(e)),
        };
        if outcome.timed_out {
            return Ok(BuildResult::failed(BuildStatus::Timeout, "compilation timed out"));
        }
        if !outcome.success() {
            let mut diag = truncate_utf8(&outcome.stderr, DIAGNOSTICS_CAP);
            if diag.trim().is_empty() {
                diag = truncate_utf8(&outcome.stdout, DIAGNOSTICS_CAP);
            }
            // paths relative to the build directory keep verdicts reproducible
            let diag = diag.replace(&format!("{}/", vars.dir), "").replace(&vars.dir, ".");
            return Ok(BuildResult::failed(BuildStatus::CompileError, diag));
        }
    }

    Ok(BuildResult {
        status: BuildStatus::Ok,
        diagnostics: String::new(),
        artifact: Some(Artifact {
            workdir: Arc::new(workdir),
            run_argv: toolchain.expand(&toolchain.run, &vars),
            env,
            address_space: toolchain.limit_address_space,
        }),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Stop at the first failing test instead of recording every outcome.
    #[serde(default)]
    pub early_exit: bool,
}

/// Runs each test in a fresh process, input on stdin, output from stdout.
pub fn run_tests(
    build: BuildResult,
    tests: &[TestCase],
    limits: &ExecLimits,
    options: RunOptions,
) -> Result<Verdict, EnvironmentError> {
    let Some(artifact) = build.artifact.clone().filter(|_| build.status == BuildStatus::Ok) else {
        return Ok(Verdict {
            build,
            test_outcomes: Vec::new(),
            passed: false,
        });
    };
    let plimits = ProcessLimits {
        wall_time: Duration::from_millis(limits.run_wall_ms),
        address_space: artifact.address_space.then_some(limits.memory_bytes),
        output_cap: limits.output_bytes as usize,
    };
    let mut outcomes = Vec::with_capacity(tests.len());
    for test in tests {
        let o = sandbox::run_process(
            &artifact.run_argv,
            artifact.workdir.path(),
            &artifact.env,
            test.input.as_bytes(),
            &plimits,
            Phase::Run,
        )
        .map_err(EnvironmentError::Sandbox)?;
        let actual = String::from_utf8_lossy(&o.stdout).into_owned();
        let status = if o.timed_out {
            TestStatus::Timeout
        } else if o.output_overflow {
            TestStatus::OutputOverflow
        } else if o.exit_code != Some(0) {
            TestStatus::RuntimeError
        } else if compare_output(&test.expected_output, &actual, test.comparison) {
            TestStatus::Pass
        } else {
            TestStatus::WrongOutput
        };
        outcomes.push(TestOutcome {
            status,
            actual_output: (status != TestStatus::Pass).then_some(actual),
            exit_code: o.exit_code,
            duration_ms: o.duration.as_millis() as u64,
        });
        if options.early_exit && status != TestStatus::Pass {
            break;
        }
    }
    let passed = outcomes.len() == tests.len() && outcomes.iter().all(|o| o.status == TestStatus::Pass);
    Ok(Verdict {
        build: BuildResult { artifact: None, ..build },
        test_outcomes: outcomes,
        passed,
    })
}

/// Builds and tests candidates, memoizing verdicts by (language, program,
/// tests). Identical programs share one evaluation even when requested
/// concurrently.
pub struct Judge {
    toolchains: Toolchains,
    limits: ExecLimits,
    options: RunOptions,
    work_root: Option<PathBuf>,
    memo: Mutex<HashMap<String, Arc<OnceLock<Result<Verdict, String>>>>>,
}

impl Judge {
    pub fn new(toolchains: Toolchains, limits: ExecLimits) -> Self {
        Self {
            toolchains,
            limits,
            options: RunOptions::default(),
            work_root: None,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_work_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.work_root = Some(root.into());
        self
    }

    pub fn toolchains(&self) -> &Toolchains {
        &self.toolchains
    }

    pub fn limits(&self) -> &ExecLimits {
        &self.limits
    }

    /// Builds `code` (wrapped in `driver` when given) and runs `tests`.
    pub fn evaluate_uncached(
        &self,
        code: &str,
        language: ProgrammingLanguage,
        tests: &[TestCase],
        driver: Option<&str>,
    ) -> Result<Verdict, EnvironmentError> {
        let program = apply_driver(driver, code);
        let build = build_program(&self.toolchains, &program, language, self.work_root.as_deref(), &self.limits)?;
        run_tests(build, tests, &self.limits, self.options)
    }

    pub fn evaluate(
        &self,
        code: &str,
        language: ProgrammingLanguage,
        tests: &[TestCase],
        driver: Option<&str>,
    ) -> Result<Verdict, EnvironmentError> {
        let key = format!(
            "{language}:{}:{}:{}",
            sha256_hex(code.as_bytes()),
            json_digest(tests),
            sha256_hex(driver.unwrap_or("").as_bytes())
        );
        let cell = self.memo.lock().unwrap().entry(key).or_default().clone();
        cell.get_or_init(|| self.evaluate_uncached(code, language, tests, driver).map_err(|e| e.to_string()))
            .clone()
            .map_err(|e| EnvironmentError::Sandbox(std::io::Error::other(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Comparison;

    fn tc(input: &str, expected: &str) -> TestCase {
        TestCase {
            input: input.into(),
            expected_output: expected.into(),
            comparison: Comparison::Exact,
        }
    }

    fn fast_limits() -> ExecLimits {
        ExecLimits {
            run_wall_ms: 2_000,
            ..ExecLimits::default()
        }
    }

    fn python_available(t: &Toolchains) -> bool {
        let ok = t.available(ProgrammingLanguage::Python);
        if !ok {
            eprintln!("python3 not available; skipping");
        }
        ok
    }

    #[test]
    fn empty_program_is_a_compile_error() {
        let t = Toolchains::default();
        let b = build_program(&t, "  \n", ProgrammingLanguage::Rust, None, &ExecLimits::default()).unwrap();
        assert_eq!(b.status, BuildStatus::CompileError);
        assert!(b.artifact.is_none());
    }

    #[test]
    fn python_pass_wrong_and_timeout() {
        let t = Toolchains::default();
        if !python_available(&t) {
            return;
        }
        let judge = Judge::new(t, fast_limits());
        let tests = [tc("2 3\n", "5\n"), tc("1 1\n", "2\n")];
        let ok = judge
            .evaluate("a, b = map(int, input().split())\nprint(a + b)\n", ProgrammingLanguage::Python, &tests, None)
            .unwrap();
        assert!(ok.passed);
        assert_eq!(ok.test_outcomes.len(), 2);

        let silent = judge.evaluate("pass\n", ProgrammingLanguage::Python, &tests, None).unwrap();
        assert!(!silent.passed);
        assert_eq!(silent.test_outcomes[0].status, TestStatus::WrongOutput);
        assert_eq!(silent.test_outcomes[0].actual_output.as_deref(), Some(""));
        assert_eq!(silent.test_outcomes.len(), 2, "no early exit by default");

        let looping = judge.evaluate("while True:\n    pass\n", ProgrammingLanguage::Python, &tests[..1], None).unwrap();
        assert_eq!(looping.test_outcomes[0].status, TestStatus::Timeout);
        assert!(!looping.passed);
    }

    #[test]
    fn early_exit_option() {
        let t = Toolchains::default();
        if !python_available(&t) {
            return;
        }
        let judge = Judge::new(t, fast_limits()).with_options(RunOptions { early_exit: true });
        let tests = [tc("", "x"), tc("", "y")];
        let v = judge.evaluate("print('z')\n", ProgrammingLanguage::Python, &tests, None).unwrap();
        assert_eq!(v.test_outcomes.len(), 1);
    }

    #[test]
    fn syntax_error_is_compile_error() {
        let t = Toolchains::default();
        if !python_available(&t) {
            return;
        }
        let judge = Judge::new(t, fast_limits());
        let v = judge.evaluate("def f(:\n", ProgrammingLanguage::Python, &[tc("", "")], None).unwrap();
        assert_eq!(v.build.status, BuildStatus::CompileError);
        assert!(v.test_outcomes.is_empty());
        assert!(!v.passed);
    }

    #[test]
    fn driver_wraps_solution() {
        let t = Toolchains::default();
        if !python_available(&t) {
            return;
        }
        let judge = Judge::new(t, fast_limits());
        let driver = "import sys, json\n{{solution}}\nfor line in sys.stdin:\n    print(json.dumps(add(*json.loads(line))))\n";
        let v = judge
            .evaluate("def add(a, b):\n    return a + b\n", ProgrammingLanguage::Python, &[tc("[1, 2]\n", "3")], Some(driver))
            .unwrap();
        assert!(v.passed, "{v:?}");
    }

    #[test]
    fn missing_toolchain_is_reported() {
        let mut list = ProgrammingLanguage::ALL.map(Toolchain::default_for).to_vec();
        list[5].version = vec!["no-such-rustc-xyz".into()];
        let t = Toolchains::from_list(list).unwrap();
        let b = build_program(&t, "fn main(){}", ProgrammingLanguage::Rust, None, &ExecLimits::default()).unwrap();
        assert_eq!(b.status, BuildStatus::ToolchainMissing);
    }
}
