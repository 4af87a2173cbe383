//! The `polytrans` binary against the fixture corpus and the mock provider.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn polytrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polytrans"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus() -> PathBuf {
    fixtures().join("corpus")
}

/// A mock translation of two problems into C++ and Rust.
fn translate(out: &Path, run_id: &str, extra: &[&str]) -> Output {
    let corpus = corpus();
    let script = fixtures().join("mock_script.json");
    let mut args = vec![
        "translate",
        "--corpus",
        path(&corpus),
        "--mock-script",
        path(&script),
        "--output-dir",
        path(out),
        "--run-id",
        run_id,
        "--problem",
        "sum-of-evens,can-make-square",
        "--source",
        "python",
        "--target",
        "cpp,rust",
        "--strategy",
        "D,D&PC",
        "--repeats",
        "1",
        "--budget",
        "4",
    ];
    args.extend_from_slice(extra);
    polytrans(&args)
}

#[test]
fn validate_reports_and_exits_by_outcome() {
    let corpus = corpus();
    let out = polytrans(&["validate", "--corpus", path(&corpus), "--skip-missing"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    assert!(text(&out).contains("of 30 solutions"), "{}", text(&out));

    let out = polytrans(&["validate", "--corpus", path(&corpus)]);
    let toolchains = polytrans::exec::Toolchains::default();
    if !polytrans::ProgrammingLanguage::ALL.iter().all(|l| toolchains.available(*l)) {
        assert_eq!(out.status.code(), Some(2), "{}", text(&out));
        assert!(text(&out).contains("TOOLCHAIN MISSING"), "{}", text(&out));
    } else {
        assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    }
}

#[test]
fn validate_names_a_broken_solution() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = polytrans::task::load_corpus(&corpus()).unwrap();
    corpus.save(dir.path()).unwrap();
    let file = dir.path().join("running-average/solutions/python.py");
    let code = std::fs::read_to_string(&file).unwrap();
    std::fs::write(&file, code.replacen("print(", "print(2 * ", 1)).unwrap();
    let out = polytrans(&["validate", "--corpus", path(dir.path()), "--skip-missing", "--json"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(text(&out).contains("running-average"), "{}", text(&out));
}

#[test]
fn translate_resume_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let cache = dir.path().join("cache");
    let out = translate(&runs, "t", &["--cache-dir", path(&cache)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "completed");
    // 2 problems x 2 targets x 2 strategies, 4 attempts each
    assert_eq!(summary["items_total"], 8);
    let records = runs.join("t/records.jsonl");
    let full = std::fs::read_to_string(&records).unwrap();
    assert_eq!(full.lines().count(), 32);

    // the same id is refused, a cut-short run resumes to the same length
    let again = translate(&runs, "t", &[]);
    assert_eq!(again.status.code(), Some(1), "{}", text(&again));
    let kept: Vec<&str> = full.lines().take(13).collect();
    std::fs::write(&records, kept.join("\n") + "\n").unwrap();
    let out = polytrans(&["translate", "--resume", "t", "--output-dir", path(&runs)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let resumed = std::fs::read_to_string(&records).unwrap();
    assert_eq!(resumed.lines().count(), 32);
    let keys: std::collections::BTreeSet<(String, u64)> = resumed
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (
                v["item_id"].as_str().unwrap().to_string(),
                v["candidate"]["attempt_index"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(keys.len(), 32);

    let reports = dir.path().join("reports");
    let out = polytrans(&[
        "report",
        "--run",
        path(&runs.join("t")),
        "--k",
        "1,4",
        "--base",
        "D",
        "--group-by",
        "source,target",
        "--format",
        "csv,json,svg",
        "--out",
        path(&reports),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let csv = std::fs::read_to_string(reports.join("report.csv")).unwrap();
    assert!(csv.starts_with("source,target,pass@1,pass@4,"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
    let svg = std::fs::read_to_string(reports.join("report.vs-D.svg")).unwrap();
    assert_eq!(svg.matches("class=\"cell ").count(), 36);
    assert!(reports.join("report.vs-D.json").is_file());
    assert!(reports.join("report.attempts.csv").is_file());

    // only can-make-square is newer than the cutoff
    let out = polytrans(&[
        "report",
        "--run",
        path(&runs.join("t")),
        "--k",
        "4",
        "--group-by",
        "strategy",
        "--released-after",
        "2024-06-01",
        "--out",
        path(&reports),
        "--name",
        "newer",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let rows = polytrans::metrics::read_attempts_csv(&reports.join("newer.attempts.csv")).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.problem_id == "can-make-square"));

    // a report over too few attempts fails unless partial units are allowed
    let out = polytrans(&["report", "--run", path(&runs.join("t")), "--k", "10", "--out", path(&reports)]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));

    let out = polytrans(&["cache", "stats", "--cache-dir", path(&cache)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let stats = text(&out);
    let entries: u64 = stats.split_whitespace().next().unwrap().parse().unwrap();
    assert!(entries > 0, "{stats}");
    let out = polytrans(&["cache", "clear", "--cache-dir", path(&cache)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out));
    let out = polytrans(&["cache", "stats", "--cache-dir", path(&cache)]);
    assert!(text(&out).starts_with("0 entries"), "{}", text(&out));
}

#[test]
fn transitive_strategy_through_the_source_language_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = translate(dir.path(), "pl", &["--strategy", "D_and_PL:python"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(text(&out).contains("python"), "{}", text(&out));
    assert!(!dir.path().join("pl").exists());
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let script = fixtures().join("mock_script.json");
    let out = polytrans(&["translate", "--corpus", path(&missing), "--mock-script", path(&script)]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(text(&out).contains("does not exist"), "{}", text(&out));

    let out = polytrans(&["translate", "--strategy", "D&Q"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));

    let config = dir.path().join("run.toml");
    std::fs::write(&config, "repeats = 2\nunknown_setting = true\n").unwrap();
    let out = polytrans(&["translate", "--config", path(&config)]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
    assert!(text(&out).contains("unknown_setting"), "{}", text(&out));

    let out = polytrans(&["report", "--run", path(&missing)]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out));
}

#[test]
fn missing_api_key_is_an_environment_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = translate(
        dir.path(),
        "k",
        &[
            "--endpoint",
            "http://127.0.0.1:9",
            "--api-key-env",
            "POLYTRANS_TEST_KEY_THAT_IS_NOT_SET",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
}
