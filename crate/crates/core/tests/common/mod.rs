#![allow(dead_code)]

use std::path::{Path, PathBuf};

use polytrans::run::RunConfig;
use polytrans::strategy::StrategyKind;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

pub fn mock_script() -> PathBuf {
    fixtures().join("mock_script.json")
}

/// Mock-backed run over the fixture corpus.
pub fn mock_config(output_dir: &Path, strategies: &[StrategyKind], repeats: u32) -> RunConfig {
    RunConfig {
        corpus: corpus_dir(),
        mock_script: Some(mock_script()),
        strategies: strategies.to_vec(),
        repeats,
        output_dir: output_dir.to_path_buf(),
        ..RunConfig::default()
    }
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("started_at");
            map.remove("finished_at");
            map.remove("duration_ms");
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// `records.jsonl` with timestamps and durations removed, line by line.
pub fn normalized_records(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        strip_timing(&mut v);
        out.push_str(&serde_json::to_string(&v).unwrap());
        out.push('\n');
    }
    out
}
