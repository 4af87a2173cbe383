//! pass@k aggregation over run records and relative improvements between
//! strategies.

mod emit;
mod records;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::ProgrammingLanguage;
use crate::strategy::StrategyKind;
use crate::task::Difficulty;

pub use emit::{
    read_attempts_csv, read_pass_report_csv, render_heatmap, write_attempts_csv, write_grid, write_pass_report,
    ReportFormat,
};
pub use records::{read_records, RecordWriter, RunRecord, RECORD_SCHEMA_VERSION};
pub(crate) use records::parse_record;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("conflicting duplicate records for {0}")]
    Conflict(String),
    #[error("{unit} has {found} of the first {k} attempts in repeat {repeat}")]
    InsufficientAttempts { unit: String, repeat: u32, k: u32, found: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: record schema version {found} is incompatible with {expected}")]
    SchemaMismatch { path: String, line: usize, found: u32, expected: u32 },
    #[error("strategy {0} does not occur in the records")]
    MissingStrategy(StrategyKind),
    #[error("{0}")]
    Unsupported(String),
    #[error("unknown group dimension `{0}` (expected difficulty, source, target, model, strategy or repeat)")]
    UnknownDimension(String),
}

/// One attempt's outcome with the fields reports group by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub run_id: String,
    pub model: String,
    pub problem_id: String,
    pub source_language: ProgrammingLanguage,
    pub target_language: ProgrammingLanguage,
    pub difficulty: Difficulty,
    pub release_date: Option<NaiveDate>,
    pub strategy: StrategyKind,
    pub repeat_index: u32,
    pub attempt_index: u32,
    pub passed: bool,
}

type UnitKey = (String, String, String, ProgrammingLanguage, ProgrammingLanguage, StrategyKind);

impl AttemptRow {
    /// The unit pass@k counts: one task under one strategy, model and run.
    fn unit(&self) -> UnitKey {
        (
            self.run_id.clone(),
            self.model.clone(),
            self.problem_id.clone(),
            self.source_language,
            self.target_language,
            self.strategy,
        )
    }

    fn describe_unit(&self) -> String {
        format!(
            "{}:{}->{} [{} {} run {}]",
            self.problem_id, self.source_language, self.target_language, self.strategy, self.model, self.run_id
        )
    }
}

/// Dimensions rows can be grouped by, in their serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Difficulty,
    Source,
    Target,
    Model,
    Strategy,
    Repeat,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Self::Difficulty,
        Self::Source,
        Self::Target,
        Self::Model,
        Self::Strategy,
        Self::Repeat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Difficulty => "difficulty",
            Self::Source => "source",
            Self::Target => "target",
            Self::Model => "model",
            Self::Strategy => "strategy",
            Self::Repeat => "repeat",
        }
    }

    /// Parses a comma-separated list into a sorted, duplicate-free set.
    pub fn parse_list(s: &str) -> Result<Vec<Dimension>, MetricsError> {
        let set: BTreeSet<_> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        Ok(set.into_iter().collect())
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "difficulty" => Ok(Self::Difficulty),
            "source" | "source_language" => Ok(Self::Source),
            "target" | "target_language" => Ok(Self::Target),
            "model" => Ok(Self::Model),
            "strategy" => Ok(Self::Strategy),
            "repeat" => Ok(Self::Repeat),
            other => Err(MetricsError::UnknownDimension(other.to_string())),
        }
    }
}

/// Values of the grouped dimensions; the others are `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_language: Option<ProgrammingLanguage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_language: Option<ProgrammingLanguage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
}

impl GroupKey {
    pub fn of(row: &AttemptRow, dims: &[Dimension]) -> Self {
        let mut key = GroupKey::default();
        for d in dims {
            match d {
                Dimension::Difficulty => key.difficulty = Some(row.difficulty),
                Dimension::Source => key.source_language = Some(row.source_language),
                Dimension::Target => key.target_language = Some(row.target_language),
                Dimension::Model => key.model = Some(row.model.clone()),
                Dimension::Strategy => key.strategy = Some(row.strategy),
                Dimension::Repeat => key.repeat = Some(row.repeat_index),
            }
        }
        key
    }

    /// The value of `dim` as text, empty when not grouped.
    pub fn value(&self, dim: Dimension) -> String {
        match dim {
            Dimension::Difficulty => self.difficulty.map(|d| d.as_str().to_string()),
            Dimension::Source => self.source_language.map(|l| l.id().to_string()),
            Dimension::Target => self.target_language.map(|l| l.id().to_string()),
            Dimension::Model => self.model.clone(),
            Dimension::Strategy => self.strategy.map(|s| s.to_string()),
            Dimension::Repeat => self.repeat.map(|r| r.to_string()),
        }
        .unwrap_or_default()
    }

    pub fn set(&mut self, dim: Dimension, value: &str) -> Result<(), String> {
        let opt = |v: &str| (!v.is_empty()).then(|| v.to_string());
        match dim {
            Dimension::Difficulty => self.difficulty = opt(value).map(|v| v.parse().map_err(|e| format!("{e}"))).transpose()?,
            Dimension::Source => self.source_language = opt(value).map(|v| v.parse().map_err(|e| format!("{e}"))).transpose()?,
            Dimension::Target => self.target_language = opt(value).map(|v| v.parse().map_err(|e| format!("{e}"))).transpose()?,
            Dimension::Model => self.model = opt(value),
            Dimension::Strategy => self.strategy = opt(value).map(|v| v.parse().map_err(|e| format!("{e}"))).transpose()?,
            Dimension::Repeat => self.repeat = opt(value).map(|v| v.parse().map_err(|e| format!("{e}"))).transpose()?,
        }
        Ok(())
    }

    fn without(&self, dim: Dimension) -> Self {
        let mut k = self.clone();
        match dim {
            Dimension::Difficulty => k.difficulty = None,
            Dimension::Source => k.source_language = None,
            Dimension::Target => k.target_language = None,
            Dimension::Model => k.model = None,
            Dimension::Strategy => k.strategy = None,
            Dimension::Repeat => k.repeat = None,
        }
        k
    }

    /// `dim=value` pairs of the grouped dimensions.
    pub fn describe(&self) -> String {
        Dimension::ALL
            .iter()
            .filter_map(|d| {
                let v = self.value(*d);
                (!v.is_empty()).then(|| format!("{d}={v}"))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Attempt outcomes indexed by repeat, task and attempt.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerdictMatrix {
    pub repeats: Vec<Vec<Vec<bool>>>,
}

impl VerdictMatrix {
    pub fn single(tasks: Vec<Vec<bool>>) -> Self {
        Self { repeats: vec![tasks] }
    }
}

/// Fraction of tasks with a pass among their first `k` attempts, computed
/// per repeat and averaged over repeats. Repeats without tasks are ignored;
/// `None` when no repeat has tasks.
pub fn pass_at_k(matrix: &VerdictMatrix, k: u32) -> Result<Option<f64>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let mut rates = Vec::new();
    for (r, tasks) in matrix.repeats.iter().enumerate() {
        if tasks.is_empty() {
            continue;
        }
        let mut passed = 0usize;
        for (t, attempts) in tasks.iter().enumerate() {
            if attempts.len() < k as usize {
                return Err(MetricsError::InsufficientAttempts {
                    unit: format!("task {t}"),
                    repeat: r as u32,
                    k,
                    found: attempts.len(),
                });
            }
            if attempts[..k as usize].iter().any(|&p| p) {
                passed += 1;
            }
        }
        rates.push(passed as f64 / tasks.len() as f64);
    }
    Ok((!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRow {
    pub key: GroupKey,
    pub pass_at_k: BTreeMap<u32, f64>,
    pub task_count: usize,
    pub attempt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub group_by: Vec<Dimension>,
    pub ks: Vec<u32>,
    pub rows: Vec<PassRow>,
    /// Units left out for lacking attempts, when that was allowed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
}

impl PassReport {
    pub fn row(&self, key: &GroupKey) -> Option<&PassRow> {
        self.rows
            .binary_search_by(|r| r.key.cmp(key))
            .ok()
            .map(|i| &self.rows[i])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateOptions {
    /// Leave out units lacking attempts instead of failing.
    pub allow_partial: bool,
}

/// Rejects conflicting duplicates and drops identical ones.
fn dedup(rows: &[AttemptRow]) -> Result<Vec<&AttemptRow>, MetricsError> {
    let mut seen: BTreeMap<(UnitKey, u32, u32), &AttemptRow> = BTreeMap::new();
    for row in rows {
        let key = (row.unit(), row.repeat_index, row.attempt_index);
        match seen.get(&key) {
            Some(prev) if *prev != row => {
                return Err(MetricsError::Conflict(format!(
                    "{} repeat {} attempt {}",
                    row.describe_unit(),
                    row.repeat_index,
                    row.attempt_index
                )))
            }
            Some(_) => {}
            None => {
                seen.insert(key, row);
            }
        }
    }
    Ok(seen.into_values().collect())
}

/// Groups attempts by `group_by` and computes pass@k for every `k`. Rows
/// come out sorted by key, and the result does not depend on input order.
pub fn aggregate(
    rows: &[AttemptRow],
    group_by: &[Dimension],
    ks: &[u32],
    options: AggregateOptions,
) -> Result<PassReport, MetricsError> {
    let dims: Vec<Dimension> = group_by.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let ks: Vec<u32> = ks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ks.contains(&0) {
        return Err(MetricsError::ZeroK);
    }
    // group -> repeat -> unit -> attempt -> passed
    type Units<'a> = BTreeMap<UnitKey, (BTreeMap<u32, bool>, &'a AttemptRow)>;
    let mut groups: BTreeMap<GroupKey, BTreeMap<u32, Units>> = BTreeMap::new();
    for row in dedup(rows)? {
        groups
            .entry(GroupKey::of(row, &dims))
            .or_default()
            .entry(row.repeat_index)
            .or_default()
            .entry(row.unit())
            .or_insert_with(|| (BTreeMap::new(), row))
            .0
            .insert(row.attempt_index, row.passed);
    }

    let mut out = Vec::new();
    let mut excluded = BTreeSet::new();
    for (key, repeats) in groups {
        let mut pass = BTreeMap::new();
        let mut units_seen = BTreeSet::new();
        let mut attempt_count = 0;
        for &k in &ks {
            let mut matrix = VerdictMatrix::default();
            for (&repeat, units) in &repeats {
                let mut tasks = Vec::new();
                for (unit, (attempts, sample)) in units {
                    let first_k: Vec<bool> = (0..k).map_while(|i| attempts.get(&i).copied()).collect();
                    if first_k.len() < k as usize {
                        if !options.allow_partial {
                            return Err(MetricsError::InsufficientAttempts {
                                unit: sample.describe_unit(),
                                repeat,
                                k,
                                found: first_k.len(),
                            });
                        }
                        excluded.insert(format!("{} repeat {repeat}: fewer than {k} attempts", sample.describe_unit()));
                        continue;
                    }
                    units_seen.insert(unit.clone());
                    tasks.push(first_k);
                }
                matrix.repeats.push(tasks);
            }
            if let Some(rate) = pass_at_k(&matrix, k)? {
                pass.insert(k, rate);
            }
        }
        if pass.len() != ks.len() || units_seen.is_empty() {
            continue;
        }
        for units in repeats.values() {
            attempt_count += units
                .iter()
                .filter(|(u, _)| units_seen.contains(*u))
                .map(|(_, (a, _))| a.len())
                .sum::<usize>();
        }
        out.push(PassRow {
            key,
            pass_at_k: pass,
            task_count: units_seen.len(),
            attempt_count,
        });
    }
    Ok(PassReport {
        group_by: dims,
        ks,
        rows: out,
        excluded: excluded.into_iter().collect(),
    })
}

/// Percent change from `base` to `treatment`; undefined when `base` is 0.
pub fn relative_improvement(base: f64, treatment: f64) -> Option<f64> {
    (base > 0.0).then(|| 100.0 * (treatment - base) / base)
}

/// Two-decimal display with ties rounded to even: `+3.09%`, `-1.20%`,
/// `0.00%`, or `n/a` when undefined.
pub fn format_improvement(value: Option<f64>) -> String {
    let Some(v) = value else {
        return "n/a".to_string();
    };
    let cents = (v * 100.0).round_ties_even();
    if cents == 0.0 {
        return "0.00%".to_string();
    }
    let sign = if cents > 0.0 { "+" } else { "-" };
    format!("{sign}{:.2}%", cents.abs() / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Defined,
    /// The base rate is zero.
    Undefined,
    /// The base or treatment has no records for this group.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCell {
    pub base_strategy: StrategyKind,
    pub treatment_strategy: StrategyKind,
    pub group: GroupKey,
    pub base_rate: Option<f64>,
    pub treatment_rate: Option<f64>,
    pub relative_improvement: Option<f64>,
    pub status: CellStatus,
}

impl ImprovementCell {
    pub fn display(&self) -> String {
        match self.status {
            CellStatus::Missing => "missing".to_string(),
            _ => format_improvement(self.relative_improvement),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementGrid {
    pub base: StrategyKind,
    pub treatments: Vec<StrategyKind>,
    pub k: u32,
    pub group_by: Vec<Dimension>,
    pub cells: Vec<ImprovementCell>,
}

impl ImprovementGrid {
    pub fn cell(&self, treatment: StrategyKind, group: &GroupKey) -> Option<&ImprovementCell> {
        self.cells
            .iter()
            .find(|c| c.treatment_strategy == treatment && &c.group == group)
    }
}

/// pass@k of each treatment relative to `base`, per group. Rates are
/// repeat-averaged before the percentage is taken.
pub fn compare_strategies(
    rows: &[AttemptRow],
    base: StrategyKind,
    treatments: &[StrategyKind],
    group_by: &[Dimension],
    k: u32,
    options: AggregateOptions,
) -> Result<ImprovementGrid, MetricsError> {
    let present: BTreeSet<_> = rows.iter().map(|r| r.strategy).collect();
    for s in std::iter::once(&base).chain(treatments) {
        if !present.contains(s) {
            return Err(MetricsError::MissingStrategy(*s));
        }
    }
    let wanted: BTreeSet<_> = std::iter::once(base).chain(treatments.iter().copied()).collect();
    let selected: Vec<AttemptRow> = rows.iter().filter(|r| wanted.contains(&r.strategy)).cloned().collect();
    let mut dims: Vec<Dimension> = group_by.iter().copied().filter(|d| *d != Dimension::Strategy).collect();
    dims.sort();
    dims.dedup();
    let mut with_strategy = dims.clone();
    with_strategy.push(Dimension::Strategy);
    let report = aggregate(&selected, &with_strategy, &[k], options)?;

    let groups: BTreeSet<GroupKey> = report.rows.iter().map(|r| r.key.without(Dimension::Strategy)).collect();
    let rate = |group: &GroupKey, s: StrategyKind| {
        let mut key = group.clone();
        key.strategy = Some(s);
        report.row(&key).map(|r| r.pass_at_k[&k])
    };
    let mut cells = Vec::new();
    for &t in treatments {
        for g in &groups {
            let (b, tr) = (rate(g, base), rate(g, t));
            let (improvement, status) = match (b, tr) {
                (Some(b), Some(tr)) => match relative_improvement(b, tr) {
                    Some(v) => (Some(v), CellStatus::Defined),
                    None => (None, CellStatus::Undefined),
                },
                _ => (None, CellStatus::Missing),
            };
            cells.push(ImprovementCell {
                base_strategy: base,
                treatment_strategy: t,
                group: g.clone(),
                base_rate: b,
                treatment_rate: tr,
                relative_improvement: improvement,
                status,
            });
        }
    }
    Ok(ImprovementGrid {
        base,
        treatments: treatments.to_vec(),
        k,
        group_by: dims,
        cells,
    })
}

/// Keeps rows of problems released strictly after `cutoff`; rows without
/// a release date are dropped.
pub fn released_after(rows: Vec<AttemptRow>, cutoff: NaiveDate) -> Vec<AttemptRow> {
    rows.into_iter().filter(|r| r.release_date.is_some_and(|d| d > cutoff)).collect()
}
