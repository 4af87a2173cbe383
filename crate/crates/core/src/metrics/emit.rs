//! CSV, JSON and SVG heatmap output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{AttemptRow, CellStatus, Dimension, GroupKey, ImprovementGrid, MetricsError, PassReport, PassRow};
use crate::lang::ProgrammingLanguage;
use crate::strategy::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Svg => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg-heatmap" => Ok(Self::Svg),
            other => Err(MetricsError::Unsupported(format!("unknown report format `{other}`"))),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), MetricsError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn pass_column(k: u32) -> String {
    format!("pass@{k}")
}

fn pass_report_csv(report: &PassReport) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = report.group_by.iter().map(|d| d.name().to_string()).collect();
    header.extend(report.ks.iter().map(|k| pass_column(*k)));
    header.extend(["task_count".to_string(), "attempt_count".to_string()]);
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec: Vec<String> = report.group_by.iter().map(|d| row.key.value(*d)).collect();
        // Display for f64 is the shortest text that parses back exactly
        rec.extend(report.ks.iter().map(|k| row.pass_at_k[k].to_string()));
        rec.push(row.task_count.to_string());
        rec.push(row.attempt_count.to_string());
        w.write_record(&rec)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Writes a pass@k table as CSV or JSON.
pub fn write_pass_report(report: &PassReport, format: ReportFormat, path: &Path) -> Result<(), MetricsError> {
    let bytes = match format {
        ReportFormat::Csv => pass_report_csv(report).map_err(|e| io_err(path, e))?,
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).map_err(|e| io_err(path, e))?;
            v.push(b'\n');
            v
        }
        ReportFormat::Svg => {
            return Err(MetricsError::Unsupported(
                "heatmaps are drawn from improvement grids, not pass@k tables".into(),
            ))
        }
    };
    write_file(path, &bytes)
}

/// Reads a CSV written by [`write_pass_report`].
pub fn read_pass_report_csv(path: &Path) -> Result<PassReport, MetricsError> {
    let parse = |line: usize, message: String| MetricsError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| parse(1, e.to_string()))?.iter().map(String::from).collect();
    let mut group_by = Vec::new();
    let mut ks = Vec::new();
    for h in &header {
        if let Some(k) = h.strip_prefix("pass@") {
            ks.push(k.parse::<u32>().map_err(|e| parse(1, e.to_string()))?);
        } else if h != "task_count" && h != "attempt_count" {
            group_by.push(h.parse::<Dimension>()?);
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse(line, e.to_string()))?;
        let mut key = GroupKey::default();
        let mut pass = BTreeMap::new();
        let mut task_count = 0;
        let mut attempt_count = 0;
        for (h, v) in header.iter().zip(rec.iter()) {
            if let Some(k) = h.strip_prefix("pass@") {
                let rate: f64 = v.parse().map_err(|e| parse(line, format!("{h}: {e}")))?;
                pass.insert(k.parse().expect("checked in header"), rate);
            } else if h == "task_count" {
                task_count = v.parse().map_err(|e| parse(line, format!("{h}: {e}")))?;
            } else if h == "attempt_count" {
                attempt_count = v.parse().map_err(|e| parse(line, format!("{h}: {e}")))?;
            } else {
                key.set(h.parse()?, v).map_err(|e| parse(line, e))?;
            }
        }
        rows.push(PassRow {
            key,
            pass_at_k: pass,
            task_count,
            attempt_count,
        });
    }
    Ok(PassReport {
        group_by,
        ks,
        rows,
        excluded: Vec::new(),
    })
}

/// Writes attempts as flat CSV rows.
pub fn write_attempts_csv(rows: &[AttemptRow], path: &Path) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    write_file(path, &w.into_inner().expect("in-memory writer"))
}

pub fn read_attempts_csv(path: &Path) -> Result<Vec<AttemptRow>, MetricsError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| MetricsError::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn grid_csv(grid: &ImprovementGrid) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["base".to_string(), "treatment".to_string()];
    header.extend(grid.group_by.iter().map(|d| d.name().to_string()));
    header.extend(
        ["base_rate", "treatment_rate", "relative_improvement", "display", "status"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &grid.cells {
        let mut rec = vec![c.base_strategy.to_string(), c.treatment_strategy.to_string()];
        rec.extend(grid.group_by.iter().map(|d| c.group.value(*d)));
        rec.push(opt(c.base_rate));
        rec.push(opt(c.treatment_rate));
        rec.push(opt(c.relative_improvement));
        rec.push(c.display());
        rec.push(
            match c.status {
                CellStatus::Defined => "defined",
                CellStatus::Undefined => "undefined",
                CellStatus::Missing => "missing",
            }
            .to_string(),
        );
        w.write_record(&rec)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Writes an improvement grid as CSV, JSON or an SVG heatmap.
pub fn write_grid(grid: &ImprovementGrid, format: ReportFormat, path: &Path) -> Result<(), MetricsError> {
    let bytes = match format {
        ReportFormat::Csv => grid_csv(grid).map_err(|e| io_err(path, e))?,
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(grid).map_err(|e| io_err(path, e))?;
            v.push(b'\n');
            v
        }
        ReportFormat::Svg => render_heatmap(grid)?.into_bytes(),
    };
    write_file(path, &bytes)
}

const CELL_W: u32 = 92;
const CELL_H: u32 = 40;
const LABEL_W: u32 = 110;
const TITLE_H: u32 = 34;
const HEADER_H: u32 = 30;
const PANEL_GAP: u32 = 30;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn blend(from: (u8, u8, u8), to: (u8, u8, u8), t: f64) -> String {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(from.0, to.0), mix(from.1, to.1), mix(from.2, to.2))
}

const WHITE: (u8, u8, u8) = (0xf7, 0xf7, 0xf7);
const GREEN: (u8, u8, u8) = (0x1a, 0x98, 0x50);
const RED: (u8, u8, u8) = (0xd7, 0x30, 0x27);

/// Draws one 6×6 source-by-target grid per treatment (and per value of
/// any other grouped dimension). Green cells improved on the base, red
/// cells got worse; color intensity scales with the magnitude relative to
/// the largest magnitude in the panel.
pub fn render_heatmap(grid: &ImprovementGrid) -> Result<String, MetricsError> {
    if !grid.group_by.contains(&Dimension::Source) || !grid.group_by.contains(&Dimension::Target) {
        return Err(MetricsError::Unsupported(
            "a heatmap needs an improvement grid grouped by source and target".into(),
        ));
    }
    if grid.cells.is_empty() {
        return Err(MetricsError::Unsupported("cannot draw a heatmap of an empty grid".into()));
    }
    let mut panels: BTreeMap<(StrategyKind, GroupKey), Vec<&super::ImprovementCell>> = BTreeMap::new();
    for c in &grid.cells {
        let mut rest = c.group.clone();
        rest.source_language = None;
        rest.target_language = None;
        panels.entry((c.treatment_strategy, rest)).or_default().push(c);
    }

    let langs = ProgrammingLanguage::ALL;
    let n = langs.len() as u32;
    let panel_w = LABEL_W + n * CELL_W;
    let panel_h = TITLE_H + HEADER_H + n * CELL_H;
    let width = panel_w + 20;
    let height = panels.len() as u32 * (panel_h + PANEL_GAP) + 10;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">"#
    );
    for (p, ((treatment, rest), cells)) in panels.iter().enumerate() {
        let y0 = 10 + p as u32 * (panel_h + PANEL_GAP);
        let x0 = 10;
        let mut title = format!("{treatment} vs {} (pass@{})", grid.base, grid.k);
        let extra = rest.describe();
        if !extra.is_empty() {
            title.push_str(&format!(", {extra}"));
        }
        let _ = writeln!(
            svg,
            r#"<g class="panel" data-treatment="{}"><text class="title" x="{x0}" y="{}" font-size="15" font-weight="bold">{}</text>"#,
            xml_escape(&treatment.to_string()),
            y0 + 20,
            xml_escape(&title)
        );
        let _ = writeln!(
            svg,
            r##"<text class="axis" x="{x0}" y="{}" fill="#555555">source / target</text>"##,
            y0 + TITLE_H + 20
        );
        for (j, l) in langs.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text class="col-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x0 + LABEL_W + j as u32 * CELL_W + CELL_W / 2,
                y0 + TITLE_H + 20,
                xml_escape(l.display_name())
            );
        }
        let by_pair: BTreeMap<_, _> = cells
            .iter()
            .filter_map(|c| Some(((c.group.source_language?, c.group.target_language?), *c)))
            .collect();
        let max_abs = cells
            .iter()
            .filter_map(|c| c.relative_improvement)
            .map(f64::abs)
            .fold(0.0, f64::max);
        for (i, src) in langs.iter().enumerate() {
            let y = y0 + TITLE_H + HEADER_H + i as u32 * CELL_H;
            let _ = writeln!(
                svg,
                r#"<text class="row-label" x="{x0}" y="{}">{}</text>"#,
                y + CELL_H / 2 + 5,
                xml_escape(src.display_name())
            );
            for (j, tgt) in langs.iter().enumerate() {
                let x = x0 + LABEL_W + j as u32 * CELL_W;
                let (class, fill, label) = if src == tgt {
                    ("diagonal", "#ffffff".to_string(), String::new())
                } else {
                    match by_pair.get(&(*src, *tgt)) {
                        None => ("empty", "#ffffff".to_string(), String::new()),
                        Some(c) => match (c.status, c.relative_improvement) {
                            (CellStatus::Defined, Some(v)) => {
                                let t = if max_abs > 0.0 { (v.abs() / max_abs).min(1.0) } else { 0.0 };
                                let label = c.display();
                                if label == "0.00%" {
                                    ("zero", blend(WHITE, WHITE, 0.0), label)
                                } else if v > 0.0 {
                                    ("positive", blend(WHITE, GREEN, 0.15 + 0.85 * t), label)
                                } else {
                                    ("negative", blend(WHITE, RED, 0.15 + 0.85 * t), label)
                                }
                            }
                            _ => ("na", "#d9d9d9".to_string(), c.display()),
                        },
                    }
                };
                let _ = writeln!(
                    svg,
                    r##"<rect class="cell {class}" data-source="{src}" data-target="{tgt}" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#bbbbbb"/>"##
                );
                if !label.is_empty() {
                    let _ = writeln!(
                        svg,
                        r#"<text class="value" x="{}" y="{}" text-anchor="middle">{}</text>"#,
                        x + CELL_W / 2,
                        y + CELL_H / 2 + 5,
                        xml_escape(&label)
                    );
                }
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
