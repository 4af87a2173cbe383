//! Plain-text tables for the terminal.

use polytrans::metrics::{ImprovementGrid, PassReport};

fn render(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    for row in &rows {
        out.push_str(&line(row));
    }
    out
}

pub fn pass_table(report: &PassReport) -> String {
    let mut header: Vec<String> = report.group_by.iter().map(|d| d.to_string()).collect();
    header.extend(report.ks.iter().map(|k| format!("pass@{k}")));
    header.push("tasks".into());
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = report.group_by.iter().map(|d| r.key.value(*d)).collect();
            cells.extend(report.ks.iter().map(|k| format!("{:.4}", r.pass_at_k[k])));
            cells.push(r.task_count.to_string());
            cells
        })
        .collect();
    render(header, rows)
}

pub fn grid_table(grid: &ImprovementGrid) -> String {
    let mut header: Vec<String> = grid.group_by.iter().map(|d| d.to_string()).collect();
    header.extend([
        "treatment".to_string(),
        format!("{}@{}", grid.base, grid.k),
        "treatment@k".to_string(),
        "improvement".to_string(),
    ]);
    let rate = |r: Option<f64>| r.map_or("-".to_string(), |v| format!("{v:.4}"));
    let rows = grid
        .cells
        .iter()
        .map(|c| {
            let mut cells: Vec<String> = grid.group_by.iter().map(|d| c.group.value(*d)).collect();
            cells.extend([
                c.treatment_strategy.to_string(),
                rate(c.base_rate),
                rate(c.treatment_rate),
                c.display(),
            ]);
            cells
        })
        .collect();
    render(header, rows)
}
