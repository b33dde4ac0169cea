use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::grid::{GridReport, Mode, Summary};
use crate::dataset::Scheme;
use crate::error::Result;

fn score(f1: Option<f64>) -> String {
    f1.map_or_else(|| "failed".to_string(), |v| format!("{v:.4}"))
}

/// Results table with one row per dataset: centralized, mean local party,
/// then the federated score for each partition scheme.
pub fn render_table(summaries: &[Summary]) -> String {
    let mut out = String::new();
    out.push_str("| Dataset | Centralized | Local (avg) | Even | A | B | C | D |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for s in summaries {
        let centralized = score(s.centralized);
        let local = s
            .local_party_avg
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = write!(out, "| {} | {centralized} | {local} |", s.title);
        for scheme in Scheme::ALL {
            let cell = if s.infeasible.contains(&scheme) {
                "n/a".to_string()
            } else if let Some(entry) = s.federated.iter().find(|f| f.scheme == scheme) {
                score(entry.f1)
            } else {
                "-".to_string()
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    if let Some(first) = summaries.first() {
        let _ = writeln!(
            out,
            "\nF1 ({} average) on the holdout set. `n/a`: scheme infeasible for the dataset.",
            first.f1_average
        );
    }
    out
}

/// Per-dataset report: the summary row followed by every cell.
pub fn render_dataset(report: &GridReport) -> String {
    let s = &report.summary;
    let mut out = format!("# {}\n\n", s.title);
    out.push_str(&render_table(std::slice::from_ref(s)));
    if let Some(spread) = s.federated_spread() {
        let _ = writeln!(out, "\nFederated spread across schemes: {spread:.4}");
    }
    out.push_str("\n| Mode | Scheme | Party | Rows | F1 | Final loss | Config hash |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for c in &report.cells {
        let scheme = c.scheme.map_or("-", Scheme::as_str);
        let party = c.party.map_or_else(|| "-".to_string(), |p| p.to_string());
        let f1 = match (&c.f1, &c.error) {
            (Some(v), _) => format!("{v:.4}"),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "-".to_string(),
        };
        let loss = c
            .loss_log
            .last()
            .map_or_else(|| "-".to_string(), |l| format!("{:.5}", l.train_loss));
        let _ = writeln!(
            out,
            "| {} | {scheme} | {party} | {} | {f1} | {loss} | `{}` |",
            c.mode.as_str(),
            c.train_rows,
            &c.config_hash[..12.min(c.config_hash.len())]
        );
    }
    let locals = report
        .cells
        .iter()
        .filter(|c| c.mode == Mode::Local)
        .count();
    if locals > 0 {
        let _ = writeln!(
            out,
            "\nLocal average over {} of {locals} party models.",
            s.local_party_models
        );
    }
    out
}

/// Reads every `*/summary.json` under `out_dir`, ordered by dataset name.
pub fn collect_summaries(out_dir: &Path) -> Result<Vec<Summary>> {
    let mut summaries = Vec::new();
    if !out_dir.is_dir() {
        return Ok(summaries);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    dirs.sort();
    for dir in dirs {
        let text = fs::read_to_string(dir.join("summary.json"))?;
        summaries.push(serde_json::from_str(&text)?);
    }
    Ok(summaries)
}

/// Rewrites `out_dir/summary.md` from the dataset summaries found there.
pub fn write_report(out_dir: &Path) -> Result<PathBuf> {
    let summaries = collect_summaries(out_dir)?;
    let path = out_dir.join("summary.md");
    fs::create_dir_all(out_dir)?;
    fs::write(&path, render_table(&summaries))?;
    Ok(path)
}
