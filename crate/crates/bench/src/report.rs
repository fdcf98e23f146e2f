//! CSV and Markdown rendering of a result bundle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::ModelId;
use crate::runner::ResultBundle;
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(format!("unknown format '{other}' (expected csv or md)")),
        }
    }
}

/// Six significant digits; non-finite values print as `inf`, `-inf`, `nan`.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{v:.5e}");
    let (_, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        format!("{v:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn markdown(&self, title: &str) -> String {
        let mut out = format!("### {title}\n\n| {} |\n|", self.header.join(" | "));
        for _ in &self.header {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }
}

fn rmse_table(b: &ResultBundle) -> Table {
    let vehicle = b.model == ModelId::Vehicle;
    let mut header = vec!["estimator", "params", "full"];
    if vehicle {
        header.extend(["position", "velocity"]);
    }
    header.extend(["diverged_runs", "divergence_events", "mean_iterations"]);
    let rows = b
        .estimators
        .iter()
        .map(|e| {
            let mut row = vec![e.variant.display_name().to_string(), e.params.clone(), fmt_sig6(e.full.average)];
            if let (Some(p), Some(v)) = (&e.position, &e.velocity) {
                row.push(fmt_sig6(p.average));
                row.push(fmt_sig6(v.average));
            } else if vehicle {
                row.extend(["nan".to_string(), "nan".to_string()]);
            }
            row.push(e.diverged_runs.to_string());
            row.push(e.divergence_events.to_string());
            row.push(fmt_sig6(e.mean_iterations));
            row
        })
        .collect();
    Table {
        header: header.into_iter().map(String::from).collect(),
        rows,
    }
}

fn timing_table(b: &ResultBundle) -> Table {
    Table {
        header: vec!["estimator".into(), "median_step_seconds".into(), "mean_step_seconds".into()],
        rows: b
            .estimators
            .iter()
            .map(|e| {
                vec![
                    e.variant.display_name().to_string(),
                    fmt_sig6(e.median_step_seconds),
                    fmt_sig6(e.mean_step_seconds),
                ]
            })
            .collect(),
    }
}

fn training_table(b: &ResultBundle) -> Table {
    let mut rows = Vec::new();
    for t in &b.training {
        for s in &t.scores {
            rows.push(vec![
                t.variant.display_name().to_string(),
                fmt_sig6(s.width),
                s.diverged_runs.to_string(),
                fmt_sig6(s.rmse),
                (s.width == t.chosen).to_string(),
            ]);
        }
    }
    Table {
        header: vec![
            "estimator".into(),
            "width".into(),
            "diverged_runs".into(),
            "training_rmse".into(),
            "chosen".into(),
        ],
        rows,
    }
}

/// Long-format per-step series, full precision.
fn series_csv(b: &ResultBundle) -> String {
    let mut out = String::from("estimator,group,step,rmse\n");
    for e in &b.estimators {
        let mut groups = vec![("full", &e.full)];
        if let (Some(p), Some(v)) = (&e.position, &e.velocity) {
            groups.push(("position", p));
            groups.push(("velocity", v));
        }
        for (g, s) in groups {
            for (i, v) in s.values.iter().enumerate() {
                let _ = writeln!(out, "{},{g},{},{v}", e.variant.tag(), i + 1);
            }
        }
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, BenchError> {
    fs::write(&path, contents).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the metric tables in `format` plus the series CSV into `dir`;
/// returns the written paths.
pub fn emit_tables(b: &ResultBundle, format: Format, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let stem = &b.scenario;
    let mut written = Vec::new();
    let tables = [
        ("rmse", "Average RMSE", rmse_table(b)),
        ("timing", "Single-step time", timing_table(b)),
        ("training", "Baseline width training", training_table(b)),
    ];
    match format {
        Format::Csv => {
            for (suffix, _, t) in &tables {
                written.push(write(dir.join(format!("{stem}_{suffix}.csv")), &t.csv())?);
            }
        }
        Format::Markdown => {
            let mut md = format!(
                "## {stem}\n\n{} Monte-Carlo runs, {} steps, master seed {}.\n\n",
                b.runs, b.horizon, b.seed
            );
            for (_, title, t) in &tables {
                md.push_str(&t.markdown(title));
                md.push('\n');
            }
            written.push(write(dir.join(format!("{stem}.md")), &md)?);
        }
    }
    written.push(write(dir.join(format!("{stem}_series.csv")), &series_csv(b))?);
    Ok(written)
}
