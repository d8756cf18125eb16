//! Tables, per-class breakdowns and image triples from campaign reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::write_pgm;
use crate::error::{Error, Result};
use crate::fuzz::CampaignReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub attempts: usize,
    pub successes: usize,
    pub mean_l1: Option<f64>,
    pub mean_l2: Option<f64>,
    pub mean_iterations: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerClassStats {
    pub rows: Vec<ClassRow>,
}

/// Groups cases by reference label. Distances average over successes,
/// iterations over all attempts.
pub fn per_class_stats(report: &CampaignReport) -> PerClassStats {
    let classes = report
        .cases
        .iter()
        .map(|c| c.reference_label + 1)
        .max()
        .unwrap_or(0)
        .max(report.classes);
    let rows = (0..classes)
        .map(|class| {
            let cases: Vec<_> = report.cases.iter().filter(|c| c.reference_label == class).collect();
            let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            ClassRow {
                class,
                attempts: cases.len(),
                successes: cases.iter().filter(|c| c.success).count(),
                mean_l1: mean(cases.iter().filter_map(|c| c.l1).collect()),
                mean_l2: mean(cases.iter().filter_map(|c| c.l2).collect()),
                mean_iterations: mean(cases.iter().map(|c| c.iterations as f64).collect()),
            }
        })
        .collect();
    PerClassStats { rows }
}

impl PerClassStats {
    /// `class,attempts,successes,mean_l1,mean_l2,mean_iterations`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,attempts,successes,mean_l1,mean_l2,mean_iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.class,
                r.attempts,
                r.successes,
                opt(r.mean_l1),
                opt(r.mean_l2),
                opt(r.mean_iterations)
            );
        }
        out
    }

    /// Class with the largest mean iteration count (lowest index on ties).
    pub fn hardest_class(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in &self.rows {
            if let Some(m) = r.mean_iterations {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((r.class, m));
                }
            }
        }
        best.map(|(c, _)| c)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

pub const TABLE_ROWS: [&str; 4] = ["mean_l1", "mean_l2", "mean_iterations", "secs_per_1k_successes"];

/// Strategy comparison table: one column per report, rows in [`TABLE_ROWS`]
/// order. Distances of exempt strategies (shift) carry a `*` in the text form.
pub fn render_table(reports: &[CampaignReport]) -> RenderedTable {
    let headers: Vec<String> = reports
        .iter()
        .map(|r| {
            let mut name = r.strategy().name().to_string();
            if !r.config.guided {
                name.push_str("(unguided)");
            }
            name
        })
        .collect();
    let cells: Vec<[Option<f64>; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.summary.mean_l1,
                r.summary.mean_l2,
                Some(r.summary.mean_iterations),
                r.secs_per_1k_successes,
            ]
        })
        .collect();

    let mut csv = String::from("metric");
    for h in &headers {
        csv.push(',');
        csv.push_str(h);
    }
    csv.push('\n');
    if !reports.is_empty() {
        for (row, name) in TABLE_ROWS.iter().enumerate() {
            csv.push_str(name);
            for c in &cells {
                csv.push(',');
                csv.push_str(&opt(c[row]));
            }
            csv.push('\n');
        }
    }

    let label_width = TABLE_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
    let text_cells: Vec<Vec<String>> = TABLE_ROWS
        .iter()
        .enumerate()
        .map(|(row, _)| {
            reports
                .iter()
                .zip(&cells)
                .map(|(r, c)| {
                    let mut s = c[row].map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                    if row < 2 && r.strategy().is_distance_exempt() && c[row].is_some() {
                        s.push('*');
                    }
                    s
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            text_cells
                .iter()
                .map(|row| row[i].len())
                .chain(std::iter::once(h.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut text = format!("{:<label_width$}", "metric");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(text, "  {h:>w$}");
    }
    text.push('\n');
    if !reports.is_empty() {
        for (name, row) in TABLE_ROWS.iter().zip(&text_cells) {
            let _ = write!(text, "{name:<label_width$}");
            for (cell, w) in row.iter().zip(&widths) {
                let _ = write!(text, "  {cell:>w$}");
            }
            text.push('\n');
        }
    }
    RenderedTable { text, csv }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleFiles {
    pub original: String,
    pub mask: String,
    pub adversarial: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleEntry {
    pub input_index: usize,
    pub reference_label: usize,
    pub adversarial_label: usize,
    pub l1: f64,
    pub l2: f64,
    pub iterations: usize,
    pub files: TripleFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleIndex {
    pub schema_version: u32,
    pub strategy: String,
    pub cases: Vec<TripleEntry>,
}

pub const TRIPLE_INDEX_FILE: &str = "index.json";

/// Writes `case_NNNNN/{original,mask,adversarial}.pgm` for up to `limit`
/// successful cases plus `index.json`. Returns the image paths written.
pub fn emit_case_triples(report: &CampaignReport, out_dir: impl AsRef<Path>, limit: usize) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for case in report.successes().take(limit) {
        let adversarial = case
            .adversarial
            .as_ref()
            .ok_or_else(|| Error::Format(format!("case {} has no adversarial image", case.input_index)))?;
        let dir_name = format!("case_{:05}", case.input_index);
        let dir = out_dir.join(&dir_name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mask = adversarial.abs_diff(&case.original)?;
        for (name, img) in [
            ("original.pgm", &case.original),
            ("mask.pgm", &mask),
            ("adversarial.pgm", adversarial),
        ] {
            let path = dir.join(name);
            write_pgm(img, &path)?;
            written.push(path);
        }
        entries.push(TripleEntry {
            input_index: case.input_index,
            reference_label: case.reference_label,
            adversarial_label: case.adversarial_label.unwrap_or(case.reference_label),
            l1: case.l1.unwrap_or_default(),
            l2: case.l2.unwrap_or_default(),
            iterations: case.iterations,
            files: TripleFiles {
                original: format!("{dir_name}/original.pgm"),
                mask: format!("{dir_name}/mask.pgm"),
                adversarial: format!("{dir_name}/adversarial.pgm"),
            },
        });
    }
    let index = TripleIndex {
        schema_version: 1,
        strategy: report.strategy().name().into(),
        cases: entries,
    };
    let index_path = out_dir.join(TRIPLE_INDEX_FILE);
    fs::write(&index_path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&index_path, e))?;
    Ok(written)
}
