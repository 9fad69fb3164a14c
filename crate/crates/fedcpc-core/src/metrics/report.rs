//! Report artifacts: metrics CSV and an SVG confusion heatmap.

use super::{ConfusionMatrix, MetricsReport, CLASS_NAMES, N_CLASSES};
use crate::error::{CoreError, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Which averaging the summary row in the CSV uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Macro,
    Weighted,
}

/// Render a fraction as a percentage with one decimal (0.753 -> "75.3").
pub fn format_percent(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

/// Write `metrics.csv` (per-class rows plus an averaged row) and an SVG
/// confusion heatmap beside it. The CSV stores full-precision fractions so a
/// re-parse reproduces the report exactly.
pub fn emit_report(
    report: &MetricsReport,
    cm: &ConfusionMatrix,
    csv_path: &Path,
    svg_path: &Path,
    averaging: Averaging,
) -> Result<()> {
    let mut csv = String::from("class,precision,recall,f1\n");
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        let m = &report.per_class[c];
        writeln!(csv, "{name},{},{},{}", m.precision, m.recall, m.f1)
            .expect("string write cannot fail");
    }
    let (p, r, f, label) = match averaging {
        Averaging::Macro => (
            report.macro_precision,
            report.macro_recall,
            report.macro_f1,
            "macro",
        ),
        Averaging::Weighted => {
            let (p, r, f) = report.weighted(cm);
            (p, r, f, "weighted")
        }
    };
    writeln!(csv, "{label},{p},{r},{f}").expect("string write cannot fail");
    fs::write(csv_path, csv)?;
    fs::write(svg_path, render_heatmap(report, cm, averaging))?;
    Ok(())
}

/// Parse a CSV produced by [`emit_report`]: returns (per-class rows, summary).
pub fn parse_report_csv(text: &str) -> Result<(Vec<(String, f64, f64, f64)>, (String, f64, f64, f64))> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "class,precision,recall,f1" {
                return Err(CoreError::Config(format!("unexpected header {line:?}")));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CoreError::Config(format!("bad metrics row {line:?}")));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| CoreError::Config(format!("bad number {s:?}: {e}")))
        };
        rows.push((parts[0].to_string(), parse(parts[1])?, parse(parts[2])?, parse(parts[3])?));
    }
    let summary = rows.pop().ok_or_else(|| CoreError::Config("empty metrics csv".into()))?;
    Ok((rows, summary))
}

fn render_heatmap(report: &MetricsReport, cm: &ConfusionMatrix, averaging: Averaging) -> String {
    let cell = 80.0;
    let x0 = 90.0;
    let y0 = 70.0;
    let width = x0 + cell * N_CLASSES as f64 + 30.0;
    let height = y0 + cell * N_CLASSES as f64 + 70.0;
    let max = cm
        .total()
        .max(1)
        .min(cm.counts_flat().iter().copied().max().unwrap_or(1).max(1));
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"14\">"
    )
    .unwrap();
    writeln!(
        s,
        "  <text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">Confusion matrix (true rows, predicted columns)</text>",
        width / 2.0
    )
    .unwrap();
    for (r, row_name) in CLASS_NAMES.iter().enumerate() {
        writeln!(
            s,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{row_name}</text>",
            x0 - 10.0,
            y0 + cell * (r as f64 + 0.5) + 5.0
        )
        .unwrap();
        for (c, col_name) in CLASS_NAMES.iter().enumerate() {
            if r == 0 {
                writeln!(
                    s,
                    "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{col_name}</text>",
                    x0 + cell * (c as f64 + 0.5),
                    y0 - 12.0
                )
                .unwrap();
            }
            let count = cm.count(r, c);
            let intensity = count as f64 / max as f64;
            let shade = (255.0 - 175.0 * intensity) as u8;
            let fill = format!("rgb({shade},{},255)", (255 - (90.0 * intensity) as u8));
            let x = x0 + cell * c as f64;
            let y = y0 + cell * r as f64;
            writeln!(
                s,
                "  <rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#333\"/>"
            )
            .unwrap();
            writeln!(
                s,
                "  <text class=\"cell-count\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{count}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 5.0
            )
            .unwrap();
        }
    }
    let f1 = match averaging {
        Averaging::Macro => report.macro_f1,
        Averaging::Weighted => report.weighted(cm).2,
    };
    writeln!(
        s,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{} F1: {} ({} examples)</text>",
        width / 2.0,
        y0 + cell * N_CLASSES as f64 + 36.0,
        match averaging {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        },
        format_percent(f1),
        report.n_examples
    )
    .unwrap();
    writeln!(s, "</svg>").unwrap();
    s
}

impl ConfusionMatrix {
    fn counts_flat(&self) -> Vec<u64> {
        (0..N_CLASSES)
            .flat_map(|r| (0..N_CLASSES).map(move |c| self.count(r, c)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::macro_metrics;

    fn sample() -> (MetricsReport, ConfusionMatrix) {
        let cm = ConfusionMatrix::from_counts([[20, 3, 1], [4, 15, 2], [1, 2, 12]]);
        (macro_metrics(&cm).unwrap(), cm)
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let (rep, cm) = sample();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("metrics.csv");
        let svg = dir.path().join("confusion.svg");
        emit_report(&rep, &cm, &csv, &svg, Averaging::Macro).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let (rows, summary) = parse_report_csv(&text).unwrap();
        assert_eq!(rows.len(), 3);
        for (c, row) in rows.iter().enumerate() {
            assert_eq!(row.0, CLASS_NAMES[c]);
            assert_eq!(row.1, rep.per_class[c].precision);
            assert_eq!(row.2, rep.per_class[c].recall);
            assert_eq!(row.3, rep.per_class[c].f1);
        }
        assert_eq!(summary.0, "macro");
        assert_eq!(summary.1, rep.macro_precision);
        assert_eq!(summary.3, rep.macro_f1);
    }

    #[test]
    fn svg_has_nine_cells_and_nine_counts() {
        let (rep, cm) = sample();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        let svg = dir.path().join("c.svg");
        emit_report(&rep, &cm, &csv, &svg, Averaging::Macro).unwrap();
        let text = std::fs::read_to_string(&svg).unwrap();
        assert_eq!(text.matches("<rect class=\"cell\"").count(), 9);
        assert_eq!(text.matches("class=\"cell-count\"").count(), 9);
    }

    #[test]
    fn percent_rendering_has_one_decimal() {
        assert_eq!(format_percent(0.753), "75.3");
        assert_eq!(format_percent(0.7), "70.0");
        assert_eq!(format_percent(1.0), "100.0");
    }

    #[test]
    fn weighted_summary_available_behind_flag() {
        let (rep, cm) = sample();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        let svg = dir.path().join("c.svg");
        emit_report(&rep, &cm, &csv, &svg, Averaging::Weighted).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let (_, summary) = parse_report_csv(&text).unwrap();
        assert_eq!(summary.0, "weighted");
        let (wp, _, wf) = rep.weighted(&cm);
        assert_eq!(summary.1, wp);
        assert_eq!(summary.3, wf);
    }
}
