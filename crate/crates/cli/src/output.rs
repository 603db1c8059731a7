//! Output artifacts: stable CSV tables, the per-gt JSON summary and the
//! grouped-bar SVG.
//!
//! Float columns use 17 significant digits in scientific notation, which
//! round-trips every f64 exactly; rows end in a bare line feed. Byte
//! identity across reruns follows from the determinism of the inputs.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::PriorRow;
use rfla::analysis::IntervalHistogram;
use rfla::assignment::{AssignmentResult, Label};
use rfla::geometry::BBox;

/// Round-trip-exact float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a gts CSV with header `cx,cy,w,h`. Errors name the offending
/// 1-based data row.
pub fn parse_gts_csv(text: &str) -> Result<Vec<BBox>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim();
    if header != "cx,cy,w,h" {
        bail!("gts file must start with the header 'cx,cy,w,h', got '{header}'");
    }
    let mut boxes = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            bail!("gts file row {row}: expected 4 fields, got {}", fields.len());
        }
        let mut vals = [0.0f64; 4];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .with_context(|| format!("gts file row {row}: '{field}' is not a number"))?;
        }
        boxes.push(
            BBox::new(vals[0], vals[1], vals[2], vals[3])
                .with_context(|| format!("gts file row {row}"))?,
        );
    }
    Ok(boxes)
}

/// Label table: one row per prior.
/// Background rows leave the gt/stage/score fields empty.
pub fn labels_csv(priors: &[PriorRow], result: &AssignmentResult) -> String {
    let mut out = String::from("flat_id,level,px,py,er,label,gt_index,stage,score\n");
    for (prior, label) in priors.iter().zip(result.labels()) {
        let (kind, gt, stage, score) = match label {
            Label::Positive { gt, stage, score } => (
                "positive",
                gt.to_string(),
                stage.index().to_string(),
                fmt_f64(*score),
            ),
            Label::Background => ("background", String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            prior.flat_id,
            prior.level,
            fmt_f64(prior.px),
            fmt_f64(prior.py),
            fmt_f64(prior.er),
            kind,
            gt,
            stage,
            score
        )
        .expect("string writes cannot fail");
    }
    out
}

#[derive(Serialize)]
struct GtSummary {
    index: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    positives: u64,
    max_score: Option<f64>,
}

#[derive(Serialize)]
struct AssignSummary {
    assigner: String,
    n_priors: usize,
    n_gts: usize,
    n_positives: u64,
    supplement_positives: u64,
    gts: Vec<GtSummary>,
}

/// Per-gt JSON summary of one assignment run.
pub fn summary_json(assigner: &str, gts: &[BBox], result: &AssignmentResult) -> Result<String> {
    let summary = AssignSummary {
        assigner: assigner.to_string(),
        n_priors: result.labels().len(),
        n_gts: gts.len(),
        n_positives: result.total_positives(),
        supplement_positives: result.supplement_positives(),
        gts: gts
            .iter()
            .enumerate()
            .map(|(i, b)| GtSummary {
                index: i,
                cx: b.cx(),
                cy: b.cy(),
                w: b.w(),
                h: b.h(),
                positives: result.positive_count(i),
                max_score: result.max_score(i),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).context("serializing summary")?;
    text.push('\n');
    Ok(text)
}

/// Histogram table: one row per (assigner, interval).
pub fn histogram_csv(histograms: &[(String, IntervalHistogram)]) -> String {
    let mut out = String::from("assigner,interval_lo,interval_hi,n_gts,mean_pos,std_pos\n");
    for (name, hist) in histograms {
        for s in &hist.intervals {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                name,
                fmt_f64(s.scale_lo),
                fmt_f64(s.scale_hi),
                s.n_gts,
                fmt_f64(s.mean_positives),
                fmt_f64(s.stddev_positives)
            )
            .expect("string writes cannot fail");
        }
    }
    out
}

/// Sweep table: one row per swept value.
pub fn sweep_csv(param: &str, entries: &[(f64, IntervalHistogram)]) -> String {
    let mut out =
        String::from("param,value,mean_pos_overall,min_interval_mean,max_interval_mean,imbalance\n");
    for (value, hist) in entries {
        let s = hist.summary();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            param,
            fmt_f64(*value),
            fmt_f64(s.mean_pos_overall),
            fmt_f64(s.min_interval_mean),
            fmt_f64(s.max_interval_mean),
            fmt_f64(s.imbalance)
        )
        .expect("string writes cannot fail");
    }
    out
}

const PALETTE: [&str; 6] = [
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#eeca3b",
];

/// Self-contained grouped-bar chart of mean positives per interval, one
/// bar group per interval, one color per assigner, numeric labels above
/// the bars.
pub fn histogram_svg(histograms: &[(String, IntervalHistogram)]) -> String {
    let n_groups = histograms
        .first()
        .map(|(_, h)| h.intervals.len())
        .unwrap_or(0);
    let n_series = histograms.len();

    let margin_left = 60.0;
    let margin_right = 20.0;
    let margin_top = 40.0;
    let margin_bottom = 50.0;
    let bar_w = 14.0;
    let group_gap = 12.0;
    let group_w = bar_w * n_series as f64 + group_gap;
    let plot_w = group_w * n_groups as f64;
    let plot_h = 360.0;
    let width = margin_left + plot_w + margin_right;
    let height = margin_top + plot_h + margin_bottom;

    let max_mean = histograms
        .iter()
        .flat_map(|(_, h)| h.intervals.iter().map(|s| s.mean_positives))
        .fold(0.0f64, f64::max)
        .max(1e-9);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{margin_left:.0}\" y=\"20\" font-size=\"13\">mean positives per gt by object scale</text>"
    );

    // y axis with five ticks.
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = margin_top + plot_h * (1.0 - frac);
        let value = max_mean * frac;
        let _ = writeln!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#cccccc\"/>",
            margin_left,
            margin_left + plot_w
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{value:.2}</text>",
            margin_left - 6.0,
            y + 3.0
        );
    }

    for (series, (name, hist)) in histograms.iter().enumerate() {
        let color = PALETTE[series % PALETTE.len()];
        for (g, s) in hist.intervals.iter().enumerate() {
            let x = margin_left + g as f64 * group_w + series as f64 * bar_w;
            let h = plot_h * (s.mean_positives / max_mean);
            let y = margin_top + plot_h - h;
            let _ = writeln!(
                svg,
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>",
                bar_w - 2.0
            );
            let _ = writeln!(
                svg,
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"7\" text-anchor=\"middle\" \
                 transform=\"rotate(-90 {:.1} {:.1})\">{:.2}</text>",
                x + bar_w / 2.0,
                y - 3.0,
                x + bar_w / 2.0,
                y - 3.0,
                s.mean_positives
            );
        }
        // legend entry
        let lx = margin_left + 10.0 + series as f64 * 150.0;
        let _ = writeln!(
            svg,
            "  <rect x=\"{lx:.1}\" y=\"28\" width=\"10\" height=\"10\" fill=\"{color}\"/>"
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"37\" font-size=\"10\">{name}</text>",
            lx + 14.0
        );
    }

    // x labels: interval bounds under each group.
    if let Some((_, hist)) = histograms.first() {
        for (g, s) in hist.intervals.iter().enumerate() {
            let x = margin_left + g as f64 * group_w + (group_w - group_gap) / 2.0;
            let y = margin_top + plot_h + 14.0;
            let _ = writeln!(
                svg,
                "  <text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"8\" text-anchor=\"middle\">({:.0},{:.0}]</text>",
                s.scale_lo, s.scale_hi
            );
        }
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">object scale (px)</text>",
            margin_left + plot_w / 2.0,
            margin_top + plot_h + 34.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_f64_round_trips() {
        for x in [
            0.0,
            1.0,
            2.0 / 3.0,
            1.0 / 65.0,
            f64::MIN_POSITIVE,
            123456.789e12,
            -0.1,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn gts_csv_happy_path() {
        let boxes = parse_gts_csv("cx,cy,w,h\n10,20,4,8\n1.5, 2.5, 3.5, 4.5\n").unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0].w(), 4.0);
        assert_eq!(boxes[1].cy(), 2.5);
    }

    #[test]
    fn gts_csv_names_the_bad_row() {
        let err = parse_gts_csv("cx,cy,w,h\n10,20,4,8\n10,20,0,8\n").unwrap_err();
        assert!(format!("{err:#}").contains("row 2"), "{err:#}");

        let err = parse_gts_csv("cx,cy,w,h\nfoo,20,4,8\n").unwrap_err();
        assert!(format!("{err:#}").contains("row 1"), "{err:#}");

        let err = parse_gts_csv("x1,y1,x2,y2\n").unwrap_err();
        assert!(format!("{err:#}").contains("header"), "{err:#}");
    }

    #[test]
    fn csv_tables_have_lf_endings_and_headers() {
        let table = sweep_csv("beta", &[]);
        assert!(table.starts_with("param,value,"));
        assert!(table.ends_with('\n'));
        assert!(!table.contains('\r'));
    }
}
