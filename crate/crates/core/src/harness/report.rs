//! Aggregation of sweep rows and deterministic SVG / markdown rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExperimentMode, ResultRow};
use crate::error::{NicaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mode: ExperimentMode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// The headline metric of a mode: matched MI for synthetic data, test error
/// for EEG.
pub fn headline_metric(mode: ExperimentMode) -> &'static str {
    match mode {
        ExperimentMode::Eeg => "test_error",
        _ => "mean_mi",
    }
}

fn metric_value(row: &ResultRow) -> Option<f64> {
    match row.mode {
        ExperimentMode::Eeg => row.test_error,
        _ => row.mean_mi,
    }
}

/// Mean ± standard error of the headline metric per `(mode, N, R)`, over the
/// successful trials.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(ExperimentMode, usize, usize), Vec<f64>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.is_ok()) {
        if let Some(v) = metric_value(row) {
            groups.entry((row.mode, row.n, row.r)).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .map(|((mode, n, r), vals)| {
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let stderr = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                mode,
                n,
                r,
                metric: headline_metric(mode).into(),
                mean,
                stderr,
                count: vals.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub svg: String,
    pub markdown: String,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of the metric against `R` (log₂ axis) with standard-error bars,
/// one series per `N`, plus a markdown table. Identical input gives identical
/// bytes.
pub fn render_report(rows: &[AggregateRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(NicaError::EmptyTable);
    }
    if rows.iter().any(|r| r.r == 0 || !r.mean.is_finite()) {
        return Err(NicaError::invalid("aggregated rows need R > 0 and finite means"));
    }
    let mut series: BTreeMap<usize, Vec<&AggregateRow>> = BTreeMap::new();
    for row in rows {
        series.entry(row.n).or_default().push(row);
    }
    for pts in series.values_mut() {
        pts.sort_by_key(|p| p.r);
    }

    let lx = |r: usize| (r as f64).log2();
    let (mut x_lo, mut x_hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(lx(p.r)), hi.max(lx(p.r)))
    });
    if x_hi - x_lo < 1.0 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let (mut y_lo, mut y_hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.mean - p.stderr), hi.max(p.mean + p.stderr))
    });
    let pad = ((y_hi - y_lo) * 0.08).max(1e-3);
    y_lo -= pad;
    y_hi += pad;

    let px = |v: f64| LEFT + (v - x_lo) / (x_hi - x_lo) * (W - LEFT - RIGHT);
    let py = |v: f64| H - BOTTOM - (v - y_lo) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let metric = rows[0].metric.clone();
    let mode = rows[0].mode;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{mode}: {metric} vs R</text>"#,
        (LEFT + W - RIGHT) / 2.0
    );
    // axes
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{ax0:.1},{ay1:.1} L{ax0:.1},{ay0:.1} L{ax1:.1},{ay0:.1}" fill="none" stroke="black"/>"#
    );
    let mut ticks: Vec<usize> = rows.iter().map(|r| r.r).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for r in ticks {
        let x = px(lx(r));
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{ay0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#,
            ay0 + 5.0,
            ay0 + 20.0
        );
    }
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * f64::from(i) / 4.0;
        let y = py(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{ax0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            ax0 - 5.0,
            ax0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">R (log2 scale)</text>"#,
        (ax0 + ax1) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{metric}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0
    );

    for (k, (n, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(lx(p.r)), py(p.mean))).collect();
        if coords.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
        }
        for p in pts {
            let x = px(lx(p.r));
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/><circle cx="{x:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#,
                py(p.mean - p.stderr),
                py(p.mean + p.stderr),
                py(p.mean)
            );
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">N={n}</text>"#,
            ax1 + 15.0,
            ax1 + 40.0,
            ax1 + 45.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");

    let mut md = String::new();
    let _ = writeln!(md, "# {mode} sweep\n");
    let _ = writeln!(md, "| N | R | {metric} (mean) | stderr | trials |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for pts in series.values() {
        for p in pts {
            let _ = writeln!(md, "| {} | {} | {:.4} | {:.4} | {} |", p.n, p.r, p.mean, p.stderr, p.count);
        }
    }
    for (n, pts) in &series {
        let best = if mode == ExperimentMode::Eeg {
            pts.iter().min_by(|a, b| a.mean.total_cmp(&b.mean))
        } else {
            pts.iter().max_by(|a, b| a.mean.total_cmp(&b.mean))
        };
        if let Some(b) = best {
            let _ = writeln!(md, "\nBest R at N={n}: {} ({metric} {:.4} ± {:.4})", b.r, b.mean, b.stderr);
        }
    }
    Ok(Report { svg, markdown: md })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, r: usize, trial: usize, mi: f64) -> ResultRow {
        ResultRow {
            mode: ExperimentMode::Tcl,
            n,
            r,
            trial,
            seed: 0,
            mean_mi: Some(mi),
            gamma_mean: None,
            test_error: None,
            final_loss: Some(0.6),
            wall_ms: 1,
            status: "ok".into(),
        }
    }

    #[test]
    fn aggregate_mean_and_stderr() {
        let rows = vec![row(5000, 4, 0, 1.0), row(5000, 4, 1, 3.0), row(5000, 8, 0, 2.0)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].mean, 2.0);
        assert!((agg[0].stderr - 1.0).abs() < 1e-15);
        assert_eq!(agg[1].stderr, 0.0);
    }

    #[test]
    fn failed_rows_are_ignored() {
        let mut bad = row(5000, 4, 1, 100.0);
        bad.status = "error: diverged".into();
        let agg = aggregate(&[row(5000, 4, 0, 1.0), bad]);
        assert_eq!(agg[0].count, 1);
        assert_eq!(agg[0].mean, 1.0);
    }

    #[test]
    fn single_point_renders() {
        let rep = render_report(&aggregate(&[row(5000, 64, 0, 1.0)])).unwrap();
        assert_eq!(rep.svg.matches("<circle").count(), 1);
        assert!(!rep.svg.contains("<polyline"));
    }

    #[test]
    fn two_series_with_legend_and_deterministic_bytes() {
        let rows: Vec<ResultRow> = [5000, 10_000]
            .iter()
            .flat_map(|&n| [4, 8, 16].map(|r| row(n, r, 0, (r as f64).ln() + n as f64 / 1e4)))
            .collect();
        let agg = aggregate(&rows);
        let a = render_report(&agg).unwrap();
        let b = render_report(&agg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.svg.matches("<polyline").count(), 2);
        assert!(a.svg.contains(">N=5000<"));
        assert!(a.svg.contains(">N=10000<"));
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(matches!(render_report(&[]), Err(NicaError::EmptyTable)));
    }
}
