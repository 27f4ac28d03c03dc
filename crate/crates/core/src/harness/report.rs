use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{write_file, HarnessError, Result};

pub const RESULTS_HEADER: [&str; 8] = ["strategy", "source", "fold", "metric", "score", "kernel", "gamma", "C"];
pub const MEAN_FOLD: &str = "mean";

pub(crate) const SOURCE_TRAINED: &str = "trained";
pub(crate) const SOURCE_RANDOM: &str = "random";
pub(crate) const SOURCE_COMBO_MFCC: &str = "combo+mfcc";
const SOURCES: [&str; 4] = [SOURCE_TRAINED, SOURCE_RANDOM, super::SOURCE_MFCC, SOURCE_COMBO_MFCC];

/// One line of a results CSV. `fold` is a fold index or `mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: String,
    pub source: String,
    pub fold: String,
    pub metric: String,
    pub score: f64,
    pub kernel: String,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
}

fn opt_num(s: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| HarnessError::Results(format!("line {line}: bad {what} '{s}'")))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(HarnessError::Results(format!("header must be {}, got {}", RESULTS_HEADER.join(","), header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Results(e.to_string()))?;
        let line = i + 2;
        let source = rec[1].to_string();
        if !SOURCES.contains(&source.as_str()) {
            return Err(HarnessError::Results(format!("line {line}: unknown source '{source}'")));
        }
        let fold = rec[2].to_string();
        if fold != MEAN_FOLD && fold.parse::<usize>().is_err() {
            return Err(HarnessError::Results(format!("line {line}: fold '{fold}' is neither an index nor '{MEAN_FOLD}'")));
        }
        let score = opt_num(&rec[4], "score", line)?.ok_or_else(|| HarnessError::Results(format!("line {line}: empty score")))?;
        rows.push(ResultRow {
            strategy: rec[0].to_string(),
            source,
            fold,
            metric: rec[3].to_string(),
            score,
            kernel: rec[5].to_string(),
            gamma: opt_num(&rec[6], "gamma", line)?,
            c: opt_num(&rec[7], "C", line)?,
        });
    }
    if rows.is_empty() {
        return Err(HarnessError::Results("no rows".into()));
    }
    Ok(rows)
}

pub(crate) fn write_results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([&r.strategy, &r.source, &r.fold, &r.metric, &r.score.to_string(), &r.kernel, &num(r.gamma), &num(r.c)])?;
    }
    w.into_inner().map_err(|e| HarnessError::Results(e.to_string()))
}

/// Per-fold scores of one (metric, strategy, source) with its audited mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub metric: String,
    pub strategy: String,
    pub source: String,
    pub mean: f64,
    /// Population standard deviation of the fold scores.
    pub std: f64,
    pub n_folds: usize,
}

/// Groups rows in first-appearance order and checks every `mean` row
/// against the mean of its fold rows.
pub fn audit_means(rows: &[ResultRow]) -> Result<Vec<Aggregate>> {
    let mut keys: Vec<(&str, &str, &str)> = Vec::new();
    for r in rows {
        let k = (r.metric.as_str(), r.strategy.as_str(), r.source.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::with_capacity(keys.len());
    for (metric, strategy, source) in keys {
        let label = format!("{strategy} ({source}, {metric})");
        let group: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == metric && r.strategy == strategy && r.source == source).collect();
        let means: Vec<f64> = group.iter().filter(|r| r.fold == MEAN_FOLD).map(|r| r.score).collect();
        let folds: Vec<&ResultRow> = group.iter().copied().filter(|r| r.fold != MEAN_FOLD).collect();
        let mut seen = BTreeSet::new();
        if let Some(d) = folds.iter().find(|r| !seen.insert(r.fold.as_str())) {
            return Err(HarnessError::Audit(format!("{label}: fold {} appears twice", d.fold)));
        }
        let [reported] = means[..] else {
            return Err(HarnessError::Audit(format!("{label}: expected one mean row, found {}", means.len())));
        };
        if folds.is_empty() {
            return Err(HarnessError::Audit(format!("{label}: no fold rows")));
        }
        let n = folds.len() as f64;
        let mean = folds.iter().map(|r| r.score).sum::<f64>() / n;
        if (mean - reported).abs() > 1e-9 * mean.abs().max(1.0) || reported.is_nan() != mean.is_nan() {
            return Err(HarnessError::Audit(format!("{label}: reported mean {reported} but folds average {mean}")));
        }
        let std = (folds.iter().map(|r| (r.score - mean).powi(2)).sum::<f64>() / n).sqrt();
        out.push(Aggregate { metric: metric.into(), strategy: strategy.into(), source: source.into(), mean, std, n_folds: folds.len() });
    }
    Ok(out)
}

fn metrics_of(aggs: &[Aggregate]) -> Vec<&str> {
    let mut m: Vec<&str> = Vec::new();
    for a in aggs {
        if !m.contains(&a.metric.as_str()) {
            m.push(&a.metric);
        }
    }
    m
}

/// 1-based rank by descending mean within each source; ties keep input order.
fn source_ranks(aggs: &[&Aggregate]) -> Vec<Option<usize>> {
    let mut ranks = vec![None; aggs.len()];
    for src in [SOURCE_TRAINED, SOURCE_RANDOM] {
        let mut idx: Vec<usize> = (0..aggs.len()).filter(|&i| aggs[i].source == src).collect();
        idx.sort_by(|&a, &b| aggs[b].mean.total_cmp(&aggs[a].mean));
        for (r, i) in idx.into_iter().enumerate() {
            ranks[i] = Some(r + 1);
        }
    }
    ranks
}

struct Bar<'a> {
    agg: &'a Aggregate,
    rank: Option<usize>,
    x: f64,
}

/// Convnet combos in first-appearance order, each as a trained bar with
/// its random bar adjacent, then the MFCC and combo+MFCC bars.
fn layout<'a>(panel: &[&'a Aggregate]) -> (Vec<Bar<'a>>, Vec<(f64, String)>, f64) {
    let ranks = source_ranks(panel);
    let mut combos: Vec<&str> = Vec::new();
    for a in panel {
        if (a.source == SOURCE_TRAINED || a.source == SOURCE_RANDOM) && !combos.contains(&a.strategy.as_str()) {
            combos.push(&a.strategy);
        }
    }
    let mut bars = Vec::new();
    let mut labels = Vec::new();
    let mut x = 0.0;
    let mut place = |group: Vec<usize>, label: String, x: &mut f64, bars: &mut Vec<Bar<'a>>| {
        if group.is_empty() {
            return;
        }
        let start = *x;
        for i in group {
            bars.push(Bar { agg: panel[i], rank: ranks[i], x: *x });
            *x += BAR_W;
        }
        labels.push(((start + *x) / 2.0, label));
        *x += GROUP_GAP;
    };
    for c in combos {
        let group = [SOURCE_TRAINED, SOURCE_RANDOM]
            .iter()
            .filter_map(|s| panel.iter().position(|a| a.strategy == c && a.source == *s))
            .collect();
        place(group, c.to_string(), &mut x, &mut bars);
    }
    for src in [super::SOURCE_MFCC, SOURCE_COMBO_MFCC] {
        for (i, a) in panel.iter().enumerate().filter(|(_, a)| a.source == src) {
            x += BASELINE_GAP - GROUP_GAP;
            place(vec![i], a.strategy.replace("mfcc", "MFCC"), &mut x, &mut bars);
        }
    }
    (bars, labels, (x - GROUP_GAP).max(0.0))
}

const BAR_W: f64 = 12.0;
const GROUP_GAP: f64 = 6.0;
const BASELINE_GAP: f64 = 18.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const PANEL_TOP: f64 = 44.0;
const PLOT_H: f64 = 180.0;
const PANEL_BOTTOM: f64 = 76.0;
const PANEL_H: f64 = PANEL_TOP + PLOT_H + PANEL_BOTTOM;

fn color(source: &str) -> &'static str {
    match source {
        SOURCE_TRAINED => "#1f4e99",
        SOURCE_RANDOM => "#a3a3a3",
        SOURCE_COMBO_MFCC => "#c0392b",
        _ => "#2e8b57",
    }
}

fn legend_name(source: &str) -> &'static str {
    match source {
        SOURCE_TRAINED => "trained convnet",
        SOURCE_RANDOM => "random convnet",
        SOURCE_COMBO_MFCC => "convnet + MFCC",
        _ => "MFCC",
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart with one panel per metric. Output depends only on
/// `aggs`.
pub fn render_svg(aggs: &[Aggregate]) -> String {
    let metrics = metrics_of(aggs);
    let panels: Vec<Vec<&Aggregate>> = metrics.iter().map(|m| aggs.iter().filter(|a| a.metric == *m).collect()).collect();
    let layouts: Vec<_> = panels.iter().map(|p| layout(p)).collect();
    let content = layouts.iter().map(|l| l.2).fold(0.0, f64::max).max(200.0);
    let width = LEFT + content + RIGHT;
    let height = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, ((metric, panel), (bars, labels, _))) in metrics.iter().zip(&panels).zip(&layouts).enumerate() {
        let top = p as f64 * PANEL_H;
        let max = panel.iter().map(|a| a.mean).filter(|v| v.is_finite()).fold(1.0, f64::max);
        let min = panel.iter().map(|a| a.mean).filter(|v| v.is_finite()).fold(0.0, f64::min);
        let lo = (min * 10.0).floor() / 10.0;
        let hi = (max * 10.0).ceil() / 10.0;
        let y = |v: f64| top + PANEL_TOP + PLOT_H * (hi - v.clamp(lo, hi)) / (hi - lo);
        let _ = writeln!(s, r#"<g class="panel" data-metric="{}">"#, esc(metric));
        let _ = writeln!(s, r#"<text x="{LEFT:.1}" y="{:.1}" font-size="14" font-weight="bold">{}</text>"#, top + 18.0, esc(metric));
        let mut lx = LEFT + 120.0;
        for src in SOURCES.iter().filter(|src| panel.iter().any(|a| a.source == **src)) {
            let _ = writeln!(
                s,
                r#"<rect class="legend" x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
                top + 9.0,
                color(src),
                lx + 14.0,
                top + 18.0,
                legend_name(src)
            );
            lx += 120.0;
        }
        for i in 0..=5 {
            let v = lo + (hi - lo) * i as f64 / 5.0;
            let ty = y(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT:.1}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#e4e4e4"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"##,
                LEFT + content,
                LEFT - 6.0,
                ty + 3.5
            );
        }
        let _ = writeln!(s, r##"<line x1="{LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##, y(0.0), LEFT + content, y(0.0));
        for b in bars {
            let v = if b.agg.mean.is_finite() { b.agg.mean } else { 0.0 };
            let (y0, y1) = (y(v.max(0.0)), y(v.min(0.0)));
            let x = LEFT + b.x;
            let _ = writeln!(
                s,
                r#"<rect class="bar {}" x="{x:.1}" y="{y0:.1}" width="{BAR_W:.1}" height="{:.1}" fill="{}"><title>{} ({}): {:.4}</title></rect>"#,
                b.agg.source,
                y1 - y0,
                color(&b.agg.source),
                esc(&b.agg.strategy),
                b.agg.source,
                b.agg.mean
            );
            if let Some(r) = b.rank {
                let inside = y1 - y0 >= 14.0 && v >= 0.0;
                let (ty, fill) = if inside { (y0 + 10.0, "white") } else { (y0 - 3.0, "black") };
                let _ = writeln!(
                    s,
                    r#"<text class="rank" x="{:.1}" y="{ty:.1}" font-size="8" text-anchor="middle" fill="{fill}">{r}</text>"#,
                    x + BAR_W / 2.0
                );
            }
        }
        let base = top + PANEL_TOP + PLOT_H + 8.0;
        for (cx, label) in labels {
            let x = LEFT + cx;
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{base:.1}" font-size="10" text-anchor="end" transform="rotate(-90 {x:.1} {base:.1})" dy="3">{}</text>"#,
                esc(label)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Ranked table per metric, with each convnet strategy's rank within its source.
pub fn render_markdown(aggs: &[Aggregate]) -> String {
    let mut s = String::new();
    for metric in metrics_of(aggs) {
        let panel: Vec<&Aggregate> = aggs.iter().filter(|a| a.metric == metric).collect();
        let ranks = source_ranks(&panel);
        let mut order: Vec<usize> = (0..panel.len()).collect();
        order.sort_by(|&a, &b| panel[b].mean.total_cmp(&panel[a].mean));
        let _ = writeln!(s, "## {metric}\n");
        let _ = writeln!(s, "| rank | strategy | source | mean | std | folds | rank in source |");
        let _ = writeln!(s, "|---:|---|---|---:|---:|---:|---:|");
        for (r, i) in order.into_iter().enumerate() {
            let a = panel[i];
            let within = ranks[i].map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "| {} | {} | {} | {:.4} | {:.4} | {} | {within} |", r + 1, a.strategy, a.source, a.mean, a.std, a.n_folds);
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub svg: PathBuf,
    pub markdown: PathBuf,
    pub aggregates: Vec<Aggregate>,
    /// Bars per metric panel.
    pub bars: Vec<(String, usize)>,
}

/// Audits `results` and writes `report.svg` and `report.md` into `out_dir`.
pub fn cmd_report(results: &Path, out_dir: &Path) -> Result<ReportOutcome> {
    let rows = read_results_csv(results)?;
    let aggregates = audit_means(&rows)?;
    let svg = out_dir.join("report.svg");
    let markdown = out_dir.join("report.md");
    write_file(&svg, render_svg(&aggregates))?;
    write_file(&markdown, format!("# Results\n\nAll {} reported means match their fold scores.\n\n{}", aggregates.len(), render_markdown(&aggregates)))?;
    let bars = metrics_of(&aggregates).into_iter().map(|m| (m.to_string(), aggregates.iter().filter(|a| a.metric == m).count())).collect();
    Ok(ReportOutcome { svg, markdown, aggregates, bars })
}
