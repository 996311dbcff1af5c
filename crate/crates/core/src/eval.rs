//! Regression metrics, parity-plot output and the Watson K trend analysis.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::property::{Composition, ComponentLibrary, Family};

/// Minimum number of test samples for a trend fit.
pub const MIN_TREND_SAMPLES: usize = 20;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("truth values are constant; R^2 is undefined")]
    ConstantTruth,
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    WtPct,
    Fraction,
}

impl Scale {
    fn factor(self) -> f64 {
        match self {
            Scale::WtPct => 1.0,
            Scale::Fraction => 0.01,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::WtPct => "wt_pct",
            Scale::Fraction => "fraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub mse: f64,
    pub r2: f64,
    pub scale: Scale,
    pub n: usize,
}

impl MetricSet {
    /// The same metrics expressed on another scale.
    pub fn rescaled(&self, scale: Scale) -> MetricSet {
        let f = scale.factor() / self.scale.factor();
        MetricSet { mae: self.mae * f, mse: self.mse * f * f, r2: self.r2, scale, n: self.n }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn check_shapes(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<(), EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} truth rows vs {} prediction rows",
            truth.len(),
            pred.len()
        )));
    }
    if let Some((i, _)) = truth.iter().zip(pred).enumerate().find(|(_, (t, p))| t.len() != p.len()) {
        return Err(EvalError::ShapeMismatch(format!("row {i} has mismatched lengths")));
    }
    Ok(())
}

/// MAE, MSE and R^2 pooled over every (sample, component) pair. Inputs are
/// wt%; `scale` selects the unit of the reported errors.
pub fn metrics(truth: &[Vec<f64>], pred: &[Vec<f64>], scale: Scale) -> Result<MetricSet, EvalError> {
    check_shapes(truth, pred)?;
    pooled(
        truth.iter().flatten().copied(),
        pred.iter().flatten().copied(),
        scale,
    )
}

/// Metrics over two flat value sequences.
pub fn pooled(
    truth: impl Iterator<Item = f64> + Clone,
    pred: impl Iterator<Item = f64> + Clone,
    scale: Scale,
) -> Result<MetricSet, EvalError> {
    let f = scale.factor();
    let mut n = 0usize;
    let mut total = CompensatedSum::default();
    for y in truth.clone() {
        total.add(y * f);
        n += 1;
    }
    if n < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, found: n });
    }
    let mean = total.value() / n as f64;
    let mut abs = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    let mut tot = CompensatedSum::default();
    let mut m = 0usize;
    for (y, p) in truth.zip(pred) {
        let (y, p) = (y * f, p * f);
        let r = y - p;
        abs.add(r.abs());
        sq.add(r * r);
        tot.add((y - mean) * (y - mean));
        m += 1;
    }
    if m != n {
        return Err(EvalError::ShapeMismatch(format!("{n} truth values vs {m} predictions")));
    }
    let ss_tot = tot.value();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantTruth);
    }
    let nf = n as f64;
    Ok(MetricSet { mae: abs.value() / nf, mse: sq.value() / nf, r2: 1.0 - sq.value() / ss_tot, scale, n })
}

/// Metrics for each component column; `None` where the truth is constant.
pub fn per_component_metrics(
    truth: &[Vec<f64>],
    pred: &[Vec<f64>],
    scale: Scale,
) -> Result<Vec<Option<MetricSet>>, EvalError> {
    check_shapes(truth, pred)?;
    let width = truth.first().map_or(0, Vec::len);
    Ok((0..width)
        .map(|j| {
            pooled(truth.iter().map(move |r| r[j]), pred.iter().map(move |r| r[j]), scale).ok()
        })
        .collect())
}

/// Unweighted mean of the defined per-component metrics.
pub fn component_mean(per: &[Option<MetricSet>], scale: Scale) -> Option<MetricSet> {
    let defined: Vec<&MetricSet> = per.iter().flatten().collect();
    if defined.is_empty() {
        return None;
    }
    let k = defined.len() as f64;
    Some(MetricSet {
        mae: defined.iter().map(|m| m.mae).sum::<f64>() / k,
        mse: defined.iter().map(|m| m.mse).sum::<f64>() / k,
        r2: defined.iter().map(|m| m.r2).sum::<f64>() / k,
        scale,
        n: defined.iter().map(|m| m.n).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean with the population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Fold-aggregated metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mae: MeanStd,
    pub mse: MeanStd,
    pub r2: MeanStd,
    pub scale: Scale,
    pub folds: usize,
}

impl MetricSummary {
    pub fn from_sets(sets: &[MetricSet], scale: Scale) -> Self {
        let sets: Vec<MetricSet> = sets.iter().map(|s| s.rescaled(scale)).collect();
        let pick = |f: fn(&MetricSet) -> f64| MeanStd::of(&sets.iter().map(f).collect::<Vec<_>>());
        Self { mae: pick(|s| s.mae), mse: pick(|s| s.mse), r2: pick(|s| s.r2), scale, folds: sets.len() }
    }

    pub fn rescaled(&self, scale: Scale) -> Self {
        let f = scale.factor() / self.scale.factor();
        let lin = |m: MeanStd| MeanStd { mean: m.mean * f, std: m.std * f };
        let quad = |m: MeanStd| MeanStd { mean: m.mean * f * f, std: m.std * f * f };
        Self { mae: lin(self.mae), mse: quad(self.mse), r2: self.r2, scale, folds: self.folds }
    }
}

/// Side-by-side comparison table, one column per labelled summary, with
/// `mean ± std` cells.
pub fn comparison_table(columns: &[(&str, &MetricSummary)], scale: Scale) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Averaged value".to_string())
        .chain(columns.iter().map(|(label, _)| label.to_string()))
        .collect()];
    let cell = |m: MeanStd, digits: usize| format!("{:.*} ± {:.*}", digits, m.mean, digits, m.std);
    let digits = match scale {
        Scale::WtPct => 4,
        Scale::Fraction => 6,
    };
    for (name, get) in [
        ("MAE", (|s: &MetricSummary| s.mae) as fn(&MetricSummary) -> MeanStd),
        ("MSE", |s| s.mse),
        ("R^2", |s| s.r2),
    ] {
        let mut row = vec![name.to_string()];
        for (_, s) in columns {
            let s = s.rescaled(scale);
            row.push(cell(get(&s), if name == "R^2" { 3 } else { digits }));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let rule: String = widths.iter().map(|w| format!("+{}", "-".repeat(w + 2))).collect::<String>() + "+\n";
    let mut out = String::new();
    out.push_str(&rule);
    for r in &rows {
        for (c, w) in r.iter().zip(&widths) {
            let pad = w - c.chars().count();
            let _ = write!(out, "| {c}{} ", " ".repeat(pad));
        }
        out.push_str("|\n");
        out.push_str(&rule);
    }
    out
}

pub fn parity_csv(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<String, EvalError> {
    check_shapes(truth, pred)?;
    let mut out = String::from("component_index,true_wt_pct,predicted_wt_pct\n");
    for (t, p) in truth.iter().zip(pred) {
        for (j, (a, b)) in t.iter().zip(p).enumerate() {
            let _ = writeln!(out, "{j},{a},{b}");
        }
    }
    Ok(out)
}

pub const SVG_SIZE: f64 = 800.0;
pub const SVG_MARGIN: f64 = 60.0;

/// Maps data coordinates to the SVG plot area for a given axis maximum.
pub fn svg_coords(x: f64, y: f64, axis_max: f64) -> (f64, f64) {
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let round = |v: f64| (v * 1000.0).round() / 1000.0;
    (
        round(SVG_MARGIN + span * x / axis_max),
        round(SVG_SIZE - SVG_MARGIN - span * y / axis_max),
    )
}

/// Axis upper bound: the data maximum rounded up to a multiple of 5 wt%.
pub fn parity_axis_max(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> f64 {
    let hi = truth.iter().chain(pred).flatten().fold(0.0f64, |a, &b| a.max(b));
    ((hi / 5.0).ceil() * 5.0).max(5.0)
}

/// Parity scatter with a y = x reference line. Coordinates are rounded to
/// three decimals so the bytes only depend on the inputs.
pub fn parity_svg(truth: &[Vec<f64>], pred: &[Vec<f64>], title: &str) -> Result<String, EvalError> {
    check_shapes(truth, pred)?;
    let axis = parity_axis_max(truth, pred);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="800" fill="white"/>"#);
    let (x0, y0) = svg_coords(0.0, 0.0, axis);
    let (x1, y1) = svg_coords(axis, axis, axis);
    let _ = writeln!(s, r#"<line class="axis" x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y0:.3}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line class="axis" x1="{x0:.3}" y1="{y0:.3}" x2="{x0:.3}" y2="{y1:.3}" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y1:.3}" stroke="gray" stroke-dasharray="6,4"/>"#
    );
    let ticks = 5;
    for i in 0..=ticks {
        let v = axis * i as f64 / ticks as f64;
        let (tx, _) = svg_coords(v, 0.0, axis);
        let (_, ty) = svg_coords(0.0, v, axis);
        let _ = writeln!(s, r#"<text x="{tx:.3}" y="{:.3}" font-size="12" text-anchor="middle">{v}</text>"#, y0 + 20.0);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{ty:.3}" font-size="12" text-anchor="end">{v}</text>"#, x0 - 8.0);
    }
    let _ = writeln!(s, r#"<text x="400" y="30" font-size="16" text-anchor="middle">{}</text>"#, xml_escape(title));
    let _ = writeln!(s, r#"<text x="400" y="785" font-size="14" text-anchor="middle">true wt%</text>"#);
    let _ = writeln!(
        s,
        r#"<text x="18" y="400" font-size="14" text-anchor="middle" transform="rotate(-90 18 400)">predicted wt%</text>"#
    );
    for (t, p) in truth.iter().zip(pred) {
        for (a, b) in t.iter().zip(p) {
            let (cx, cy) = svg_coords(*a, *b, axis);
            let _ = writeln!(s, r#"<circle class="point" cx="{cx:.3}" cy="{cy:.3}" r="2.5" fill="steelblue" fill-opacity="0.6"/>"#);
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Ordinary least squares slope and Pearson correlation of `y` on `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when either variable is constant.
    pub pearson: Option<f64>,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let pearson = (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt());
    LineFit { slope, intercept: my - slope * mx, pearson }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    fit_line(x, y).pearson
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub family: String,
    pub true_k: Vec<f64>,
    pub predicted_total_wt_pct: Vec<f64>,
    pub fit: LineFit,
}

fn check_trend_inputs(true_k: &[f64], n_pred: usize) -> Result<(), EvalError> {
    if true_k.len() != n_pred {
        return Err(EvalError::ShapeMismatch(format!("{} k values vs {n_pred} predictions", true_k.len())));
    }
    if true_k.len() < MIN_TREND_SAMPLES {
        return Err(EvalError::TooFewSamples { needed: MIN_TREND_SAMPLES, found: true_k.len() });
    }
    Ok(())
}

/// Per-family predicted totals against the true Watson K, one row per family.
pub fn watson_trend(
    true_k: &[f64],
    predictions: &[Composition],
    lib: &ComponentLibrary,
) -> Result<Vec<TrendRow>, EvalError> {
    check_trend_inputs(true_k, predictions.len())?;
    Ok(Family::ALL
        .iter()
        .map(|&family| {
            let totals: Vec<f64> = predictions.iter().map(|c| c.family_total(lib, family)).collect();
            TrendRow {
                family: family.as_str().to_string(),
                fit: fit_line(true_k, &totals),
                true_k: true_k.to_vec(),
                predicted_total_wt_pct: totals,
            }
        })
        .collect())
}

/// Combined n-paraffin plus isoparaffin total against the true Watson K.
pub fn paraffinic_trend(
    true_k: &[f64],
    predictions: &[Composition],
    lib: &ComponentLibrary,
) -> Result<LineFit, EvalError> {
    check_trend_inputs(true_k, predictions.len())?;
    let totals: Vec<f64> = predictions
        .iter()
        .map(|c| c.family_total(lib, Family::NParaffin) + c.family_total(lib, Family::Isoparaffin))
        .collect();
    Ok(fit_line(true_k, &totals))
}

/// Means of `y` within equal-count bins of sorted `x`: `(mean x, mean y, count)`.
pub fn binned_means(x: &[f64], y: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let bins = bins.clamp(1, x.len().max(1));
    (0..bins)
        .filter_map(|b| {
            let lo = b * order.len() / bins;
            let hi = (b + 1) * order.len() / bins;
            let idx = &order[lo..hi];
            (!idx.is_empty()).then(|| {
                let n = idx.len() as f64;
                (
                    idx.iter().map(|&i| x[i]).sum::<f64>() / n,
                    idx.iter().map(|&i| y[i]).sum::<f64>() / n,
                    idx.len(),
                )
            })
        })
        .collect()
}

/// Everything the report bundle is built from.
pub struct ReportInput<'a> {
    pub title: String,
    pub lib: &'a ComponentLibrary,
    pub truth: Vec<Vec<f64>>,
    pub predicted_raw: Vec<Vec<f64>>,
    pub predicted: Vec<Composition>,
    pub true_k: Vec<f64>,
    pub predicted_k: Vec<f64>,
    /// Extra text appended to `report.txt` (training summary, comparison table).
    pub notes: String,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), EvalError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| EvalError::Io { path, source })
}

fn fmt_metric_row(out: &mut String, scope: &str, m: &MetricSet) {
    let _ = writeln!(out, "{scope},{},{},{},{},{}", m.scale.as_str(), m.mae, m.mse, m.r2, m.n);
}

/// Writes `metrics.csv`, `parity.csv`, `parity.svg`, `trend.csv` and `report.txt` into `dir`.
pub fn write_report_bundle(dir: &Path, input: &ReportInput) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let post: Vec<Vec<f64>> = input.predicted.iter().map(|c| c.wt_pct().to_vec()).collect();
    let pooled_raw = metrics(&input.truth, &input.predicted_raw, Scale::WtPct)?;
    let pooled_post = metrics(&input.truth, &post, Scale::WtPct)?;
    let per = per_component_metrics(&input.truth, &input.predicted_raw, Scale::WtPct)?;
    let k_metrics = pooled(input.true_k.iter().copied(), input.predicted_k.iter().copied(), Scale::WtPct).ok();

    let mut csv = String::from("scope,scale,mae,mse,r2,n\n");
    for scale in [Scale::WtPct, Scale::Fraction] {
        fmt_metric_row(&mut csv, "pooled", &pooled_raw.rescaled(scale));
    }
    for scale in [Scale::WtPct, Scale::Fraction] {
        fmt_metric_row(&mut csv, "pooled_postprocessed", &pooled_post.rescaled(scale));
    }
    if let Some(mean) = component_mean(&per, Scale::WtPct) {
        for scale in [Scale::WtPct, Scale::Fraction] {
            fmt_metric_row(&mut csv, "component_mean", &mean.rescaled(scale));
        }
    }
    for (e, m) in input.lib.entries().iter().zip(&per) {
        if let Some(m) = m {
            fmt_metric_row(&mut csv, &format!("component:{}", e.name), m);
        }
    }
    if let Some(k) = &k_metrics {
        let _ = writeln!(csv, "watson_k_head,k,{},{},{},{}", k.mae, k.mse, k.r2, k.n);
    }
    write_file(dir, "metrics.csv", &csv)?;
    write_file(dir, "parity.csv", &parity_csv(&input.truth, &input.predicted_raw)?)?;
    write_file(dir, "parity.svg", &parity_svg(&input.truth, &input.predicted_raw, &input.title)?)?;

    let mut report = String::new();
    let _ = writeln!(report, "{}", input.title);
    let _ = writeln!(report, "{}", "=".repeat(input.title.chars().count()));
    let _ = writeln!(report, "test samples: {}", input.truth.len());
    let _ = writeln!(report);
    let _ = writeln!(report, "Composition metrics (pooled over sample x component, raw head output)");
    for scale in [Scale::WtPct, Scale::Fraction] {
        let m = pooled_raw.rescaled(scale);
        let _ = writeln!(report, "  {:<8} MAE {:.6}  MSE {:.6}  R^2 {:.4}", scale.as_str(), m.mae, m.mse, m.r2);
    }
    if let Some(mean) = component_mean(&per, Scale::WtPct) {
        let _ = writeln!(report, "  per-component mean (wt_pct): MAE {:.6}  MSE {:.6}  R^2 {:.4}", mean.mae, mean.mse, mean.r2);
    }
    let _ = writeln!(
        report,
        "  after clamp + renormalization (wt_pct): MAE {:.6}  MSE {:.6}  R^2 {:.4}",
        pooled_post.mae, pooled_post.mse, pooled_post.r2
    );
    if let Some(k) = &k_metrics {
        let _ = writeln!(report, "Watson K head: MAE {:.5}  MSE {:.6}  R^2 {:.4}", k.mae, k.mse, k.r2);
    }

    let _ = writeln!(report);
    let mut trend = String::from("sample,true_watson_k");
    for f in Family::ALL {
        let _ = write!(trend, ",{f}");
    }
    trend.push('\n');
    match watson_trend(&input.true_k, &input.predicted, input.lib) {
        Ok(rows) => {
            for i in 0..input.true_k.len() {
                let _ = write!(trend, "{i},{}", input.true_k[i]);
                for r in &rows {
                    let _ = write!(trend, ",{}", r.predicted_total_wt_pct[i]);
                }
                trend.push('\n');
            }
            let _ = writeln!(report, "Predicted family totals vs true Watson K");
            let fmt_r = |r: Option<f64>| r.map_or("undefined".to_string(), |v| format!("{v:+.3}"));
            for r in &rows {
                let _ = writeln!(
                    report,
                    "  {:<12} slope {:+.3} wt%/K-unit  pearson {}",
                    r.family,
                    r.fit.slope,
                    fmt_r(r.fit.pearson)
                );
            }
            if let Ok(p) = paraffinic_trend(&input.true_k, &input.predicted, input.lib) {
                let _ = writeln!(report, "  {:<12} slope {:+.3} wt%/K-unit  pearson {}", "paraffinic", p.slope, fmt_r(p.pearson));
            }
            let _ = writeln!(report, "  binned means (5 equal-count bins of true K):");
            let _ = writeln!(report, "    {:>8} {:>10} {:>10} {:>10} {:>10}", "K", "n-par", "iso-par", "naphthene", "aromatic");
            let bins: Vec<_> = rows.iter().map(|r| binned_means(&r.true_k, &r.predicted_total_wt_pct, 5)).collect();
            for b in 0..bins[0].len() {
                let _ = write!(report, "    {:>8.3}", bins[0][b].0);
                for fam in &bins {
                    let _ = write!(report, " {:>10.3}", fam[b].1);
                }
                report.push('\n');
            }
        }
        Err(e) => {
            let _ = writeln!(report, "Trend analysis skipped: {e}");
        }
    }
    write_file(dir, "trend.csv", &trend)?;
    if !input.notes.is_empty() {
        let _ = writeln!(report);
        report.push_str(&input.notes);
    }
    write_file(dir, "report.txt", &report)
}
