//! Monitoring quantities, aggregation over replications and plot exports.
//!
//! Nothing in here touches the complexity counters of a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{mean_field, ModelSpec};
use crate::solvers::RunTrace;
use crate::stats::StatVector;

/// `‖h(s)‖²` by an uncounted full pass.
pub fn h_norm_sq<M: ModelSpec>(model: &M, s: &StatVector) -> Result<f64> {
    Ok(mean_field(model, s, None)?.norm_sq())
}

/// `(‖h(s)‖², F(T(s)))` sharing a single M-step.
pub fn evaluate_point<M: ModelSpec>(model: &M, s: &StatVector) -> Result<(f64, f64)> {
    s.check_finite()?;
    let theta = model.t_map(s)?;
    let h = model.full_expectation(&theta)?.sub(s);
    Ok((h.norm_sq(), model.objective(&theta)))
}

/// Sample quantile with linear interpolation between closest ranks
/// (Hyndman–Fan type 7).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Data(format!("quantile order {p} outside [0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("quantile of a sample with non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Order-independent mean: values are sorted before summation.
fn stable_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Aggregate of one strategy at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Mean cumulative CE count over replications.
    pub cum_ce: f64,
    /// Median of `‖h‖²` over finite replications (NaN if none).
    pub q50_h2: f64,
    /// Mean of `-F` over finite replications (NaN if none).
    pub mean_neg_f: f64,
    pub n_diverged: usize,
}

/// Per-strategy, per-epoch aggregates of a benchmark grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    /// Strategy name to its epoch rows, kept in insertion order.
    pub strategies: Vec<(String, Vec<EpochSummary>)>,
    pub replications: usize,
}

/// Outcome of one replication: its trace, or the error that stopped it.
pub type Replication<'a, P> = std::result::Result<&'a RunTrace<P>, &'a Error>;

/// Aggregates replications of one strategy over `epochs` epochs.
///
/// A replication counts as diverged at an epoch when it failed, stopped
/// early, or produced a non-finite `‖h‖²` or `F` there. Diverged values are
/// left out of the median and the mean.
pub fn aggregate_strategy<P>(runs: &[Replication<'_, P>], epochs: usize) -> Result<Vec<EpochSummary>> {
    if runs.is_empty() {
        return Err(Error::Data("aggregation needs at least one replication".into()));
    }
    let mut rows = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let mut h = Vec::new();
        let mut neg_f = Vec::new();
        let mut ce = Vec::new();
        let mut diverged = 0;
        for run in runs {
            match run.ok().and_then(|t| t.records.get(e)) {
                Some(r) if r.h_norm_sq.is_finite() && r.objective.is_finite() => {
                    h.push(r.h_norm_sq);
                    neg_f.push(-r.objective);
                    ce.push(r.cum_ce as f64);
                }
                Some(r) => {
                    diverged += 1;
                    ce.push(r.cum_ce as f64);
                }
                None => diverged += 1,
            }
        }
        rows.push(EpochSummary {
            epoch: e + 1,
            cum_ce: if ce.is_empty() { f64::NAN } else { stable_mean(&ce) },
            q50_h2: if h.is_empty() { f64::NAN } else { quantile(&h, 0.5)? },
            mean_neg_f: if neg_f.is_empty() { f64::NAN } else { stable_mean(&neg_f) },
            n_diverged: diverged,
        });
    }
    Ok(rows)
}

pub const BENCH_HEADER: &str = "strategy,epoch,cum_ce,q50_h2,mean_negF,n_diverged";

impl BenchResult {
    pub fn rows(&self, strategy: &str) -> Option<&[EpochSummary]> {
        self.strategies
            .iter()
            .find(|(s, _)| s == strategy)
            .map(|(_, r)| r.as_slice())
    }

    /// The combined table, one row per strategy and epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_HEADER);
        out.push('\n');
        for (name, rows) in &self.strategies {
            for r in rows {
                writeln!(
                    out,
                    "{name},{},{},{},{},{}",
                    r.epoch, r.cum_ce, r.q50_h2, r.mean_neg_f, r.n_diverged
                )
                .unwrap();
            }
        }
        out
    }

    /// Parses the output of [`BenchResult::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let bad = |row: usize, column: usize, message: String| Error::Parse {
            path: "bench.csv".into(),
            row,
            column,
            message,
        };
        let header = rdr.headers().map_err(|e| bad(1, 0, e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>().join(",") != BENCH_HEADER {
            return Err(bad(1, 0, format!("expected header {BENCH_HEADER}")));
        }
        let mut map: Vec<(String, Vec<EpochSummary>)> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec.map_err(|e| bad(row, 0, e.to_string()))?;
            if rec.len() != 6 {
                return Err(bad(row, 0, format!("expected 6 fields, found {}", rec.len())));
            }
            let float = |c: usize| -> Result<f64> {
                rec[c].parse().map_err(|_| bad(row, c + 1, format!("not a number: {:?}", &rec[c])))
            };
            let uint = |c: usize| -> Result<usize> {
                rec[c].parse().map_err(|_| bad(row, c + 1, format!("not an integer: {:?}", &rec[c])))
            };
            let summary = EpochSummary {
                epoch: uint(1)?,
                cum_ce: float(2)?,
                q50_h2: float(3)?,
                mean_neg_f: float(4)?,
                n_diverged: uint(5)?,
            };
            let name = rec[0].to_string();
            if name.is_empty() {
                return Err(bad(row, 1, "empty strategy name".into()));
            }
            match map.iter_mut().find(|(s, _)| *s == name) {
                Some((_, rows)) => rows.push(summary),
                None => map.push((name, vec![summary])),
            }
        }
        Ok(BenchResult {
            strategies: map,
            replications: 0,
        })
    }
}

/// One figure: which columns go on the axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Median `‖h‖²` against epochs.
    HVsEpoch,
    /// Median `‖h‖²` against cumulative CE.
    HVsCe,
    /// Mean `-F` against cumulative CE.
    NegFVsCe,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::HVsEpoch, Figure::HVsCe, Figure::NegFVsCe];

    pub fn stem(self) -> &'static str {
        match self {
            Figure::HVsEpoch => "fig1_h2_vs_epoch",
            Figure::HVsCe => "fig2_h2_vs_ce",
            Figure::NegFVsCe => "fig3_negF_vs_ce",
        }
    }

    fn columns(self) -> (&'static str, &'static str) {
        match self {
            Figure::HVsEpoch => ("epoch", "q50_h2"),
            Figure::HVsCe => ("cum_ce", "q50_h2"),
            Figure::NegFVsCe => ("cum_ce", "mean_negF"),
        }
    }

    fn log_y(self) -> bool {
        !matches!(self, Figure::NegFVsCe)
    }

    fn point(self, r: &EpochSummary) -> (f64, f64) {
        match self {
            Figure::HVsEpoch => (r.epoch as f64, r.q50_h2),
            Figure::HVsCe => (r.cum_ce, r.q50_h2),
            Figure::NegFVsCe => (r.cum_ce, r.mean_neg_f),
        }
    }
}

/// Two-column series of a figure: `strategy,x,y`.
pub fn figure_csv(result: &BenchResult, fig: Figure) -> String {
    let (x, y) = fig.columns();
    let mut out = format!("strategy,{x},{y}\n");
    for (name, rows) in &result.strategies {
        for r in rows {
            let (px, py) = fig.point(r);
            writeln!(out, "{name},{px},{py}").unwrap();
        }
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Static SVG line chart of a figure; the ordinate is log10 for `‖h‖²`.
pub fn figure_svg(result: &BenchResult, fig: Figure) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (80.0, 170.0, 30.0, 50.0);
    let transform = |v: f64| if fig.log_y() { v.log10() } else { v };
    let series: Vec<(&str, Vec<(f64, f64)>)> = result
        .strategies
        .iter()
        .map(|(name, rows)| {
            let pts = rows
                .iter()
                .map(|r| fig.point(r))
                .map(|(x, y)| (x, transform(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            (name.as_str(), pts)
        })
        .collect();
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let (xl, yl) = fig.columns();
    let ylabel = if fig.log_y() { format!("log10 {yl}") } else { yl.to_string() };

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            sx(fx),
            h - bottom + 16.0,
            tick(fx)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{xl}</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{ylabel}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            w - right + 10.0,
            w - right + 34.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            w - right + 40.0,
            ly + 4.0,
            xml_escape(name)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `bench.csv`, plus one CSV and one SVG per figure, into `dir`.
/// Returns the written paths.
pub fn export_bench(result: &BenchResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: BTreeMap<PathBuf, String> = BTreeMap::new();
    files.insert(dir.join("bench.csv"), result.to_csv());
    for fig in Figure::ALL {
        files.insert(dir.join(format!("{}.csv", fig.stem())), figure_csv(result, fig));
        files.insert(dir.join(format!("{}.svg", fig.stem())), figure_svg(result, fig));
    }
    let mut written = Vec::new();
    for (path, body) in files {
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
