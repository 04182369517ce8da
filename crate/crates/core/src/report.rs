//! Static report: interval fan charts, histogram and kernel density grids
//! and the accuracy table, as SVG plus one self-contained HTML page.
//! Output bytes depend only on the records.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::calendar::Quarter;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, dm_stars, read_records, Density, Engine, MetricsTable, NowcastRecord};
use crate::fredmd::InfoSetKind;
use crate::stats::{kde, Bandwidth};

/// Quarters shown in the histogram grids unless configured otherwise.
pub const DEFAULT_HIST_QUARTERS: [Quarter; 4] = [
    Quarter { year: 2019, q: 2 },
    Quarter { year: 2019, q: 3 },
    Quarter { year: 2020, q: 2 },
    Quarter { year: 2020, q: 3 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub hist_quarters: Vec<Quarter>,
    pub bins: usize,
    /// Points on each density curve.
    pub grid: usize,
    /// Interval half-width in predictive standard deviations.
    pub band: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            hist_quarters: DEFAULT_HIST_QUARTERS.to_vec(),
            bins: 20,
            grid: 120,
            band: 2.0,
        }
    }
}

const W: f64 = 720.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn f(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates into a panel at `(x0, y0)` of size `w x h`.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn axes(&self, out: &mut String, x_label: &str, y_ticks: usize) {
        let _ = write!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            f(self.x0),
            f(self.y0),
            f(self.w),
            f(self.h)
        );
        for i in 0..=y_ticks {
            let v = self.yr.0 + (self.yr.1 - self.yr.0) * i as f64 / y_ticks as f64;
            let _ = write!(
                out,
                r##"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"##,
                f(self.x0 - 4.0),
                f(self.y(v) + 3.0),
                f(v)
            );
        }
        let _ = write!(
            out,
            r##"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"##,
            f(self.x0 + self.w / 2.0),
            f(self.y0 + self.h + 30.0),
            escape(x_label)
        );
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let span = (hi - lo).max(1e-6);
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Mean with a `band`-standard-deviation interval per quarter, actuals as
/// dots; quarters without a nowcast are marked as gaps.
pub fn fan_chart_svg(records: &[&NowcastRecord], title: &str, band: f64) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InsufficientData(format!("no records for chart '{title}'")));
    }
    let mut recs = records.to_vec();
    recs.sort_by_key(|r| r.quarter);
    let n = recs.len();
    let intervals: Vec<Option<(f64, f64, f64)>> = recs
        .iter()
        .map(|r| {
            let d = r.density.as_ref()?;
            let (lo, hi) = d.interval(band).ok()?;
            Some((lo, d.mean(), hi))
        })
        .collect();
    let yr = padded_range(
        intervals
            .iter()
            .flatten()
            .flat_map(|&(lo, _, hi)| [lo, hi])
            .chain(recs.iter().filter_map(|r| r.actual)),
    );
    let fr = Frame {
        x0: PAD,
        y0: 30.0,
        w: W - 1.5 * PAD,
        h: H - 30.0 - PAD,
        xr: (-0.5, n as f64 - 0.5),
        yr,
    };
    let mut out = String::new();
    let _ = write!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}"><text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"##,
        f(W / 2.0),
        escape(title)
    );
    fr.axes(&mut out, "quarter", 4);

    // contiguous runs of available intervals become filled bands
    let mut run: Vec<(usize, f64, f64, f64)> = Vec::new();
    let flush = |run: &mut Vec<(usize, f64, f64, f64)>, out: &mut String| {
        if run.is_empty() {
            return;
        }
        let mut d = String::new();
        for (k, &(i, _, _, hi)) in run.iter().enumerate() {
            let _ = write!(d, "{}{},{} ", if k == 0 { "M" } else { "L" }, f(fr.x(i as f64)), f(fr.y(hi)));
        }
        for &(i, lo, _, _) in run.iter().rev() {
            let _ = write!(d, "L{},{} ", f(fr.x(i as f64)), f(fr.y(lo)));
        }
        let _ = write!(out, r##"<path d="{}Z" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##, d);
        let mut m = String::new();
        for (k, &(i, _, mean, _)) in run.iter().enumerate() {
            let _ = write!(m, "{}{},{} ", if k == 0 { "M" } else { "L" }, f(fr.x(i as f64)), f(fr.y(mean)));
        }
        let _ = write!(out, r##"<path d="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##, m.trim_end());
        run.clear();
    };
    for (i, iv) in intervals.iter().enumerate() {
        match iv {
            Some((lo, mean, hi)) => run.push((i, *lo, *mean, *hi)),
            None => {
                flush(&mut run, &mut out);
                let _ = write!(
                    out,
                    r##"<g class="gap"><line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#d62728" stroke-dasharray="3,3"/><text x="{x}" y="{}" font-size="9" fill="#d62728" text-anchor="middle">gap</text></g>"##,
                    f(fr.y0),
                    f(fr.y0 + fr.h),
                    f(fr.y0 + 10.0),
                    x = f(fr.x(i as f64))
                );
            }
        }
    }
    flush(&mut run, &mut out);
    for (i, r) in recs.iter().enumerate() {
        if let Some(a) = r.actual {
            let _ = write!(out, r##"<circle cx="{}" cy="{}" r="2.5" fill="#000"/>"##, f(fr.x(i as f64)), f(fr.y(a)));
        }
    }
    let step = n.div_ceil(8).max(1);
    for (i, r) in recs.iter().enumerate().step_by(step) {
        let _ = write!(
            out,
            r##"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"##,
            f(fr.x(i as f64)),
            f(fr.y0 + fr.h + 14.0),
            r.quarter
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Histogram (density scale) with a Gaussian kernel density overlay for
/// each requested quarter; Gaussian nowcasts show their density curve.
pub fn histogram_grid_svg(records: &[&NowcastRecord], quarters: &[Quarter], title: &str, cfg: &ReportConfig) -> Result<String> {
    if quarters.is_empty() {
        return Err(Error::Config("no quarters requested for the histogram grid".into()));
    }
    let cols = 2usize.min(quarters.len());
    let rows = quarters.len().div_ceil(cols);
    let (pw, ph) = (340.0, 220.0);
    let (tw, th) = (cols as f64 * (pw + 30.0) + 30.0, rows as f64 * (ph + 60.0) + 30.0);
    let mut out = String::new();
    let _ = write!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}"><text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"##,
        f(tw),
        f(th),
        f(tw),
        f(th),
        f(tw / 2.0),
        escape(title)
    );
    for (k, q) in quarters.iter().enumerate() {
        let (cx, cy) = ((k % cols) as f64 * (pw + 30.0) + 45.0, (k / cols) as f64 * (ph + 60.0) + 40.0);
        let rec = records.iter().find(|r| r.quarter == *q);
        let label = format!("{q}");
        let Some(density) = rec.and_then(|r| r.density.as_ref()) else {
            let _ = write!(
                out,
                r##"<g class="gap"><rect x="{}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#d62728" stroke-dasharray="3,3"/><text x="{}" y="{}" font-size="11" fill="#d62728" text-anchor="middle">{label}: no nowcast</text></g>"##,
                f(cx),
                f(cy),
                f(cx + pw / 2.0),
                f(cy + ph / 2.0)
            );
            continue;
        };
        let (m, s) = (density.mean(), density.std().max(1e-9));
        let xr = match density {
            Density::Empirical(e) => {
                let (lo, hi) = padded_range(e.samples().iter().copied());
                (lo.min(m - 3.0 * s), hi.max(m + 3.0 * s))
            }
            Density::Gaussian(_) => (m - 4.0 * s, m + 4.0 * s),
        };
        let grid: Vec<f64> = (0..cfg.grid)
            .map(|i| xr.0 + (xr.1 - xr.0) * i as f64 / (cfg.grid - 1) as f64)
            .collect();
        let (curve, bars) = match density {
            Density::Empirical(e) => {
                let width = (xr.1 - xr.0) / cfg.bins as f64;
                let mut counts = vec![0usize; cfg.bins];
                for &v in e.samples() {
                    let b = (((v - xr.0) / width) as usize).min(cfg.bins - 1);
                    counts[b] += 1;
                }
                let n = e.len() as f64;
                let bars: Vec<(f64, f64, f64)> = counts
                    .iter()
                    .enumerate()
                    .map(|(b, &c)| (xr.0 + b as f64 * width, width, c as f64 / (n * width)))
                    .collect();
                (kde(e.samples(), &grid, Bandwidth::Auto)?, bars)
            }
            Density::Gaussian(g) => (grid.iter().map(|&x| g.pdf(x)).collect(), Vec::new()),
        };
        let ymax = curve.iter().chain(bars.iter().map(|b| &b.2)).fold(0.0f64, |a, &b| a.max(b)) * 1.1;
        let fr = Frame {
            x0: cx,
            y0: cy,
            w: pw,
            h: ph,
            xr,
            yr: (0.0, ymax.max(1e-9)),
        };
        fr.axes(&mut out, &label, 2);
        for (x, w, hgt) in &bars {
            let _ = write!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#c6dbef" stroke="#6baed6" stroke-width="0.5"/>"##,
                f(fr.x(*x)),
                f(fr.y(*hgt)),
                f(fr.x(x + w) - fr.x(*x)),
                f(fr.y(0.0) - fr.y(*hgt))
            );
        }
        let mut d = String::new();
        for (i, (x, y)) in grid.iter().zip(&curve).enumerate() {
            let _ = write!(d, "{}{},{} ", if i == 0 { "M" } else { "L" }, f(fr.x(*x)), f(fr.y(*y)));
        }
        let _ = write!(out, r##"<path d="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##, d.trim_end());
        if let Some(a) = rec.and_then(|r| r.actual).filter(|a| *a >= xr.0 && *a <= xr.1) {
            let _ = write!(
                out,
                r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#000" stroke-dasharray="4,2"/>"##,
                f(fr.y0),
                f(fr.y0 + fr.h),
                x = f(fr.x(a))
            );
        }
        for i in 0..=4 {
            let v = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
            let _ = write!(
                out,
                r##"<text x="{}" y="{}" font-size="10" text-anchor="middle">{}</text>"##,
                f(fr.x(v)),
                f(fr.y0 + fr.h + 14.0),
                f(v)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn opt(v: Option<f64>, stars: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.3}{}", stars.map(dm_stars).unwrap_or("")),
        None => "&ndash;".into(),
    }
}

/// Accuracy table as an HTML fragment. Stars on relative entries come
/// from the one-sided comparison tests (squared loss for RMSE, absolute
/// loss for MAE).
pub fn metrics_html(table: &MetricsTable) -> String {
    let mut out = String::from(
        "<table>\n<tr><th>engine</th><th>info set</th><th>n</th><th>RMSE</th><th>MAE</th>\
         <th>RMSE / naive</th><th>MAE / naive</th><th>RMSE / DFM</th><th>MAE / DFM</th></tr>\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{:.3}</td><td>{:.3}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            r.engine,
            r.info_set,
            r.n,
            r.rmse,
            r.mae,
            opt(r.rel_rmse_naive, r.dm_p_naive_sq),
            opt(r.rel_mae_naive, r.dm_p_naive_abs),
            opt(r.rel_rmse_dfm, r.dm_p_dfm_sq),
            opt(r.rel_mae_dfm, r.dm_p_dfm_abs),
        );
    }
    out.push_str("</table>\n");
    out
}

/// Writes one fan chart and one histogram grid per engine and information
/// set plus `index.html` into `out_dir`. Empty results are an error.
pub fn write_report(records: &[NowcastRecord], out_dir: &Path, cfg: &ReportConfig) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("results hold no records".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics = compute_metrics(records).unwrap_or_default();
    let mut groups: Vec<(Engine, InfoSetKind)> = records.iter().map(|r| (r.engine, r.info_set)).collect();
    groups.sort();
    groups.dedup();

    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Density nowcast report</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}\
         td,th{border:1px solid #ccc;padding:3px 8px;text-align:right}</style></head><body>\n\
         <h1>Density nowcast report</h1>\n<h2>Accuracy</h2>\n",
    );
    html.push_str(&metrics_html(&metrics));
    html.push_str("<p>* / ** / ***: one-sided test of equal accuracy rejected at 10% / 5% / 1%.</p>\n");
    let gaps = records.iter().filter(|r| !r.is_ok()).count();
    if gaps > 0 {
        let _ = writeln!(html, "<p><strong>{gaps} nowcasts failed</strong>; they appear as gaps below.</p>");
    }

    let mut paths = Vec::new();
    for (engine, kind) in groups {
        let rs: Vec<&NowcastRecord> = records.iter().filter(|r| r.engine == engine && r.info_set == kind).collect();
        let fan = fan_chart_svg(&rs, &format!("{engine}, {kind}: mean and {}-sd interval", cfg.band), cfg.band)?;
        let hist = histogram_grid_svg(&rs, &cfg.hist_quarters, &format!("{engine}, {kind}: predictive densities"), cfg)?;
        let _ = writeln!(html, "<h2>{engine}, {kind}</h2>\n{fan}{hist}");
        for (name, body) in [(format!("fan_{engine}_{kind}.svg"), fan), (format!("hist_{engine}_{kind}.svg"), hist)] {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
    }
    html.push_str("</body></html>\n");
    let index = out_dir.join("index.html");
    fs::write(&index, html).map_err(|e| Error::io(&index, e))?;
    paths.push(index);
    Ok(paths)
}

/// Reads `records.jsonl` from `results_dir` and writes the report into
/// `out_dir` (default `results_dir/report`).
pub fn report_dir(results_dir: &Path, out_dir: Option<&Path>, cfg: &ReportConfig) -> Result<Vec<PathBuf>> {
    let records = read_records(results_dir)?;
    let out = out_dir.map(Path::to_path_buf).unwrap_or_else(|| results_dir.join("report"));
    write_report(&records, &out, cfg)
}
