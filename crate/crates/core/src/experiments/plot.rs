//! Deterministic SVG line and scatter plots of run directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::network::{self, MlpParams};
use crate::rng::{self, streams};
use crate::trainer::{self, ConfigEcho};

pub const TARGET_COLOR: &str = "#1f77b4";
pub const GENERATED_COLOR: &str = "#ff7f0e";
const SECOND_COLOR: &str = "#2ca02c";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as markers even on a line chart.
    pub markers: bool,
}

impl Series {
    pub fn new(name: &str, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            color: color.to_string(),
            points,
            markers: false,
        }
    }

    pub fn as_markers(mut self) -> Self {
        self.markers = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Lines,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub style: Style,
    /// Same units on both axes.
    pub equal_aspect: bool,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn lines(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            log_y: false,
            style: Style::Lines,
            equal_aspect: false,
            series: Vec::new(),
        }
    }

    pub fn scatter(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            style: Style::Markers,
            equal_aspect: true,
            ..Self::lines(title, x_label, y_label)
        }
    }

    fn tx(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.log10()
        } else {
            y
        }
    }

    fn usable(&self, &(x, y): &(f64, f64)) -> bool {
        x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
    }

    pub fn render(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter()).filter(|p| self.usable(p));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts() {
            let (x, y) = (self.tx(x), self.ty(y));
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        widen(&mut x0, &mut x1);
        widen(&mut y0, &mut y1);
        let (mut pw, mut ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        if self.equal_aspect {
            let unit = (pw / (x1 - x0)).min(ph / (y1 - y0));
            pw = unit * (x1 - x0);
            ph = unit * (y1 - y0);
        }
        let px = |x: f64| LEFT + (self.tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (self.ty(y) - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        for t in ticks(x0, x1) {
            let x = LEFT + (t - x0) / (x1 - x0) * pw;
            writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick_label(t, self.log_x)
            )
            .unwrap();
        }
        for t in ticks(y0, y1) {
            let y = TOP + ph - (t - y0) / (y1 - y0) * ph;
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                tick_label(t, self.log_y)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            TOP + ph + 38.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        for series in &self.series {
            let visible: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|p| self.usable(p))
                .map(|&(x, y)| (px(x), py(y)))
                .collect();
            match if series.markers { Style::Markers } else { self.style } {
                Style::Lines => {
                    write!(
                        s,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points=""#,
                        series.color
                    )
                    .unwrap();
                    for (k, (x, y)) in visible.iter().enumerate() {
                        if k > 0 {
                            s.push(' ');
                        }
                        write!(s, "{x:.2},{y:.2}").unwrap();
                    }
                    s.push_str("\"/>\n");
                }
                Style::Markers => {
                    writeln!(s, r#"<g fill="{}" fill-opacity="0.8">"#, series.color).unwrap();
                    for (x, y) in &visible {
                        writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.6"/>"#).unwrap();
                    }
                    s.push_str("</g>\n");
                }
            }
        }
        for (k, series) in self.series.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * k as f64;
            let x = LEFT + pw - 150.0;
            writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
                y - 9.0,
                series.color,
                x + 15.0,
                escape(&series.name)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn widen(lo: &mut f64, hi: &mut f64) {
    if *hi - *lo < 1e-12 {
        *lo -= 0.5;
        *hi += 0.5;
    } else {
        let pad = 0.03 * (*hi - *lo);
        *lo -= pad;
        *hi += pad;
    }
}

/// Round tick positions inside `[lo, hi]`, five to ten of them.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(t: f64, log: bool) -> String {
    let value = if log { 10f64.powf(t) } else { t };
    let text = format!("{value:.4}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" {
        "0".to_string()
    } else if log && !(1e-3..1e4).contains(&value) {
        format!("{value:.0e}")
    } else {
        text.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlotOptions {
    /// Logarithmic loss axis.
    pub log_loss: bool,
}

/// Files written by [`emit_plots`] and anything skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotReport {
    pub written: Vec<PathBuf>,
    pub notices: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Numeric columns of a CSV with a header line, by header name.
fn read_columns(path: &Path, wanted: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    let bad = |message: String| Error::Parse {
        context: path.display().to_string(),
        message,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
    let idx: Vec<usize> = wanted
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h.trim() == *w)
                .ok_or_else(|| bad(format!("missing column `{w}`")))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); wanted.len()];
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        for (c, &i) in idx.iter().enumerate() {
            let v = fields
                .get(i)
                .and_then(|f| f.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("line {}: bad value in column `{}`", n + 2, wanted[c])))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

/// [`emit_plots_with`] under default options.
pub fn emit_plots(run_dir: &Path) -> Result<PlotReport> {
    emit_plots_with(run_dir, &PlotOptions::default())
}

/// Renders `plots/loss.svg`, `plots/fill.svg` and, when the run's config and
/// checkpoint are present, scatter overlays of target and generated points.
/// Skipped plots are listed in the report and in `plots/notices.txt`.
pub fn emit_plots_with(run_dir: &Path, opts: &PlotOptions) -> Result<PlotReport> {
    let losses = read_columns(&run_dir.join("losses.csv"), &["iteration", "loss"])?;
    let metrics = read_columns(
        &run_dir.join("metrics.csv"),
        &["iteration", "w1", "fill_mean", "fill_sup"],
    )?;
    let plots = run_dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut report = PlotReport::default();
    let put = |name: &str, svg: String, report: &mut PlotReport| -> Result<()> {
        let path = plots.join(name);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        report.written.push(path);
        Ok(())
    };

    let mut loss = Chart::lines("Training loss", "iteration", "transport loss");
    loss.log_y = opts.log_loss;
    loss.series.push(Series::new(
        "loss",
        GENERATED_COLOR,
        losses[0].iter().copied().zip(losses[1].iter().copied()).collect(),
    ));
    if !metrics[0].is_empty() {
        loss.series.push(Series::new(
            "eval W1",
            TARGET_COLOR,
            metrics[0].iter().copied().zip(metrics[1].iter().copied()).collect(),
        ));
    }
    put("loss.svg", loss.render(), &mut report)?;

    if metrics[0].is_empty() {
        report
            .notices
            .push("metrics.csv has no rows; fill distance plot skipped".to_string());
    } else {
        let mut fill = Chart::lines("Fill distance", "iteration", "distance");
        let at = |c: usize| metrics[0].iter().copied().zip(metrics[c].iter().copied()).collect();
        fill.series.push(Series::new("mean", GENERATED_COLOR, at(2)));
        fill.series.push(Series::new("sup", SECOND_COLOR, at(3)));
        put("fill.svg", fill.render(), &mut report)?;
    }

    let config = run_dir.join("config.json");
    let checkpoint = run_dir.join("checkpoint.json");
    if config.exists() && checkpoint.exists() {
        let echo: ConfigEcho = serde_json::from_str(&read(&config)?).map_err(|e| Error::Parse {
            context: config.display().to_string(),
            message: e.to_string(),
        })?;
        let params = MlpParams::from_json(&read(&checkpoint)?)?;
        let target = echo.train.target.measure()?;
        let n = echo.train.eval_samples.unwrap_or(target.len());
        let seed = trainer::eval_seed(echo.train.seed, echo.train.iterations);
        let input = echo.train.input_spec.sample(n, &mut rng::stream(seed, streams::EVAL))?;
        let generated = network::forward(&params, &input)?;
        for (name, svg) in scatter_views(target.support(), &generated) {
            put(&name, svg, &mut report)?;
        }
    } else {
        report
            .notices
            .push("config.json or checkpoint.json missing; scatter plot skipped".to_string());
    }

    let notices = plots.join("notices.txt");
    if report.notices.is_empty() {
        if notices.exists() {
            std::fs::remove_file(&notices).map_err(|e| Error::io(&notices, e))?;
        }
    } else {
        std::fs::write(&notices, report.notices.join("\n") + "\n").map_err(|e| Error::io(&notices, e))?;
    }
    Ok(report)
}

/// Target (blue) and generated (orange) points on coordinate planes: the
/// line for 1-D data, (x, y) for 2-D, and (x, y) plus (x, z) beyond.
pub fn scatter_views(target: &PointCloud, generated: &PointCloud) -> Vec<(String, String)> {
    let dim = target.dim();
    let axis = ["x", "y", "z"];
    let planes: Vec<(usize, Option<usize>)> = match dim {
        1 => vec![(0, None)],
        2 => vec![(0, Some(1))],
        _ => vec![(0, Some(1)), (0, Some(2))],
    };
    planes
        .into_iter()
        .map(|(a, b)| {
            let project = |c: &PointCloud| -> Vec<(f64, f64)> {
                c.points().map(|p| (p[a], b.map_or(0.0, |b| p[b]))).collect()
            };
            let name_b = b.map_or("", |b| axis.get(b).copied().unwrap_or("?"));
            let mut chart = Chart::scatter(
                &format!("Target and generated points ({}{})", axis[a], name_b),
                axis[a],
                if b.is_some() { name_b } else { "" },
            );
            chart.series.push(Series::new("target", TARGET_COLOR, project(target)));
            chart.series.push(Series::new("generated", GENERATED_COLOR, project(generated)));
            let file = match b {
                None => format!("scatter_{}.svg", axis[a]),
                Some(_) => format!("scatter_{}{}.svg", axis[a], name_b),
            };
            (file, chart.render())
        })
        .collect()
}
