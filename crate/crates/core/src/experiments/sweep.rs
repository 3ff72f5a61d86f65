//! Sweeps over architectures, target sample sizes or curve spacings, and the
//! sample-size rate experiment.
//!
//! Cells run on the pool from [`super::worker_pool`]. A failing cell is
//! recorded in the summary and the sweep carries on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::plot::{Chart, Series, GENERATED_COLOR, TARGET_COLOR};
use super::{pipeline, resolve, run_config, worker_pool, DEFAULT_SEEDS};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldSpec, PointCloud};
use crate::network::MlpArchitecture;
use crate::rng::{self, streams, Rng};
use crate::trainer::{self, TargetSource};
use crate::transport::{self, EmpiricalMeasure, OtConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArch {
    pub label: String,
    pub hidden_widths: Vec<usize>,
}

/// The three generator sizes compared on the interval-to-square task.
pub fn complexity_architectures() -> Vec<NamedArch> {
    [("a", vec![10; 2]), ("b", vec![100; 3]), ("c", vec![200; 5])]
        .into_iter()
        .map(|(label, hidden_widths)| NamedArch {
            label: label.into(),
            hidden_widths,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Hidden-layer widths, listed from smallest to largest network.
    Architectures(Vec<NamedArch>),
    /// Target sample sizes drawn from the base preset's target distribution.
    SampleSizes(Vec<usize>),
    /// Curve spacings for the constructive pipeline on the base target.
    Spacings(Vec<f64>),
}

fn default_replicates() -> usize {
    DEFAULT_SEEDS.len()
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: String,
    pub axis: SweepAxis,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Merge patch applied to every cell before its own axis value and seed.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub overrides: Value,
}

impl SweepSpec {
    pub fn new(base: &str, axis: SweepAxis) -> Self {
        Self {
            base: base.to_string(),
            axis,
            replicates: default_replicates(),
            seeds: default_seeds(),
            scale: 1.0,
            overrides: Value::Null,
        }
    }

    pub fn validate(&self) -> Result<()> {
        super::preset(&self.base)?;
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be at least 1".into()));
        }
        if self.seeds.len() < self.replicates {
            return Err(Error::Parameter(format!(
                "{} replicates need at least as many seeds, got {}",
                self.replicates,
                self.seeds.len()
            )));
        }
        let mut seeds = self.seeds[..self.replicates].to_vec();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() < self.replicates {
            return Err(Error::Parameter("replicate seeds must be distinct".into()));
        }
        let len = match &self.axis {
            SweepAxis::Architectures(a) => {
                let mut labels: Vec<&str> = a.iter().map(|a| a.label.as_str()).collect();
                if let Some(l) = labels.iter().find(|l| !is_path_safe(l)) {
                    return Err(Error::Parameter(format!(
                        "architecture label `{l}` must be nonempty and use only letters, digits, '-', '_' or '.'"
                    )));
                }
                labels.sort_unstable();
                labels.dedup();
                if labels.len() < a.len() {
                    return Err(Error::Parameter("architecture labels must be distinct".into()));
                }
                a.len()
            }
            SweepAxis::SampleSizes(ns) => {
                if let Some(n) = ns.iter().find(|&&n| n < 2) {
                    return Err(Error::Parameter(format!("sample sizes must be at least 2, got {n}")));
                }
                ns.len()
            }
            SweepAxis::Spacings(ss) => {
                if let Some(s) = ss.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::Parameter(format!("spacings must be positive, got {s}")));
                }
                ss.len()
            }
        };
        if len == 0 {
            return Err(Error::Parameter("sweep axis is empty".into()));
        }
        Ok(())
    }

    fn seeds(&self) -> &[u64] {
        &self.seeds[..self.replicates]
    }
}

fn is_path_safe(label: &str) -> bool {
    !label.is_empty()
        && label != "."
        && label != ".."
        && label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

/// One cell of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub axis_value: String,
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How many replicates ranked the architectures in the listed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub holding: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub spec: SweepSpec,
    pub rows: Vec<SummaryRow>,
    /// Architecture sweeps: strictly falling final loss along the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_ordering: Option<OrderingCheck>,
    /// Sample-size sweeps: log-log slope of the mean population W₁ against n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut keys: Vec<&String> = self.rows.iter().flat_map(|r| r.values.keys()).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut out = String::from("cell,axis_value,seed");
        for k in &keys {
            write!(out, ",{k}").unwrap();
        }
        out.push_str(",error\n");
        for r in &self.rows {
            write!(out, "{},{},{}", r.cell, r.axis_value, r.seed).unwrap();
            for k in &keys {
                match r.values.get(*k) {
                    Some(v) => write!(out, ",{v:?}").unwrap(),
                    None => out.push(','),
                }
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, ",{err}").unwrap();
        }
        out
    }

    /// Rows with `axis_value`, in replicate order.
    pub fn rows_for(&self, axis_value: &str) -> Vec<&SummaryRow> {
        self.rows.iter().filter(|r| r.axis_value == axis_value).collect()
    }
}

struct Cell {
    id: String,
    axis_value: String,
    seed: u64,
    task: Task,
}

enum Task {
    Train {
        arch: MlpArchitecture,
        cfg: Box<trainer::TrainConfig>,
        reference: Option<EmpiricalMeasure>,
    },
    Pipeline(pipeline::PipelineConfig),
}

fn seed_patch(seed: u64) -> Value {
    serde_json::json!({ "seed": seed })
}

fn base_spec(target: &TargetSource) -> Result<ManifoldSpec> {
    match target {
        TargetSource::Grid { spec, .. } | TargetSource::Sample { spec, .. } => Ok(spec.clone()),
        TargetSource::Points { .. } => Err(Error::Parameter(
            "this sweep needs a base preset whose target is a distribution, not explicit points".into(),
        )),
    }
}

fn build_cells(spec: &SweepSpec) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let base = |seed: u64| resolve(&spec.base, spec.scale, &[spec.overrides.clone(), seed_patch(seed)]);
    match &spec.axis {
        SweepAxis::Architectures(archs) => {
            for a in archs {
                for &seed in spec.seeds() {
                    let (arch, cfg) = base(seed)?;
                    let arch = MlpArchitecture::new(arch.input_dim, a.hidden_widths.clone(), arch.output_dim)?;
                    cells.push(Cell {
                        id: format!("{}-s{seed}", a.label),
                        axis_value: a.label.clone(),
                        seed,
                        task: Task::Train {
                            arch,
                            cfg: Box::new(cfg),
                            reference: None,
                        },
                    });
                }
            }
        }
        SweepAxis::SampleSizes(ns) => {
            let (_, cfg0) = base(spec.seeds()[0])?;
            let target_spec = base_spec(&cfg0.target)?;
            // One population reference shared by every cell.
            let n_ref = *ns.iter().max().unwrap();
            let reference = EmpiricalMeasure::uniform(
                target_spec.sample(n_ref, &mut rng::stream(rng::derive_seed(spec.seeds()[0], 0), streams::TARGET))?,
            );
            for &n in ns {
                for &seed in spec.seeds() {
                    let (arch, mut cfg) = base(seed)?;
                    cfg.target = TargetSource::Sample {
                        spec: target_spec.clone(),
                        n,
                        seed: rng::derive_seed(seed, n as u64),
                    };
                    cfg.input_batch = n;
                    cells.push(Cell {
                        id: format!("n{n}-s{seed}"),
                        axis_value: n.to_string(),
                        seed,
                        task: Task::Train {
                            arch,
                            cfg: Box::new(cfg),
                            reference: Some(reference.clone()),
                        },
                    });
                }
            }
        }
        SweepAxis::Spacings(spacings) => {
            let (_, cfg0) = base(spec.seeds()[0])?;
            let target_spec = base_spec(&cfg0.target)?;
            for &s in spacings {
                for &seed in spec.seeds() {
                    cells.push(Cell {
                        id: format!("h{s}-s{seed}"),
                        axis_value: format!("{s}"),
                        seed,
                        task: Task::Pipeline(pipeline::PipelineConfig::new(target_spec.clone(), s, seed)),
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn run_cell(cell: &Cell, dir: &Path) -> Result<BTreeMap<String, f64>> {
    let mut values = BTreeMap::new();
    match &cell.task {
        Task::Train { arch, cfg, reference } => {
            let record = run_config(arch, cfg, dir)?;
            if let Some(l) = record.final_loss() {
                values.insert("final_loss".into(), l);
            }
            if let Some(m) = record.final_metrics() {
                values.insert("w1".into(), m.w1);
                values.insert("w2".into(), m.w2);
                values.insert("fill_mean".into(), m.fill_mean);
                values.insert("fill_sup".into(), m.fill_sup);
            }
            if let Some(reference) = reference {
                let seed = trainer::eval_seed(cfg.seed, cfg.iterations);
                let input = cfg.input_spec.sample(reference.len(), &mut rng::stream(seed, streams::EVAL))?;
                let generated = crate::network::forward(&record.checkpoint, &input)?;
                let w1 = transport::wasserstein(
                    reference,
                    &EmpiricalMeasure::uniform(generated),
                    &OtConfig::exact(1.0),
                )?
                .0;
                values.insert("w1_population".into(), w1);
            }
        }
        Task::Pipeline(cfg) => {
            let r = pipeline::run_pipeline(cfg, Some(dir))?;
            values.insert("curve_length".into(), r.curve_length);
            values.insert("spacing_times_length".into(), r.spacing_times_length);
            values.insert("curve_sup_fill".into(), r.curve_sup_fill);
            values.insert("w1_target_eta".into(), r.w1_target_eta);
            values.insert("fit_mean_deviation".into(), r.fit_mean_deviation);
            values.insert("direct".into(), r.triangle.direct);
            values.insert("slack".into(), r.triangle.slack);
        }
    }
    Ok(values)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least-squares slope of `ln y` against `ln x`; `None` when fewer than two
/// points, any value is not positive, or all `x` coincide.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Runs every cell of `spec` into `out/cells/<cell>/` and writes
/// `summary.csv`, `summary.json` and `plots/summary.svg`.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepSummary> {
    spec.validate()?;
    let cells = build_cells(spec)?;
    let cells_dir = out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let pool = worker_pool()?;
    let rows: Vec<SummaryRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let dir = cells_dir.join(&cell.id);
                let (values, error) = match run_cell(cell, &dir) {
                    Ok(v) => (v, None),
                    Err(e) => (BTreeMap::new(), Some(e.to_string())),
                };
                SummaryRow {
                    cell: cell.id.clone(),
                    axis_value: cell.axis_value.clone(),
                    seed: cell.seed,
                    values,
                    error,
                }
            })
            .collect()
    });
    let mut summary = SweepSummary {
        spec: spec.clone(),
        rows,
        loss_ordering: None,
        slope: None,
    };
    match &spec.axis {
        SweepAxis::Architectures(archs) => {
            let holding = spec
                .seeds()
                .iter()
                .filter(|&&seed| {
                    let losses: Vec<Option<f64>> = archs
                        .iter()
                        .map(|a| {
                            summary
                                .rows
                                .iter()
                                .find(|r| r.axis_value == a.label && r.seed == seed)
                                .and_then(|r| r.values.get("final_loss").copied())
                        })
                        .collect();
                    losses.windows(2).all(|w| matches!(w, [Some(x), Some(y)] if y < x))
                })
                .count();
            summary.loss_ordering = Some(OrderingCheck {
                holding,
                replicates: spec.replicates,
            });
        }
        SweepAxis::SampleSizes(ns) => {
            let means: Option<Vec<f64>> = ns
                .iter()
                .map(|n| {
                    let v: Option<Vec<f64>> = summary
                        .rows_for(&n.to_string())
                        .iter()
                        .map(|r| r.values.get("w1_population").copied())
                        .collect();
                    v.map(|v| mean(&v))
                })
                .collect();
            let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            summary.slope = means.and_then(|m| log_log_slope(&xs, &m));
        }
        SweepAxis::Spacings(_) => {}
    }
    write_summary(&summary, out)?;
    Ok(summary)
}

fn write_summary(summary: &SweepSummary, out: &Path) -> Result<()> {
    let put = |path: PathBuf, text: String| -> Result<()> { std::fs::write(&path, text).map_err(|e| Error::io(path, e)) };
    put(out.join("summary.csv"), summary.to_csv())?;
    put(out.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    let plots = out.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let (metric, label) = match summary.spec.axis {
        SweepAxis::Architectures(_) => ("final_loss", "final loss"),
        SweepAxis::SampleSizes(_) => ("w1_population", "W1 to population sample"),
        SweepAxis::Spacings(_) => ("direct", "W1 target vs fitted network"),
    };
    let axis_values: Vec<String> = match &summary.spec.axis {
        SweepAxis::Architectures(a) => a.iter().map(|a| a.label.clone()).collect(),
        SweepAxis::SampleSizes(ns) => ns.iter().map(|n| n.to_string()).collect(),
        SweepAxis::Spacings(ss) => ss.iter().map(|s| format!("{s}")).collect(),
    };
    let x_of = |k: usize, v: &str| -> f64 {
        match summary.spec.axis {
            SweepAxis::Architectures(_) => k as f64,
            _ => v.parse().unwrap_or(k as f64),
        }
    };
    let mut chart = Chart::lines(
        &format!("{} by {}", label, axis_name(&summary.spec.axis)),
        &axis_name(&summary.spec.axis),
        label,
    );
    if matches!(summary.spec.axis, SweepAxis::SampleSizes(_)) {
        chart.log_x = true;
        chart.log_y = true;
    }
    let mut replicate_points = Vec::new();
    let mut mean_points = Vec::new();
    for (k, v) in axis_values.iter().enumerate() {
        let vals: Vec<f64> = summary
            .rows_for(v)
            .iter()
            .filter_map(|r| r.values.get(metric).copied())
            .collect();
        replicate_points.extend(vals.iter().map(|&y| (x_of(k, v), y)));
        if !vals.is_empty() {
            mean_points.push((x_of(k, v), mean(&vals)));
        }
    }
    chart.series.push(Series::new("mean", GENERATED_COLOR, mean_points));
    chart
        .series
        .push(Series::new("replicate", TARGET_COLOR, replicate_points).as_markers());
    put(plots.join("summary.svg"), chart.render())
}

fn axis_name(axis: &SweepAxis) -> String {
    match axis {
        SweepAxis::Architectures(_) => "architecture".into(),
        SweepAxis::SampleSizes(_) => "target sample size".into(),
        SweepAxis::Spacings(_) => "curve spacing".into(),
    }
}

/// Architecture sweep on `spec`; rejects other axes.
pub fn complexity_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepSummary> {
    if !matches!(spec.axis, SweepAxis::Architectures(_)) {
        return Err(Error::Parameter("complexity sweep needs an architecture axis".into()));
    }
    run_sweep(spec, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    /// W₁ between two independent n-samples, one entry per replicate.
    pub replicates: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub rows: Vec<RateRow>,
    /// Log-log slope of mean W₁ against n; `None` when undefined (some mean
    /// is zero).
    pub slope: Option<f64>,
}

/// Seed of replicate `r` at sample size `n`.
pub fn rate_seed(seed: u64, n: usize, r: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, n as u64), r as u64)
}

/// Mean exact W₁ between two independent `n`-samples of the uniform
/// distribution on `[0,1]^d`, for each `n`, and the fitted log-log slope.
pub fn rate_sweep(d: usize, n_list: &[usize], replicates: usize, seed: u64) -> Result<RateSweep> {
    if !(1..=3).contains(&d) {
        return Err(Error::Parameter(format!("rate sweep dimension must be 1, 2 or 3, got {d}")));
    }
    let spec = ManifoldSpec::hypercube(d);
    rate_sweep_with(|n, rng| spec.sample(n, rng), n_list, replicates, seed)
}

/// [`rate_sweep`] for an arbitrary sampler. Both samples of a replicate come
/// from one stream, seeded by [`rate_seed`].
pub fn rate_sweep_with<F>(sample: F, n_list: &[usize], replicates: usize, seed: u64) -> Result<RateSweep>
where
    F: Fn(usize, &mut Rng) -> Result<PointCloud> + Sync,
{
    if replicates < 5 {
        return Err(Error::Parameter(format!("rate sweep needs at least 5 replicates, got {replicates}")));
    }
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] < 1 {
        return Err(Error::Parameter("sample sizes must be positive and strictly increasing".into()));
    }
    if (n_list[n_list.len() - 1] as f64) < 10.0 * n_list[0] as f64 {
        return Err(Error::Parameter("sample sizes must span at least one decade".into()));
    }
    let jobs: Vec<(usize, usize)> = n_list
        .iter()
        .flat_map(|&n| (0..replicates).map(move |r| (n, r)))
        .collect();
    let pool = super::worker_pool()?;
    let values: Vec<f64> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, r)| {
                let mut rng = rng::stream(rate_seed(seed, n, r), streams::RATE);
                let a = sample(n, &mut rng)?;
                let b = sample(n, &mut rng)?;
                transport::wasserstein_uniform(&a, &b, 1.0)
            })
            .collect::<Result<_>>()
    })?;
    let rows: Vec<RateRow> = n_list
        .iter()
        .zip(values.chunks(replicates))
        .map(|(&n, v)| RateRow {
            n,
            replicates: v.to_vec(),
            mean: mean(v),
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    Ok(RateSweep {
        slope: log_log_slope(&xs, &ys),
        rows,
    })
}
