//! The constructive oracle end to end: curve, pullback density,
//! reparameterization, network fit and the chained-bound decomposition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ManifoldSpec;
use crate::network::MlpArchitecture;
use crate::rng::{self, streams};
use crate::spacefill::{self, FitConfig, DEFAULT_DELTA, DEFAULT_THETA};
use crate::trainer::{self, TriangleTerms};
use crate::transport::{self, EmpiricalMeasure, OtConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub spec: ManifoldSpec,
    pub spacing: f64,
    /// Size of the target sample and of each pushforward sample.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_fit_iterations")]
    pub fit_iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    2000
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_theta() -> f64 {
    DEFAULT_THETA
}
fn default_hidden() -> Vec<usize> {
    vec![64; 5]
}
fn default_fit_iterations() -> usize {
    8000
}

impl PipelineConfig {
    pub fn new(spec: ManifoldSpec, spacing: f64, seed: u64) -> Self {
        Self {
            spec,
            spacing,
            n: default_n(),
            delta: DEFAULT_DELTA,
            theta: DEFAULT_THETA,
            hidden_widths: default_hidden(),
            fit_iterations: default_fit_iterations(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub curve_length: f64,
    /// Spacing times curve length.
    pub spacing_times_length: f64,
    /// Largest distance from a target point to the curve.
    pub curve_sup_fill: f64,
    /// W₁ between the target sample and an independent `η` pushforward.
    pub w1_target_eta: f64,
    /// Mean `‖g(t) - η(t)‖` of the fitted network.
    pub fit_mean_deviation: f64,
    pub triangle: TriangleTerms,
    /// Area of the serpentine sheet, for the cube only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheet_area: Option<f64>,
}

/// Runs the pipeline and, if `out` is given, writes `curve.csv` (+ sidecar),
/// `target.csv`, `eta_sample.csv`, `fitted.json` and `report.json` there.
pub fn run_pipeline(cfg: &PipelineConfig, out: Option<&Path>) -> Result<PipelineReport> {
    if cfg.n < 2 {
        return Err(Error::Parameter(format!("pipeline sample size must be at least 2, got {}", cfg.n)));
    }
    let curve = spacefill::serpentine_curve(&cfg.spec, cfg.spacing)?;
    let target_cloud = cfg.spec.sample(cfg.n, &mut rng::stream(cfg.seed, streams::TARGET))?;
    let target = EmpiricalMeasure::uniform(target_cloud);
    let density = spacefill::pullback_and_smooth(&curve, &target, cfg.delta, cfg.theta)?;
    let eta = spacefill::build_eta(&curve, &density);
    let eta_sample = spacefill::eta_pushforward(&eta, cfg.n, rng::derive_seed(cfg.seed, 1))?;
    let w1_target_eta = transport::wasserstein(
        &target,
        &EmpiricalMeasure::uniform(eta_sample.clone()),
        &OtConfig::exact(1.0),
    )?
    .0;
    let arch = MlpArchitecture::new(1, cfg.hidden_widths.clone(), curve.dim())?;
    let fit_cfg = FitConfig {
        iterations: cfg.fit_iterations,
        ..FitConfig::default()
    };
    let fitted = spacefill::fit_network_to_eta(&eta, &arch, &fit_cfg, cfg.seed)?;
    let triangle =
        trainer::triangle_decomposition(&target, &curve, &eta, &fitted.params, cfg.n, rng::derive_seed(cfg.seed, 2))?;
    let sheet = match cfg.spec {
        ManifoldSpec::UnitCube => Some(spacefill::serpentine_sheet(&cfg.spec, cfg.spacing)?),
        _ => None,
    };
    let report = PipelineReport {
        config: cfg.clone(),
        curve_length: curve.length(),
        spacing_times_length: cfg.spacing * curve.length(),
        curve_sup_fill: curve.sup_fill(target.support())?,
        w1_target_eta,
        fit_mean_deviation: fitted.mean_l1,
        triangle,
        sheet_area: sheet.as_ref().map(|s| s.area()),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        curve.write(dir, "curve", &cfg.spec, cfg.spacing)?;
        if let Some(sheet) = &sheet {
            sheet.write(dir, "sheet", cfg.spacing)?;
        }
        let put = |name: &str, text: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put("target.csv", target.support().to_csv())?;
        put("eta_sample.csv", eta_sample.to_csv())?;
        put("fitted.json", fitted.params.to_json()?)?;
        put("report.json", serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
