//! Generator training under an exactly solved transport loss, evaluation,
//! and the chained-bound decomposition of the constructive pipeline.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, fill_distance, pairwise_cost, FillMode, ManifoldSpec, PointCloud};
use crate::network::{self, AdamConfig, AdamState, ClampConfig, MlpArchitecture, MlpParams};
use crate::rng::{self, streams};
use crate::spacefill::{EtaMap, PolylineCurve};
use crate::transport::{self, EmpiricalMeasure, OtConfig};

/// Default metric cadence in iterations.
pub const DEFAULT_EVAL_EVERY: usize = 250;
/// Number of trailing iterations averaged by [`RunRecord::final_loss`].
pub const FINAL_LOSS_WINDOW: usize = 100;

/// Where the fixed target measure comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSource {
    /// Regular grid on the support (see [`ManifoldSpec::grid`]).
    Grid { spec: ManifoldSpec, resolution: usize },
    /// A fixed i.i.d. sample drawn with its own seed.
    Sample { spec: ManifoldSpec, n: usize, seed: u64 },
    /// Explicit points, uniformly weighted unless `weights` is given.
    Points {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl TargetSource {
    pub fn measure(&self) -> Result<EmpiricalMeasure> {
        match self {
            TargetSource::Grid { spec, resolution } => Ok(EmpiricalMeasure::uniform(spec.grid(*resolution)?)),
            TargetSource::Sample { spec, n, seed } => Ok(EmpiricalMeasure::uniform(
                spec.sample(*n, &mut rng::stream(*seed, streams::TARGET))?,
            )),
            TargetSource::Points { points, weights } => {
                let cloud = PointCloud::from_points(points)?;
                match weights {
                    Some(w) => EmpiricalMeasure::new(cloud, w.clone()),
                    None => Ok(EmpiricalMeasure::uniform(cloud)),
                }
            }
        }
    }

    /// Ambient dimension of the target without materializing it.
    pub fn dim(&self) -> usize {
        match self {
            TargetSource::Grid { spec, .. } | TargetSource::Sample { spec, .. } => spec.ambient_dim(),
            TargetSource::Points { points, .. } => points.first().map_or(0, Vec::len),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_eval_every() -> usize {
    DEFAULT_EVAL_EVERY
}

/// Everything that determines a training run besides the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub input_spec: ManifoldSpec,
    pub input_batch: usize,
    pub target: TargetSource,
    #[serde(default = "default_true")]
    pub resample_input_each_iter: bool,
    #[serde(default)]
    pub ot: OtConfig,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub clamp: ClampConfig,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Generated points per evaluation; defaults to the target size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_samples: Option<usize>,
    /// Keep a parameter snapshot at every metric row.
    #[serde(default)]
    pub keep_eval_checkpoints: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.input_spec.validate()?;
        if self.input_batch < 2 {
            return Err(Error::Parameter(format!(
                "input batch must be at least 2, got {}",
                self.input_batch
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Parameter("eval_every must be positive".into()));
        }
        // A zero-iteration run is a valid no-op; otherwise the cadence must
        // fit inside the run.
        if self.iterations > 0 && self.eval_every > self.iterations {
            return Err(Error::Parameter(format!(
                "eval_every ({}) exceeds iterations ({})",
                self.eval_every, self.iterations
            )));
        }
        if self.eval_samples == Some(0) {
            return Err(Error::Parameter("eval_samples must be positive".into()));
        }
        self.ot.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }

    fn check_arch(&self, arch: &MlpArchitecture, target: &EmpiricalMeasure) -> Result<()> {
        arch.validate()?;
        if arch.input_dim != self.input_spec.ambient_dim() {
            return Err(Error::Shape(format!(
                "network input dimension {} does not match the {}-dimensional input distribution",
                arch.input_dim,
                self.input_spec.ambient_dim()
            )));
        }
        if arch.output_dim != target.dim() {
            return Err(Error::Shape(format!(
                "network output dimension {} does not match the {}-dimensional target",
                arch.output_dim,
                target.dim()
            )));
        }
        Ok(())
    }
}

/// Exact transport distances and fill distances of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub w1: f64,
    pub w2: f64,
    pub fill_mean: f64,
    pub fill_sup: f64,
}

/// One periodic evaluation during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub iteration: usize,
    pub w1: f64,
    pub w2: f64,
    pub fill_mean: f64,
    pub fill_sup: f64,
    /// Seed passed to [`evaluate`] for this row.
    pub eval_seed: u64,
}

/// Trajectory and outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub arch: MlpArchitecture,
    pub config: TrainConfig,
    pub losses: Vec<f64>,
    pub metrics: Vec<MetricRow>,
    pub checkpoint: MlpParams,
    /// `(iteration, params)` at every metric row when requested.
    pub eval_checkpoints: Vec<(usize, MlpParams)>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Mean of the last [`FINAL_LOSS_WINDOW`] iteration losses.
    pub fn final_loss(&self) -> Option<f64> {
        let tail = &self.losses[self.losses.len().saturating_sub(FINAL_LOSS_WINDOW)..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn final_metrics(&self) -> Option<&MetricRow> {
        self.metrics.last()
    }

    /// Mean losses of the first and last quartiles of iterations.
    pub fn quartile_means(&self) -> Option<(f64, f64)> {
        let q = self.losses.len() / 4;
        if q == 0 {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&self.losses[..q]), mean(&self.losses[self.losses.len() - q..])))
    }

    /// Writes `config.json`, `losses.csv`, `metrics.csv`, `checkpoint.json`
    /// and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        let config = ConfigEcho {
            arch: self.arch.clone(),
            train: self.config.clone(),
        };
        put("config.json", serde_json::to_string_pretty(&config)?)?;
        let mut losses = String::from("iteration,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(losses, "{},{:?}", i + 1, l).unwrap();
        }
        put("losses.csv", losses)?;
        put("metrics.csv", metrics_csv(&self.metrics))?;
        put("checkpoint.json", self.checkpoint.to_json()?)?;
        if !self.eval_checkpoints.is_empty() {
            let sub = dir.join("checkpoints");
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (it, params) in &self.eval_checkpoints {
                let path = sub.join(format!("iter_{it:06}.json"));
                std::fs::write(&path, params.to_json()?).map_err(|e| Error::io(path, e))?;
            }
        }
        let manifest = Manifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            rng: rng::RNG_ALGORITHM.to_string(),
            init: "glorot_uniform, zero bias".to_string(),
            optimizer: "adam".to_string(),
            iterations_completed: self.losses.len(),
            final_loss: self.final_loss(),
            wall_time_secs: self.wall_time_secs,
        };
        put("manifest.json", serde_json::to_string_pretty(&manifest)?)
    }
}

/// Contents of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub arch: MlpArchitecture,
    pub train: TrainConfig,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub rng: String,
    pub init: String,
    pub optimizer: String,
    pub iterations_completed: usize,
    pub final_loss: Option<f64>,
    pub wall_time_secs: f64,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("iteration,w1,w2,fill_mean,fill_sup,eval_seed\n");
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{}",
            r.iteration, r.w1, r.w2, r.fill_mean, r.fill_sup, r.eval_seed
        )
        .unwrap();
    }
    out
}

/// Seed used for the metric row at `iteration`.
pub fn eval_seed(run_seed: u64, iteration: usize) -> u64 {
    rng::derive_seed(run_seed, iteration as u64)
}

/// Pushes `n` fresh inputs through the network and compares the result with
/// the target: exact W₁ and W₂, and both fill distances (target points as
/// data, generated points as the covering set).
pub fn evaluate(
    params: &MlpParams,
    input_spec: &ManifoldSpec,
    target: &EmpiricalMeasure,
    n: usize,
    seed: u64,
) -> Result<Metrics> {
    if params.arch().input_dim != input_spec.ambient_dim() || params.arch().output_dim != target.dim() {
        return Err(Error::Shape(format!(
            "network maps {} -> {} but input is {}-dimensional and target {}-dimensional",
            params.arch().input_dim,
            params.arch().output_dim,
            input_spec.ambient_dim(),
            target.dim()
        )));
    }
    let input = input_spec.sample(n, &mut rng::stream(seed, streams::EVAL))?;
    let generated = network::forward(params, &input)?;
    metrics_against(target, &generated)
}

/// [`Metrics`] of a fixed generated cloud against the target.
pub fn metrics_against(target: &EmpiricalMeasure, generated: &PointCloud) -> Result<Metrics> {
    let gen = EmpiricalMeasure::uniform(generated.clone());
    let w1 = transport::wasserstein(target, &gen, &OtConfig::exact(1.0))?.0;
    let w2 = transport::wasserstein(target, &gen, &OtConfig::exact(2.0))?.0;
    let metrics = Metrics {
        w1,
        w2,
        fill_mean: fill_distance(target.support(), generated, FillMode::Mean)?,
        fill_sup: fill_distance(target.support(), generated, FillMode::Sup)?,
    };
    // Jensen: W1 <= W2 up to rounding of the two solves.
    debug_assert!(metrics.w1 <= metrics.w2 + 1e-9 * (1.0 + metrics.w2));
    Ok(metrics)
}

/// Result of one training iteration.
struct StepOutcome {
    loss: f64,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    target: EmpiricalMeasure,
    params: MlpParams,
    adam: AdamState,
    input_rng: rng::Rng,
    fixed_input: Option<PointCloud>,
}

impl Trainer<'_> {
    fn step(&mut self) -> Result<StepOutcome> {
        let input = match &self.fixed_input {
            Some(x) => x.clone(),
            None => self.cfg.input_spec.sample(self.cfg.input_batch, &mut self.input_rng)?,
        };
        let tape = network::forward_tape(&self.params, &input)?;
        let generated = tape.output(&self.params);
        let p = self.cfg.ot.p;
        let cost = pairwise_cost(self.target.support(), &generated, p)?;
        let gen_weights = vec![1.0 / generated.len() as f64; generated.len()];
        let sol = transport::solve_with_cost(self.target.weights(), &gen_weights, &cost, &self.cfg.ot.method)?;
        let (loss, point_grads) = transport::loss_and_gradient(&sol.plan, &self.target, &generated, p)?;
        if !loss.is_finite() || point_grads.iter().any(|g| !g.is_finite()) {
            return Ok(StepOutcome { loss: f64::NAN });
        }
        let grads = tape.backward(&self.params, &point_grads)?;
        network::adam_step(&mut self.params, &grads, &mut self.adam)?;
        network::clamp_weights(&mut self.params, self.cfg.clamp);
        Ok(StepOutcome { loss })
    }
}

/// Trains a generator of architecture `arch` under `cfg`.
///
/// Each iteration draws an input batch, solves the transport problem
/// between the fixed target and the generated batch from scratch, moves
/// the generated points along the plan-based gradient through the network,
/// takes an Adam step and applies the optional clamp. The recorded loss is
/// the unrooted transport cost of the iteration's batch before the update.
pub fn train_generator(arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<(MlpParams, RunRecord)> {
    let started = Instant::now();
    cfg.validate()?;
    let target = cfg.target.measure()?;
    cfg.check_arch(arch, &target)?;
    let mut params = network::init(arch, cfg.seed)?;
    network::clamp_weights(&mut params, cfg.clamp);
    let mut input_rng = rng::stream(cfg.seed, streams::INPUT);
    let fixed_input = if cfg.resample_input_each_iter {
        None
    } else {
        Some(cfg.input_spec.sample(cfg.input_batch, &mut input_rng)?)
    };
    let n_eval = cfg.eval_samples.unwrap_or(target.len());
    let mut trainer = Trainer {
        cfg,
        adam: AdamState::for_params(cfg.optimizer, &params),
        params,
        target,
        input_rng,
        fixed_input,
    };

    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut metrics = Vec::new();
    let mut eval_checkpoints = Vec::new();
    for it in 1..=cfg.iterations {
        let last_good = trainer.params.clone();
        let outcome = trainer.step().map_err(|e| Error::AtIteration {
            iteration: it,
            source: Box::new(e),
        })?;
        if !outcome.loss.is_finite() || !trainer.params.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                checkpoint: Box::new(last_good),
            });
        }
        losses.push(outcome.loss);
        if it % cfg.eval_every == 0 || it == cfg.iterations {
            let seed = eval_seed(cfg.seed, it);
            let m = evaluate(&trainer.params, &cfg.input_spec, &trainer.target, n_eval, seed).map_err(|e| {
                Error::AtIteration {
                    iteration: it,
                    source: Box::new(e),
                }
            })?;
            metrics.push(MetricRow {
                iteration: it,
                w1: m.w1,
                w2: m.w2,
                fill_mean: m.fill_mean,
                fill_sup: m.fill_sup,
                eval_seed: seed,
            });
            if cfg.keep_eval_checkpoints {
                eval_checkpoints.push((it, trainer.params.clone()));
            }
        }
    }
    let params = trainer.params;
    let record = RunRecord {
        arch: arch.clone(),
        config: cfg.clone(),
        losses,
        metrics,
        checkpoint: params.clone(),
        eval_checkpoints,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((params, record))
}

/// The four W₁ terms of the chained bound through the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleTerms {
    /// W₁(Q_n, g♯ρ_n).
    pub direct: f64,
    /// W₁(Q_n, Q'_n), Q'_n the projection of the target onto the curve.
    pub projection: f64,
    /// W₁(Q'_n, η♯ρ_n).
    pub reparameterization: f64,
    /// W₁(η♯ρ_n, g♯ρ_n).
    pub fit: f64,
    /// Sum of the three chained terms minus the direct term.
    pub slack: f64,
}

/// Compares the target with the fitted network through the curve, sharing
/// one set of `n` uniform inputs between `η` and the network.
pub fn triangle_decomposition(
    target: &EmpiricalMeasure,
    curve: &PolylineCurve,
    eta: &EtaMap,
    fitted: &MlpParams,
    n: usize,
    seed: u64,
) -> Result<TriangleTerms> {
    if fitted.arch().input_dim != 1 || fitted.arch().output_dim != target.dim() {
        return Err(Error::Shape(format!(
            "fitted network maps {} -> {}, expected 1 -> {}",
            fitted.arch().input_dim,
            fitted.arch().output_dim,
            target.dim()
        )));
    }
    geometry::check_dims(target.support(), curve.vertices())?;
    if n == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, streams::SAMPLE);
    let ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut eta_coords = Vec::with_capacity(n * target.dim());
    for &t in &ts {
        eta.eval_into(t, &mut eta_coords);
    }
    let eta_push = EmpiricalMeasure::uniform(PointCloud::new(target.dim(), eta_coords)?);
    let net_push = EmpiricalMeasure::uniform(network::forward(fitted, &PointCloud::new(1, ts)?)?);
    let projected = EmpiricalMeasure::new(curve.project_cloud(target.support())?, target.weights().to_vec())?;

    let w1 = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| -> Result<f64> {
        Ok(transport::wasserstein(a, b, &OtConfig::exact(1.0))?.0)
    };
    let direct = w1(target, &net_push)?;
    let projection = w1(target, &projected)?;
    let reparameterization = w1(&projected, &eta_push)?;
    let fit = w1(&eta_push, &net_push)?;
    Ok(TriangleTerms {
        direct,
        projection,
        reparameterization,
        fit,
        slack: projection + reparameterization + fit - direct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacefill::{build_eta, serpentine_curve, Density1D};

    fn small_config(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            input_spec: ManifoldSpec::UnitSquare,
            input_batch: 36,
            target: TargetSource::Grid {
                spec: ManifoldSpec::UnitSquare,
                resolution: 6,
            },
            resample_input_each_iter: true,
            ot: OtConfig::default(),
            optimizer: AdamConfig::default(),
            clamp: ClampConfig::default(),
            eval_every: 10,
            eval_samples: None,
            keep_eval_checkpoints: false,
            seed: 3,
        }
    }

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(2, vec![10, 10], 2).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(20);
        cfg.input_batch = 1;
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        let mut cfg = small_config(20);
        cfg.eval_every = 21;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(0);
        cfg.eval_every = 250;
        assert!(cfg.validate().is_ok());
        let wrong = MlpArchitecture::new(1, vec![4], 2).unwrap();
        assert!(matches!(train_generator(&wrong, &small_config(20)), Err(Error::Shape(_))));
        let wrong = MlpArchitecture::new(2, vec![4], 3).unwrap();
        assert!(matches!(train_generator(&wrong, &small_config(20)), Err(Error::Shape(_))));
    }

    #[test]
    fn config_json_defaults_and_round_trip() {
        let text = r#"{
            "iterations": 100,
            "input_spec": {"variant": "UnitInterval"},
            "input_batch": 16,
            "target": {"kind": "grid", "spec": {"variant": "UnitSquare"}, "resolution": 4},
            "seed": 9
        }"#;
        let cfg: TrainConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.resample_input_each_iter);
        assert_eq!(cfg.eval_every, DEFAULT_EVAL_EVERY);
        assert_eq!(cfg.ot, OtConfig::default());
        assert_eq!(cfg.clamp.kappa(), None);
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<TrainConfig>(&text.replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn target_sources() {
        let g = TargetSource::Grid {
            spec: ManifoldSpec::UnitSquare,
            resolution: 30,
        };
        assert_eq!(g.measure().unwrap().len(), 900);
        let s = TargetSource::Sample {
            spec: ManifoldSpec::UnitCube,
            n: 50,
            seed: 1,
        };
        assert_eq!(s.measure().unwrap(), s.measure().unwrap());
        assert_eq!(s.dim(), 3);
        let p = TargetSource::Points {
            points: vec![vec![0.0, 1.0], vec![2.0, 3.0]],
            weights: Some(vec![0.25, 0.75]),
        };
        assert_eq!(p.measure().unwrap().weights(), &[0.25, 0.75]);
    }

    #[test]
    fn training_is_deterministic_and_records_cadence() {
        let cfg = small_config(30);
        let (p1, r1) = train_generator(&arch(), &cfg).unwrap();
        let (p2, mut r2) = train_generator(&arch(), &cfg).unwrap();
        assert_eq!(p1, p2);
        r2.wall_time_secs = r1.wall_time_secs;
        assert_eq!(r1, r2);
        assert_eq!(r1.losses.len(), 30);
        let its: Vec<usize> = r1.metrics.iter().map(|m| m.iteration).collect();
        assert_eq!(its, vec![10, 20, 30]);
        assert!(r1.metrics.iter().all(|m| m.w1 <= m.w2 + 1e-12 && m.fill_mean <= m.fill_sup));
        let mut other = cfg.clone();
        other.seed = 4;
        assert_ne!(train_generator(&arch(), &other).unwrap().0, p1);
    }

    #[test]
    fn metrics_are_reproducible_from_checkpoints() {
        let mut cfg = small_config(30);
        cfg.keep_eval_checkpoints = true;
        let (_, record) = train_generator(&arch(), &cfg).unwrap();
        let target = cfg.target.measure().unwrap();
        for (row, (it, params)) in record.metrics.iter().zip(&record.eval_checkpoints) {
            assert_eq!(row.iteration, *it);
            let m = evaluate(params, &cfg.input_spec, &target, target.len(), row.eval_seed).unwrap();
            assert!((m.w1 - row.w1).abs() <= 1e-9);
            assert!((m.w2 - row.w2).abs() <= 1e-9);
            assert!((m.fill_mean - row.fill_mean).abs() <= 1e-9);
            assert!((m.fill_sup - row.fill_sup).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let cfg = small_config(0);
        let (params, record) = train_generator(&arch(), &cfg).unwrap();
        assert!(record.losses.is_empty());
        assert!(record.metrics.is_empty());
        assert_eq!(params, network::init(&arch(), cfg.seed).unwrap());
        assert_eq!(record.final_loss(), None);
    }

    #[test]
    fn clamped_run_stays_bounded() {
        let mut cfg = small_config(20);
        cfg.clamp = ClampConfig::bounded(0.3).unwrap();
        cfg.optimizer.lr = 0.05;
        cfg.keep_eval_checkpoints = true;
        cfg.eval_every = 1;
        let (params, record) = train_generator(&arch(), &cfg).unwrap();
        assert!(params.max_abs() <= 0.3);
        assert!(record.eval_checkpoints.iter().all(|(_, p)| p.max_abs() <= 0.3));
    }

    #[test]
    fn coincident_batch_has_zero_loss_and_zero_gradient() {
        // A fixed input equal to the target pushed through the identity.
        let grid = ManifoldSpec::UnitSquare.grid(4).unwrap();
        let points: Vec<Vec<f64>> = grid.points().map(<[f64]>::to_vec).collect();
        let cfg = TrainConfig {
            target: TargetSource::Points {
                points,
                weights: None,
            },
            input_batch: 16,
            resample_input_each_iter: false,
            eval_every: 1,
            ..small_config(1)
        };
        let identity = MlpParams::projection(2, 2).unwrap();
        let target = cfg.target.measure().unwrap();
        let mut trainer = Trainer {
            cfg: &cfg,
            adam: AdamState::for_params(cfg.optimizer, &identity),
            params: identity.clone(),
            target,
            input_rng: rng::stream(0, 0),
            fixed_input: Some(grid),
        };
        let outcome = trainer.step().unwrap();
        assert_eq!(outcome.loss, 0.0);
        assert_eq!(trainer.params, identity);
    }

    #[test]
    fn training_reduces_the_loss() {
        let mut cfg = small_config(400);
        cfg.eval_every = 100;
        cfg.optimizer.lr = 5e-3;
        let (_, record) = train_generator(&arch(), &cfg).unwrap();
        let (first, last) = record.quartile_means().unwrap();
        assert!(last < first, "first quartile {first}, last {last}");
    }

    #[test]
    fn evaluation_edge_cases() {
        // Constant generator onto the single target point.
        let arch = MlpArchitecture::new(1, vec![], 2).unwrap();
        let constant = MlpParams::from_flat(arch, vec![0.0, 0.0, 0.3, 0.7], 0).unwrap();
        let target = EmpiricalMeasure::uniform(PointCloud::new(2, vec![0.3, 0.7]).unwrap());
        let m = evaluate(&constant, &ManifoldSpec::UnitInterval, &target, 25, 1).unwrap();
        assert_eq!(m, Metrics { w1: 0.0, w2: 0.0, fill_mean: 0.0, fill_sup: 0.0 });
        // Identity generator on the square against a grid.
        let identity = MlpParams::projection(2, 2).unwrap();
        let grid = EmpiricalMeasure::uniform(ManifoldSpec::UnitSquare.grid(8).unwrap());
        let m = evaluate(&identity, &ManifoldSpec::UnitSquare, &grid, 64, 5).unwrap();
        let sample = ManifoldSpec::UnitSquare.sample(64, &mut rng::stream(5, streams::EVAL)).unwrap();
        let direct = transport::wasserstein_uniform(grid.support(), &sample, 1.0).unwrap();
        assert!((m.w1 - direct).abs() <= 1e-12);
        assert!(m.w1 <= m.w2);
        assert!(matches!(
            evaluate(&identity, &ManifoldSpec::UnitInterval, &grid, 5, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let (_, record) = train_generator(&arch(), &small_config(20)).unwrap();
        record.write(dir.path()).unwrap();
        for f in ["config.json", "losses.csv", "metrics.csv", "checkpoint.json", "manifest.json"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let echo: ConfigEcho =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
        assert_eq!(echo.train, record.config);
        let ckpt = MlpParams::from_json(&std::fs::read_to_string(dir.path().join("checkpoint.json")).unwrap()).unwrap();
        assert_eq!(ckpt, record.checkpoint);
        let losses = std::fs::read_to_string(dir.path().join("losses.csv")).unwrap();
        assert_eq!(losses.lines().count(), 21);
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.seed, 3);
    }

    #[test]
    fn triangle_with_exact_sampler_network() {
        // A network reproducing η exactly: η on a single segment with the
        // uniform density is affine in t.
        let curve = PolylineCurve::new(PointCloud::new(2, vec![0.0, 0.2, 1.0, 0.6]).unwrap()).unwrap();
        let eta = build_eta(&curve, &Density1D::uniform(256).unwrap());
        let arch = MlpArchitecture::new(1, vec![], 2).unwrap();
        let net = MlpParams::from_flat(arch, vec![1.0, 0.4, 0.0, 0.2], 0).unwrap();
        let target = EmpiricalMeasure::uniform(ManifoldSpec::UnitSquare.grid(7).unwrap());
        let terms = triangle_decomposition(&target, &curve, &eta, &net, 60, 2).unwrap();
        assert!(terms.fit <= 1e-12);
        assert!(terms.slack >= -1e-6);
    }

    #[test]
    fn triangle_slack_on_random_instances() {
        let curve = serpentine_curve(&ManifoldSpec::UnitSquare, 0.25).unwrap();
        let target = EmpiricalMeasure::uniform(ManifoldSpec::UnitSquare.grid(8).unwrap());
        let eta = build_eta(&curve, &Density1D::uniform(256).unwrap());
        for seed in 0..5 {
            let net = network::init(&MlpArchitecture::new(1, vec![8], 2).unwrap(), seed).unwrap();
            let terms = triangle_decomposition(&target, &curve, &eta, &net, 64, seed).unwrap();
            assert!(terms.slack >= -1e-6, "{terms:?}");
            assert!(terms.projection <= curve.sup_fill(target.support()).unwrap() + 1e-12);
        }
    }
}
