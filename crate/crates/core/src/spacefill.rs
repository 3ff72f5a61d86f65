//! Explicit space-filling curves and sheets, measure pullback onto a curve,
//! boxcar smoothing, inverse-CDF reparameterization and supervised fitting
//! of the resulting map.

use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, ManifoldSpec, PointCloud};
use crate::network::{self, AdamConfig, AdamState, MlpArchitecture, MlpParams};
use crate::rng::{self, streams};
use crate::transport::EmpiricalMeasure;

/// Default boxcar half-width for [`pullback_and_smooth`].
pub const DEFAULT_DELTA: f64 = 0.02;
/// Default uniform mixture weight for [`pullback_and_smooth`].
pub const DEFAULT_THETA: f64 = 0.01;

/// Polyline with its cumulative arc-length table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylineCurve {
    vertices: PointCloud,
    cumulative: Vec<f64>,
}

/// Nearest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub distance: f64,
    /// Arc-length coordinate of the nearest point.
    pub arc: f64,
    pub segment: usize,
}

impl PolylineCurve {
    pub fn new(vertices: PointCloud) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Parameter("a polyline needs at least 2 vertices".into()));
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for k in 1..vertices.len() {
            let step = geometry::dist(vertices.point(k - 1), vertices.point(k));
            cumulative.push(cumulative[k - 1] + step);
        }
        Ok(Self {
            vertices,
            cumulative,
        })
    }

    pub fn vertices(&self) -> &PointCloud {
        &self.vertices
    }

    pub fn cumulative_length(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn dim(&self) -> usize {
        self.vertices.dim()
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn segments(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Point at arc length `s` (clamped into `[0, length]`), written to `out`.
    pub fn point_at_into(&self, s: f64, out: &mut Vec<f64>) {
        let s = s.clamp(0.0, self.length());
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.segments())
            - 1;
        let a = self.vertices.point(k);
        let b = self.vertices.point(k + 1);
        let len = self.cumulative[k + 1] - self.cumulative[k];
        let t = if len > 0.0 {
            ((s - self.cumulative[k]) / len).min(1.0)
        } else {
            0.0
        };
        out.extend(a.iter().zip(b).map(|(x, y)| x + t * (y - x)));
    }

    pub fn point_at(&self, s: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.point_at_into(s, &mut out);
        out
    }

    /// Exact nearest point by checking every segment; ties go to the lowest
    /// segment index.
    pub fn project(&self, p: &[f64]) -> Projection {
        let mut best = Projection {
            distance: f64::INFINITY,
            arc: 0.0,
            segment: 0,
        };
        let mut best_sq = f64::INFINITY;
        for k in 0..self.segments() {
            let a = self.vertices.point(k);
            let b = self.vertices.point(k + 1);
            let (mut ab2, mut dot) = (0.0, 0.0);
            for i in 0..p.len() {
                let e = b[i] - a[i];
                ab2 += e * e;
                dot += (p[i] - a[i]) * e;
            }
            let t = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
            let mut d2 = 0.0;
            for i in 0..p.len() {
                let q = a[i] + t * (b[i] - a[i]) - p[i];
                d2 += q * q;
            }
            if d2 < best_sq {
                best_sq = d2;
                best = Projection {
                    distance: 0.0,
                    arc: self.cumulative[k] + t * (self.cumulative[k + 1] - self.cumulative[k]),
                    segment: k,
                };
            }
        }
        best.distance = best_sq.sqrt();
        best
    }

    pub fn distance_to(&self, p: &[f64]) -> f64 {
        self.project(p).distance
    }

    /// Largest distance from a point of `data` to the curve.
    pub fn sup_fill(&self, data: &PointCloud) -> Result<f64> {
        geometry::check_dims(data, &self.vertices)?;
        Ok(data.points().map(|p| self.distance_to(p)).fold(0.0, f64::max))
    }

    /// Nearest curve point of every data point (the projected cloud).
    pub fn project_cloud(&self, data: &PointCloud) -> Result<PointCloud> {
        geometry::check_dims(data, &self.vertices)?;
        let mut coords = Vec::with_capacity(data.coords().len());
        for p in data.points() {
            self.point_at_into(self.project(p).arc, &mut coords);
        }
        Ok(PointCloud::from_raw(data.dim(), coords))
    }

    /// Writes `<stem>.csv` (vertices) and `<stem>.json` (sidecar).
    pub fn write(&self, dir: &Path, stem: &str, spec: &ManifoldSpec, spacing: f64) -> Result<Vec<PathBuf>> {
        let sidecar = Sidecar {
            spec,
            spacing,
            length: self.length(),
            area: None,
        };
        write_construction(dir, stem, &self.vertices, &sidecar)
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a ManifoldSpec,
    spacing: f64,
    length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
}

fn write_construction(dir: &Path, stem: &str, points: &PointCloud, sidecar: &Sidecar) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, points.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(sidecar)?).map_err(|e| Error::io(&json, e))?;
    Ok(vec![csv, json])
}

fn check_spacing(spacing: f64, spec: &ManifoldSpec) -> Result<()> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Parameter(format!("spacing must be positive, got {spacing}")));
    }
    if spacing > spec.diameter() {
        return Err(Error::Parameter(format!(
            "spacing {spacing} exceeds the support diameter {}",
            spec.diameter()
        )));
    }
    Ok(())
}

/// Evenly spaced levels on `[0, extent]`, at most `gap` apart, both ends
/// included (so always at least 2).
fn levels(extent: f64, gap: f64) -> Vec<f64> {
    let count = ((extent / gap) - 1e-9).ceil().max(1.0) as usize + 1;
    (0..count).map(|k| extent * k as f64 / (count - 1) as f64).collect()
}

/// Boustrophedon through horizontal stripes of the unit square at `ys`.
fn square_serpentine(ys: &[f64]) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(2 * ys.len());
    for (k, &y) in ys.iter().enumerate() {
        let (x0, x1) = if k % 2 == 0 { (0.0, 1.0) } else { (1.0, 0.0) };
        pts.push([x0, y]);
        pts.push([x1, y]);
    }
    pts
}

/// A polyline through the support whose Sup fill distance is at most
/// `spacing / 2`.
///
/// Square: stripes at most `spacing` apart joined at alternating ends.
/// Cylinder: rings at most `spacing` apart joined along the seam at angle 0;
/// each ring is a fine enough polygon that its chords stay within the
/// fill budget. Cube: square serpentines on layers joined vertically, with
/// stripe and layer gaps of `spacing / √2` so that every point of a cell of
/// the (y, z) lattice is within `spacing / 2` of a corner line.
pub fn serpentine_curve(spec: &ManifoldSpec, spacing: f64) -> Result<PolylineCurve> {
    spec.validate()?;
    check_spacing(spacing, spec)?;
    let coords: Vec<f64> = match *spec {
        ManifoldSpec::UnitSquare => square_serpentine(&levels(1.0, spacing))
            .into_iter()
            .flatten()
            .collect(),
        ManifoldSpec::UnitCube => {
            let ys = levels(1.0, spacing / SQRT_2);
            let zs = levels(1.0, spacing / SQRT_2);
            let layer = square_serpentine(&ys);
            let mut coords = Vec::new();
            for (k, &z) in zs.iter().enumerate() {
                let ordered: Box<dyn Iterator<Item = &[f64; 2]>> = if k % 2 == 0 {
                    Box::new(layer.iter())
                } else {
                    Box::new(layer.iter().rev())
                };
                for &[x, y] in ordered {
                    coords.extend([x, y, z]);
                }
            }
            coords
        }
        ManifoldSpec::Cylinder {
            radius,
            height,
            center,
        } => {
            let heights = levels(height, spacing);
            // Chord sagitta r(1 - cos(π/N)) ≤ r π²/(2N²); keeping it below
            // sqrt(spacing · 1e-7) adds less than 1e-7 to the fill distance.
            let sagitta = (spacing * 1e-7).sqrt();
            let sides = ((PI * (radius / (2.0 * sagitta)).sqrt()).ceil() as usize).max(16);
            let mut coords = Vec::new();
            for (k, &h) in heights.iter().enumerate() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..=sides {
                    let angle = sign * 2.0 * PI * (j % sides) as f64 / sides as f64;
                    coords.extend([
                        center[0] + radius * angle.cos(),
                        center[1] + radius * angle.sin(),
                        center[2] + h,
                    ]);
                }
            }
            coords
        }
        _ => {
            return Err(Error::UnsupportedSpec(format!(
                "no serpentine curve for {}",
                spec.name()
            )))
        }
    };
    PolylineCurve::new(PointCloud::new(spec.ambient_dim(), coords)?)
}

/// A folded sheet in the unit cube: the product of a (y, z) serpentine
/// profile with the x axis, plus a chart grid sampled on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSheet {
    profile: PolylineCurve,
    spacing: f64,
    /// Chart step in ambient units along both parameter directions.
    step: f64,
    rows: usize,
    cols: usize,
    chart: PointCloud,
}

impl ParamSheet {
    /// The (y, z) polyline swept along x.
    pub fn profile(&self) -> &PolylineCurve {
        &self.profile
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn area(&self) -> f64 {
        self.profile.length()
    }

    pub fn chart_step(&self) -> f64 {
        self.step
    }

    /// Chart grid size: `rows` along the profile, `cols` along x.
    pub fn chart_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Ambient point of chart node `(r, c)`; row-major in [`Self::chart`].
    pub fn chart_point(&self, r: usize, c: usize) -> &[f64] {
        self.chart.point(r * self.cols + c)
    }

    pub fn chart(&self) -> &PointCloud {
        &self.chart
    }

    /// Exact distance from `p` to the sheet.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        let dx = (-p[0]).max(p[0] - 1.0).max(0.0);
        let dp = self.profile.distance_to(&[p[1], p[2]]);
        (dx * dx + dp * dp).sqrt()
    }

    pub fn sup_fill(&self, data: &PointCloud) -> Result<f64> {
        if data.dim() != 3 {
            return Err(Error::Shape(format!("sheet lives in 3 dimensions, data has {}", data.dim())));
        }
        Ok(data.points().map(|p| self.distance_to(p)).fold(0.0, f64::max))
    }

    pub fn write(&self, dir: &Path, stem: &str, spacing: f64) -> Result<Vec<PathBuf>> {
        let sidecar = Sidecar {
            spec: &ManifoldSpec::UnitCube,
            spacing,
            length: self.profile.length(),
            area: Some(self.area()),
        };
        write_construction(dir, stem, &self.chart, &sidecar)
    }
}

/// Planes `z = const` at most `spacing` apart, folded into each other at
/// alternating `y` ends; Sup fill distance to the cube is `spacing / 2`.
pub fn serpentine_sheet(spec: &ManifoldSpec, spacing: f64) -> Result<ParamSheet> {
    if *spec != ManifoldSpec::UnitCube {
        return Err(Error::UnsupportedSpec(format!("no serpentine sheet for {}", spec.name())));
    }
    if !(spacing > 0.0 && spacing <= 1.0) {
        return Err(Error::Parameter(format!("sheet spacing must be in (0, 1], got {spacing}")));
    }
    let coords = square_serpentine(&levels(1.0, spacing)).into_iter().flatten().collect();
    let profile = PolylineCurve::new(PointCloud::new(2, coords)?)?;
    let target_step = spacing / 2.0;
    let rows = (profile.length() / target_step).ceil() as usize + 1;
    let cols = (1.0 / target_step).ceil() as usize + 1;
    let step = profile.length() / (rows - 1) as f64;
    let mut chart = Vec::with_capacity(rows * cols * 3);
    let mut yz = Vec::with_capacity(2);
    for r in 0..rows {
        yz.clear();
        profile.point_at_into(r as f64 * step, &mut yz);
        for c in 0..cols {
            chart.extend([c as f64 / (cols - 1) as f64, yz[0], yz[1]]);
        }
    }
    Ok(ParamSheet {
        profile,
        spacing,
        step: step.max(1.0 / (cols - 1) as f64),
        rows,
        cols,
        chart: PointCloud::from_raw(3, chart),
    })
}

/// Piecewise-constant density on `K` equal cells of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    mass: Vec<f64>,
}

impl Density1D {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Parameter("density needs at least one cell".into()));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Parameter("cell masses must be finite and nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("cell masses sum to {total}, expected 1")));
        }
        Ok(Self { mass })
    }

    pub fn uniform(cells: usize) -> Result<Self> {
        Self::new(vec![1.0 / cells as f64; cells])
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// CDF at the `K + 1` cell edges, pinned to 0 and 1 at the ends.
    pub fn cdf_edges(&self) -> Vec<f64> {
        let mut cdf = Vec::with_capacity(self.mass.len() + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in &self.mass {
            acc += m;
            cdf.push(acc.min(1.0));
        }
        *cdf.last_mut().unwrap() = 1.0;
        cdf
    }
}

/// Cell count used for the smoothed pullback at boxcar half-width `delta`.
pub fn density_cells(delta: f64) -> usize {
    ((4.0 / delta).ceil() as usize).max(256)
}

/// Normalized arc-length coordinates of the nearest curve points of every
/// target atom, with the atoms' weights.
pub fn pullback(curve: &PolylineCurve, target: &EmpiricalMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    geometry::check_dims(target.support(), curve.vertices())?;
    let length = curve.length();
    if length <= 0.0 {
        return Err(Error::Parameter("curve has zero length".into()));
    }
    let positions = target
        .support()
        .points()
        .map(|p| (curve.project(p).arc / length).clamp(0.0, 1.0))
        .collect();
    Ok((positions, target.weights().to_vec()))
}

/// Pulls the target back onto the curve's normalized arc length, spreads
/// each atom uniformly over `[t - delta, t + delta] ∩ [0, 1]`, and mixes the
/// result with the uniform density: `(1 - theta) smoothed + theta uniform`.
pub fn pullback_and_smooth(
    curve: &PolylineCurve,
    target: &EmpiricalMeasure,
    delta: f64,
    theta: f64,
) -> Result<Density1D> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Parameter(format!("theta must be in (0, 1], got {theta}")));
    }
    let (positions, weights) = pullback(curve, target)?;
    let k = density_cells(delta);
    let kf = k as f64;
    let mut smoothed = vec![0.0; k];
    for (&t, &w) in positions.iter().zip(&weights) {
        let lo = (t - delta).max(0.0);
        let hi = (t + delta).min(1.0);
        let span = hi - lo;
        let first = ((lo * kf).floor() as usize).min(k - 1);
        let last = ((hi * kf).ceil() as usize).clamp(first + 1, k);
        for (c, cell) in smoothed.iter_mut().enumerate().take(last).skip(first) {
            let a = (c as f64 / kf).max(lo);
            let b = ((c + 1) as f64 / kf).min(hi);
            if b > a {
                *cell += w * (b - a) / span;
            }
        }
    }
    let total: f64 = smoothed.iter().sum();
    let floor = theta / kf;
    let mass = smoothed
        .iter()
        .map(|s| ((1.0 - theta) * s / total + floor).max(floor))
        .collect();
    Density1D::new(mass)
}

/// The reparameterized curve `t -> ξ(L · C⁻¹(t))`, where `C` is the CDF of a
/// [`Density1D`] and `ξ` the arc-length parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaMap {
    curve: PolylineCurve,
    /// CDF values at the cell edges `0, 1/K, ..., 1`.
    cdf: Vec<f64>,
}

impl EtaMap {
    pub fn curve(&self) -> &PolylineCurve {
        &self.curve
    }

    /// Inverse-CDF table: `(cdf_edges[k], k / K)` pairs.
    pub fn cdf_edges(&self) -> &[f64] {
        &self.cdf
    }

    /// `C⁻¹(t)`, exact for the piecewise-linear CDF.
    pub fn inverse_cdf(&self, t: f64) -> f64 {
        let k = self.cdf.len() - 1;
        let t = t.clamp(0.0, 1.0);
        let cell = self.cdf.partition_point(|&c| c <= t).clamp(1, k) - 1;
        let width = self.cdf[cell + 1] - self.cdf[cell];
        let frac = if width > 0.0 {
            ((t - self.cdf[cell]) / width).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (cell as f64 + frac) / k as f64
    }

    /// Arc-length coordinate (not normalized) of `η(t)`.
    pub fn arc_at(&self, t: f64) -> f64 {
        self.inverse_cdf(t) * self.curve.length()
    }

    pub fn eval_into(&self, t: f64, out: &mut Vec<f64>) {
        self.curve.point_at_into(self.arc_at(t), out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.curve.point_at(self.arc_at(t))
    }
}

pub fn build_eta(curve: &PolylineCurve, density: &Density1D) -> EtaMap {
    EtaMap {
        curve: curve.clone(),
        cdf: density.cdf_edges(),
    }
}

/// `η(t_i)` for `n` uniform draws `t_i`.
pub fn eta_pushforward(eta: &EtaMap, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Parameter("pushforward size must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, streams::ETA);
    let mut coords = Vec::with_capacity(n * eta.curve.dim());
    for _ in 0..n {
        eta.eval_into(rng.random::<f64>(), &mut coords);
    }
    Ok(PointCloud::from_raw(eta.curve.dim(), coords))
}

/// Settings for [`fit_network_to_eta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    /// Sample size of the Monte Carlo estimate of the final error.
    pub eval_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch: 256,
            adam: AdamConfig::default(),
            eval_samples: 10_000,
        }
    }
}

/// Network fitted to an [`EtaMap`] and its mean deviation `∫‖g(t) - η(t)‖dt`
/// estimated on fresh uniform samples.
#[derive(Debug, Clone)]
pub struct FittedEta {
    pub params: MlpParams,
    pub mean_l1: f64,
}

fn eta_batch(eta: &EtaMap, rng: &mut rng::Rng, n: usize) -> (PointCloud, Vec<f64>) {
    let ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut targets = Vec::with_capacity(n * eta.curve.dim());
    for &t in &ts {
        eta.eval_into(t, &mut targets);
    }
    (PointCloud::from_raw(1, ts), targets)
}

/// Mean of `‖g(t) - η(t)‖` over the given inputs.
pub fn eta_deviation(params: &MlpParams, eta: &EtaMap, ts: &[f64]) -> Result<f64> {
    let input = PointCloud::new(1, ts.to_vec())?;
    let out = network::forward(params, &input)?;
    let mut target = Vec::with_capacity(eta.curve.dim());
    let mut total = 0.0;
    for (&t, y) in ts.iter().zip(out.points()) {
        target.clear();
        eta.eval_into(t, &mut target);
        total += geometry::dist(y, &target);
    }
    Ok(total / ts.len() as f64)
}

/// Regresses a network onto `η` by Adam on fresh uniform batches, minimizing
/// the mean Euclidean deviation.
pub fn fit_network_to_eta(eta: &EtaMap, arch: &MlpArchitecture, cfg: &FitConfig, seed: u64) -> Result<FittedEta> {
    if arch.input_dim != 1 || arch.output_dim != eta.curve.dim() {
        return Err(Error::Shape(format!(
            "fitting needs a network 1 -> {}, got {} -> {}",
            eta.curve.dim(),
            arch.input_dim,
            arch.output_dim
        )));
    }
    if cfg.batch == 0 || cfg.eval_samples == 0 {
        return Err(Error::Parameter("batch and evaluation sizes must be positive".into()));
    }
    cfg.adam.validate()?;
    let mut params = network::init(arch, seed)?;
    let mut state = AdamState::for_params(cfg.adam, &params);
    let mut rng = rng::stream(seed, streams::FIT);
    let dim = arch.output_dim;
    for _ in 0..cfg.iterations {
        let (input, target) = eta_batch(eta, &mut rng, cfg.batch);
        let tape = network::forward_tape(&params, &input)?;
        let out = tape.output(&params);
        let mut grads = vec![0.0; out.coords().len()];
        for (i, (y, g)) in out.points().zip(grads.chunks_exact_mut(dim)).enumerate() {
            let x = &target[i * dim..(i + 1) * dim];
            let r = geometry::dist(y, x);
            if r > 0.0 {
                for k in 0..dim {
                    g[k] = (y[k] - x[k]) / (r * cfg.batch as f64);
                }
            }
        }
        let grads = tape.backward(&params, &grads)?;
        network::adam_step(&mut params, &grads, &mut state)?;
    }
    let ts: Vec<f64> = (0..cfg.eval_samples).map(|_| rng.random::<f64>()).collect();
    let mean_l1 = eta_deviation(&params, eta, &ts)?;
    Ok(FittedEta { params, mean_l1 })
}

/// One row of [`volume_growth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    /// Half the spacing: the fill radius of the construction.
    pub epsilon: f64,
    /// Length of the curve (`sheet_dim = 1`) or area of the sheet (`2`).
    pub size: f64,
}

/// Length (curves) or area (sheets) of the serpentine construction at each
/// spacing.
pub fn volume_growth(spec: &ManifoldSpec, spacings: &[f64], sheet_dim: usize) -> Result<Vec<GrowthRow>> {
    if spacings.is_empty() {
        return Err(Error::Parameter("no spacings given".into()));
    }
    if let Some(s) = spacings.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Parameter(format!("spacing must be positive, got {s}")));
    }
    if spacings.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter("spacings must be strictly decreasing".into()));
    }
    spacings
        .iter()
        .map(|&s| {
            let size = match sheet_dim {
                1 => serpentine_curve(spec, s)?.length(),
                2 => serpentine_sheet(spec, s)?.area(),
                other => {
                    return Err(Error::Parameter(format!(
                        "sheet dimension must be 1 or 2, got {other}"
                    )))
                }
            };
            Ok(GrowthRow {
                epsilon: s / 2.0,
                size,
            })
        })
        .collect()
}
