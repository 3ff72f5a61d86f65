//! Target and input manifolds, point clouds, fill distance and ground costs.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A nonempty set of points sharing one ambient dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("ambient dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::Parameter("point cloud must be nonempty".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!("non-finite coordinate {bad}")));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| Error::Parameter("point cloud must be nonempty".into()))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "point of dimension {} in a cloud of dimension {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// Builds a cloud without validating finiteness; used on hot paths whose
    /// callers check finiteness themselves.
    pub(crate) fn from_raw(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && !coords.is_empty() && coords.len().is_multiple_of(dim));
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Minimum and maximum of each coordinate.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// CSV with header `x0,x1,...`, one point per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for p in self.points() {
            for (k, v) in p.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            context: "point cloud csv".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
        let dim = header.split(',').count();
        for (k, name) in header.split(',').enumerate() {
            if name.trim() != format!("x{k}") {
                return Err(parse_err(format!("unexpected header column `{name}`")));
            }
        }
        let mut coords = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim {
                return Err(parse_err(format!(
                    "row {} has {} fields, expected {dim}",
                    row + 1,
                    fields.len()
                )));
            }
            for f in fields {
                coords.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("row {}: {e}", row + 1)))?,
                );
            }
        }
        Self::new(dim, coords)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Input and target distributions used by the experiments.
///
/// JSON form: `{"variant": "<name>", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub enum ManifoldSpec {
    UnitInterval,
    UnitSquare,
    UnitCube,
    /// Uniform distribution on `[0,1]^m`.
    HypercubeUniform(usize),
    /// Lateral surface of a z-aligned cylinder; `center` is the center of its
    /// bottom circle.
    Cylinder {
        radius: f64,
        height: f64,
        center: [f64; 3],
    },
    GaussianPlane {
        mean: [f64; 2],
        covariance: [[f64; 2]; 2],
    },
    GaussianLine {
        mean: f64,
        stddev: f64,
    },
}

impl ManifoldSpec {
    /// The default cylinder: radius 0.5, height 1, bottom circle centered at the origin.
    pub fn cylinder() -> Self {
        ManifoldSpec::Cylinder {
            radius: 0.5,
            height: 1.0,
            center: [0.0; 3],
        }
    }

    /// `[0,1]^m` with the named variants for m ≤ 3.
    pub fn hypercube(m: usize) -> Self {
        match m {
            1 => ManifoldSpec::UnitInterval,
            2 => ManifoldSpec::UnitSquare,
            3 => ManifoldSpec::UnitCube,
            m => ManifoldSpec::HypercubeUniform(m),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldSpec::UnitInterval => "UnitInterval",
            ManifoldSpec::UnitSquare => "UnitSquare",
            ManifoldSpec::UnitCube => "UnitCube",
            ManifoldSpec::HypercubeUniform(_) => "HypercubeUniform",
            ManifoldSpec::Cylinder { .. } => "Cylinder",
            ManifoldSpec::GaussianPlane { .. } => "GaussianPlane",
            ManifoldSpec::GaussianLine { .. } => "GaussianLine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ManifoldSpec::HypercubeUniform(0) => {
                Err(Error::Parameter("HypercubeUniform needs m >= 1".into()))
            }
            ManifoldSpec::Cylinder {
                radius,
                height,
                center,
            } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Parameter(format!("cylinder radius {radius} must be > 0")));
                }
                if !(height > 0.0 && height.is_finite()) {
                    return Err(Error::Parameter(format!("cylinder height {height} must be > 0")));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Parameter("cylinder center must be finite".into()));
                }
                Ok(())
            }
            ManifoldSpec::GaussianPlane { mean, covariance } => {
                let [[a, b], [c, d]] = covariance;
                if mean.iter().chain(covariance.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(Error::Parameter("Gaussian parameters must be finite".into()));
                }
                if (b - c).abs() > 1e-12 * (1.0 + b.abs()) {
                    return Err(Error::Parameter("covariance must be symmetric".into()));
                }
                if !(a > 0.0 && a * d - b * c > 0.0) {
                    return Err(Error::Parameter("covariance must be positive definite".into()));
                }
                Ok(())
            }
            ManifoldSpec::GaussianLine { mean, stddev } => {
                if !mean.is_finite() || !(stddev > 0.0 && stddev.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "GaussianLine needs finite mean and stddev > 0, got ({mean}, {stddev})"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the support (d for targets, m for inputs).
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::UnitInterval | ManifoldSpec::GaussianLine { .. } => 1,
            ManifoldSpec::UnitSquare
            | ManifoldSpec::Cylinder { .. }
            | ManifoldSpec::GaussianPlane { .. } => 2,
            ManifoldSpec::UnitCube => 3,
            ManifoldSpec::HypercubeUniform(m) => *m,
        }
    }

    /// Dimension D of the ambient coordinates.
    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldSpec::Cylinder { .. } => 3,
            other => other.intrinsic_dim(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            ManifoldSpec::GaussianPlane { .. } | ManifoldSpec::GaussianLine { .. }
        )
    }

    /// Side length or extent used to sanity-check construction spacings.
    pub fn diameter(&self) -> f64 {
        match *self {
            ManifoldSpec::Cylinder { radius, height, .. } => {
                (4.0 * radius * radius + height * height).sqrt()
            }
            ref other => (other.ambient_dim() as f64).sqrt(),
        }
    }

    /// Draws one point into `out`.
    pub fn sample_point(&self, rng: &mut Rng, out: &mut Vec<f64>) {
        match *self {
            ManifoldSpec::UnitInterval
            | ManifoldSpec::UnitSquare
            | ManifoldSpec::UnitCube
            | ManifoldSpec::HypercubeUniform(_) => {
                for _ in 0..self.ambient_dim() {
                    out.push(rng.random::<f64>());
                }
            }
            ManifoldSpec::Cylinder {
                radius,
                height,
                center,
            } => {
                let angle = 2.0 * PI * rng.random::<f64>();
                let z = height * rng.random::<f64>();
                out.push(center[0] + radius * angle.cos());
                out.push(center[1] + radius * angle.sin());
                out.push(center[2] + z);
            }
            ManifoldSpec::GaussianPlane { mean, covariance } => {
                // Cholesky factor of the 2x2 covariance.
                let l11 = covariance[0][0].sqrt();
                let l21 = covariance[1][0] / l11;
                let l22 = (covariance[1][1] - l21 * l21).sqrt();
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                out.push(mean[0] + l11 * z1);
                out.push(mean[1] + l21 * z1 + l22 * z2);
            }
            ManifoldSpec::GaussianLine { mean, stddev } => {
                let z: f64 = rng.sample(StandardNormal);
                out.push(mean + stddev * z);
            }
        }
    }

    /// Draws `n` independent points from the distribution.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<PointCloud> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Parameter("sample size must be at least 1".into()));
        }
        let mut coords = Vec::with_capacity(n * self.ambient_dim());
        for _ in 0..n {
            self.sample_point(rng, &mut coords);
        }
        Ok(PointCloud::from_raw(self.ambient_dim(), coords))
    }

    /// Regular grid covering the support with `resolution` nodes per axis.
    ///
    /// Hypercubes use `linspace(0, 1, resolution)` on every axis (corners
    /// included). The cylinder grid is uniform in (angle, height): `resolution`
    /// angles without repeating 2π, and `resolution` heights spanning the
    /// full height.
    pub fn grid(&self, resolution: usize) -> Result<PointCloud> {
        self.validate()?;
        if resolution == 0 {
            return Err(Error::Parameter("grid resolution must be at least 1".into()));
        }
        let axis: Vec<f64> = linspace(resolution);
        match *self {
            ManifoldSpec::GaussianPlane { .. } | ManifoldSpec::GaussianLine { .. } => Err(
                Error::UnsupportedSpec(format!("no grid is defined for {}", self.name())),
            ),
            ManifoldSpec::Cylinder {
                radius,
                height,
                center,
            } => {
                let mut coords = Vec::with_capacity(resolution * resolution * 3);
                for &h in &axis {
                    for a in 0..resolution {
                        let angle = 2.0 * PI * a as f64 / resolution as f64;
                        coords.push(center[0] + radius * angle.cos());
                        coords.push(center[1] + radius * angle.sin());
                        coords.push(center[2] + height * h);
                    }
                }
                Ok(PointCloud::from_raw(3, coords))
            }
            _ => {
                let dim = self.ambient_dim();
                let total = resolution
                    .checked_pow(dim as u32)
                    .filter(|&t| t <= 50_000_000)
                    .ok_or_else(|| Error::Parameter("grid is too large".into()))?;
                let mut coords = Vec::with_capacity(total * dim);
                let mut index = vec![0usize; dim];
                for _ in 0..total {
                    coords.extend(index.iter().map(|&i| axis[i]));
                    // Odometer increment, last axis fastest.
                    for k in (0..dim).rev() {
                        index[k] += 1;
                        if index[k] < resolution {
                            break;
                        }
                        index[k] = 0;
                    }
                }
                Ok(PointCloud::from_raw(dim, coords))
            }
        }
    }

    /// Residual of the support constraint at `p`: zero for points on the support.
    pub fn support_residual(&self, p: &[f64]) -> f64 {
        let box_excess = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
        match *self {
            ManifoldSpec::Cylinder {
                radius,
                height,
                center,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy - radius * radius)
                    .abs()
                    .max(box_excess(p[2], center[2], center[2] + height))
            }
            ManifoldSpec::GaussianPlane { .. } | ManifoldSpec::GaussianLine { .. } => 0.0,
            _ => p.iter().map(|&v| box_excess(v, 0.0, 1.0)).fold(0.0, f64::max),
        }
    }
}

fn linspace(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    variant: String,
    #[serde(default)]
    params: Map<String, Value>,
}

impl From<ManifoldSpec> for SpecRepr {
    fn from(spec: ManifoldSpec) -> Self {
        let params = match spec {
            ManifoldSpec::HypercubeUniform(m) => json!({ "m": m }),
            ManifoldSpec::Cylinder {
                radius,
                height,
                center,
            } => json!({ "radius": radius, "height": height, "center": center }),
            ManifoldSpec::GaussianPlane { mean, covariance } => {
                json!({ "mean": mean, "covariance": covariance })
            }
            ManifoldSpec::GaussianLine { mean, stddev } => json!({ "mean": mean, "stddev": stddev }),
            _ => json!({}),
        };
        let Value::Object(params) = params else {
            unreachable!()
        };
        SpecRepr {
            variant: spec.name().to_string(),
            params,
        }
    }
}

impl TryFrom<SpecRepr> for ManifoldSpec {
    type Error = String;

    fn try_from(repr: SpecRepr) -> std::result::Result<Self, String> {
        fn field<T: serde::de::DeserializeOwned>(
            params: &Map<String, Value>,
            key: &str,
            default: Option<T>,
        ) -> std::result::Result<T, String> {
            match params.get(key) {
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("{key}: {e}")),
                None => default.ok_or_else(|| format!("missing parameter `{key}`")),
            }
        }
        let p = &repr.params;
        let spec = match repr.variant.as_str() {
            "UnitInterval" => ManifoldSpec::UnitInterval,
            "UnitSquare" => ManifoldSpec::UnitSquare,
            "UnitCube" => ManifoldSpec::UnitCube,
            "HypercubeUniform" => ManifoldSpec::HypercubeUniform(field(p, "m", None)?),
            "Cylinder" => ManifoldSpec::Cylinder {
                radius: field(p, "radius", Some(0.5))?,
                height: field(p, "height", Some(1.0))?,
                center: field(p, "center", Some([0.0; 3]))?,
            },
            "GaussianPlane" => ManifoldSpec::GaussianPlane {
                mean: field(p, "mean", Some([0.0; 2]))?,
                covariance: field(p, "covariance", Some([[1.0, 0.0], [0.0, 1.0]]))?,
            },
            "GaussianLine" => ManifoldSpec::GaussianLine {
                mean: field(p, "mean", Some(0.0))?,
                stddev: field(p, "stddev", Some(1.0))?,
            },
            other => return Err(format!("unknown manifold variant `{other}`")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

/// Aggregation used by [`fill_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillMode {
    /// Mean over data points of the distance to the nearest generated point.
    Mean,
    /// Worst case over data points (the ε-space-filling criterion).
    Sup,
}

/// Distance from each data point to its nearest generated point, aggregated by `mode`.
pub fn fill_distance(data: &PointCloud, generated: &PointCloud, mode: FillMode) -> Result<f64> {
    check_dims(data, generated)?;
    let nearest = data.points().map(|x| {
        generated
            .points()
            .map(|y| sq_dist(x, y))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    Ok(match mode {
        FillMode::Mean => nearest.sum::<f64>() / data.len() as f64,
        FillMode::Sup => nearest.fold(0.0, f64::max),
    })
}

pub(crate) fn check_dims(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "ambient dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Dense row-major matrix of transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// `‖x - y‖^p` for p = 1 and p = 2 without a pow call.
#[inline]
pub(crate) fn ground_cost(a: &[f64], b: &[f64], p: f64) -> f64 {
    let sq = sq_dist(a, b);
    if p == 1.0 {
        sq.sqrt()
    } else if p == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p)
    }
}

/// Cost matrix with entries `‖a_i - b_j‖^p`.
pub fn pairwise_cost(a: &PointCloud, b: &PointCloud, p: f64) -> Result<CostMatrix> {
    check_dims(a, b)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("cost exponent p = {p} must be >= 1")));
    }
    Ok(CostMatrix::from_fn(a.len(), b.len(), |i, j| {
        ground_cost(a.point(i), b.point(j), p)
    }))
}
