//! Fully connected ReLU networks: evaluation, reverse-mode gradients, Adam
//! and the optional entrywise weight bound.
//!
//! Parameters live in one flat vector. Layer `l` occupies a contiguous block
//! holding its weight matrix (row-major, `out × in`) followed by its bias.

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::{self, streams};

/// Layer sizes of a network `R^m -> R^D`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_widths,
            output_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Parameter(format!(
                "architecture sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// Largest hidden width (0 for a single affine layer).
    pub fn width(&self) -> usize {
        self.hidden_widths.iter().copied().max().unwrap_or(0)
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.depth() + 1);
        sizes.push(self.input_dim);
        sizes.extend(&self.hidden_widths);
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| o * i + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl LayerSlot {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

fn slots(arch: &MlpArchitecture) -> Vec<LayerSlot> {
    let mut offset = 0;
    arch.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                offset,
            };
            offset += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

/// Weights and biases of a ReLU network together with the seed that
/// initialized it.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArchitecture,
    slots: Vec<LayerSlot>,
    values: Vec<f64>,
    seed: u64,
}

impl MlpParams {
    /// Wraps a flat parameter vector laid out layer by layer as `W` then `b`.
    pub fn from_flat(arch: MlpArchitecture, values: Vec<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite parameter {v}")));
        }
        Ok(Self {
            slots: slots(&arch),
            arch,
            values,
            seed,
        })
    }

    /// Builds parameters from per-layer `(weights, bias)` with weights given
    /// as rows (`fan_out` rows of length `fan_in`).
    pub fn from_layers(arch: MlpArchitecture, layers: &[(Vec<Vec<f64>>, Vec<f64>)], seed: u64) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "architecture has {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(arch.param_count());
        for (l, ((w, b), &(fan_in, fan_out))) in layers.iter().zip(&shapes).enumerate() {
            if w.len() != fan_out || w.iter().any(|r| r.len() != fan_in) || b.len() != fan_out {
                return Err(Error::Shape(format!(
                    "layer {l} must have a {fan_out}x{fan_in} weight matrix and {fan_out} biases"
                )));
            }
            values.extend(w.iter().flatten());
            values.extend(b);
        }
        Self::from_flat(arch, values, seed)
    }

    /// The single affine layer `x -> (x_1, ..., x_k)`, i.e. `W = [I | 0]`,
    /// `b = 0`, which drops trailing input coordinates.
    pub fn projection(input_dim: usize, output_dim: usize) -> Result<Self> {
        if output_dim > input_dim {
            return Err(Error::Parameter(format!(
                "cannot project {input_dim} inputs onto {output_dim} outputs"
            )));
        }
        let arch = MlpArchitecture::new(input_dim, Vec::new(), output_dim)?;
        let mut values = vec![0.0; arch.param_count()];
        for r in 0..output_dim {
            values[r * input_dim + r] = 1.0;
        }
        Self::from_flat(arch, values, 0)
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight matrix of layer `l`, row-major `fan_out × fan_in`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.values[self.slots[l].weights()]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        &self.values[self.slots[l].bias()]
    }

    /// Largest absolute entry over all weights and biases.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    arch: MlpArchitecture,
    layers: Vec<LayerRepr>,
    seed: u64,
}

impl Serialize for MlpParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let layers = self
            .slots
            .iter()
            .map(|slot| LayerRepr {
                w: self.values[slot.weights()]
                    .chunks(slot.fan_in)
                    .map(<[f64]>::to_vec)
                    .collect(),
                b: self.values[slot.bias()].to_vec(),
            })
            .collect();
        ParamsRepr {
            arch: self.arch.clone(),
            layers,
            seed: self.seed,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ParamsRepr::deserialize(d)?;
        let layers: Vec<_> = repr.layers.into_iter().map(|l| (l.w, l.b)).collect();
        MlpParams::from_layers(repr.arch, &layers, repr.seed).map_err(serde::de::Error::custom)
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn init(arch: &MlpArchitecture, seed: u64) -> Result<MlpParams> {
    arch.validate()?;
    let mut rng = rng::stream(seed, streams::INIT);
    let mut values = vec![0.0; arch.param_count()];
    for slot in slots(arch) {
        let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
        for w in &mut values[slot.weights()] {
            *w = rng.random_range(-limit..=limit);
        }
    }
    MlpParams::from_flat(arch.clone(), values, seed)
}

/// `out (n × fan_out) = input (n × fan_in) · Wᵀ + b`.
fn affine(input: &[f64], n: usize, weights: &[f64], bias: &[f64], out: &mut Vec<f64>) {
    let (fan_out, fan_in) = (bias.len(), weights.len() / bias.len());
    out.clear();
    out.reserve(n * fan_out);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    // SAFETY: every pointer/stride pair addresses a slice of exactly the
    // stated shape: input is n×fan_in row-major, weights read transposed as
    // fan_in×fan_out, out is n×fan_out row-major.
    unsafe {
        matrixmultiply::dgemm(
            n,
            fan_in,
            fan_out,
            1.0,
            input.as_ptr(),
            fan_in as isize,
            1,
            weights.as_ptr(),
            1,
            fan_in as isize,
            1.0,
            out.as_mut_ptr(),
            fan_out as isize,
            1,
        );
    }
}

fn check_input(params: &MlpParams, batch: &PointCloud) -> Result<()> {
    if batch.dim() != params.arch.input_dim {
        return Err(Error::Shape(format!(
            "network expects {}-dimensional inputs, got {}",
            params.arch.input_dim,
            batch.dim()
        )));
    }
    Ok(())
}

/// Layer inputs recorded by a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    /// `activations[l]` is the input of layer `l`; the last entry is the
    /// network output.
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self, params: &MlpParams) -> PointCloud {
        PointCloud::from_raw(params.arch.output_dim, self.activations.last().unwrap().clone())
    }

    pub fn into_output(mut self, params: &MlpParams) -> PointCloud {
        PointCloud::from_raw(params.arch.output_dim, self.activations.pop().unwrap())
    }

    /// Gradient of `Σ_rows ⟨output_grads_row, g(x_row)⟩`.
    pub fn backward(&self, params: &MlpParams, output_grads: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if output_grads.len() != n * params.arch.output_dim {
            return Err(Error::Shape(format!(
                "expected {} output gradients, got {}",
                n * params.arch.output_dim,
                output_grads.len()
            )));
        }
        let mut grads = vec![0.0; params.len()];
        let mut upstream = output_grads.to_vec();
        let mut next = Vec::new();
        for (l, slot) in params.slots.iter().enumerate().rev() {
            let input = &self.activations[l];
            let (fan_in, fan_out) = (slot.fan_in, slot.fan_out);
            let (gw, gb) = grads[slot.offset..slot.bias().end].split_at_mut(fan_in * fan_out);
            for row in upstream.chunks_exact(fan_out) {
                for (b, u) in gb.iter_mut().zip(row) {
                    *b += u;
                }
            }
            // SAFETY: upstream is n×fan_out (read transposed), input is
            // n×fan_in, gw is fan_out×fan_in; all row-major.
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    n,
                    fan_in,
                    1.0,
                    upstream.as_ptr(),
                    1,
                    fan_out as isize,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    gw.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            if l == 0 {
                break;
            }
            next.clear();
            next.resize(n * fan_in, 0.0);
            let w = params.weights(l);
            // SAFETY: upstream n×fan_out times w fan_out×fan_in into next
            // n×fan_in, all row-major.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    upstream.as_ptr(),
                    fan_out as isize,
                    1,
                    w.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    next.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            // ReLU derivative, taken as 0 at the kink.
            for (g, &a) in next.iter_mut().zip(input) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            std::mem::swap(&mut upstream, &mut next);
        }
        Ok(grads)
    }
}

/// Forward pass that keeps every layer input for [`Tape::backward`].
pub fn forward_tape(params: &MlpParams, batch: &PointCloud) -> Result<Tape> {
    check_input(params, batch)?;
    let n = batch.len();
    let depth = params.slots.len();
    let mut activations = Vec::with_capacity(depth + 1);
    activations.push(batch.coords().to_vec());
    for (l, slot) in params.slots.iter().enumerate() {
        let mut out = Vec::new();
        affine(
            activations.last().unwrap(),
            n,
            &params.values[slot.weights()],
            &params.values[slot.bias()],
            &mut out,
        );
        if l + 1 < depth {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        activations.push(out);
    }
    Ok(Tape { n, activations })
}

/// Evaluates the network on every row of `batch`.
pub fn forward(params: &MlpParams, batch: &PointCloud) -> Result<PointCloud> {
    check_input(params, batch)?;
    let n = batch.len();
    let depth = params.slots.len();
    let mut current = batch.coords().to_vec();
    let mut out = Vec::new();
    for (l, slot) in params.slots.iter().enumerate() {
        affine(&current, n, &params.values[slot.weights()], &params.values[slot.bias()], &mut out);
        if l + 1 < depth {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        std::mem::swap(&mut current, &mut out);
    }
    Ok(PointCloud::from_raw(params.arch.output_dim, current))
}

/// Parameter gradients (same flat layout as the parameters) of
/// `Σ_rows ⟨output_grads_row, g(x_row)⟩`, with `output_grads` flattened
/// row-major.
pub fn backward(params: &MlpParams, batch: &PointCloud, output_grads: &[f64]) -> Result<Vec<f64>> {
    forward_tape(params, batch)?.backward(params, output_grads)
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment estimates and step count of an Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &MlpParams) -> Self {
        Self::new(config, params.len())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut MlpParams, grads: &[f64], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, optimizer sized for {}",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params
        .values
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

/// Entrywise bound `|W_ij|, |b_i| <= kappa`, or no bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampConfig {
    kappa: Option<f64>,
}

impl ClampConfig {
    pub const UNBOUNDED: Self = Self { kappa: None };

    pub fn bounded(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Parameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa: Some(kappa) })
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KappaRepr {
    Bound(f64),
    Word(String),
}

#[derive(Serialize, Deserialize)]
struct ClampRepr {
    kappa: KappaRepr,
}

impl Serialize for ClampConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let kappa = match self.kappa {
            Some(k) => KappaRepr::Bound(k),
            None => KappaRepr::Word("unbounded".into()),
        };
        ClampRepr { kappa }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClampConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ClampRepr::deserialize(d)?.kappa {
            KappaRepr::Bound(k) => ClampConfig::bounded(k).map_err(serde::de::Error::custom),
            KappaRepr::Word(w) if w == "unbounded" => Ok(ClampConfig::UNBOUNDED),
            KappaRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "kappa must be a number or \"unbounded\", got \"{w}\""
            ))),
        }
    }
}

/// Clips every entry into `[-kappa, kappa]`; no-op when unbounded.
pub fn clamp_weights(params: &mut MlpParams, cfg: ClampConfig) {
    if let Some(k) = cfg.kappa {
        for v in &mut params.values {
            *v = v.clamp(-k, k);
        }
    }
}

/// A network class: at most `max_depth` affine layers, hidden widths at
/// most `max_width`, entries bounded by `bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkClass {
    pub input_dim: usize,
    pub output_dim: usize,
    pub max_depth: usize,
    pub max_width: usize,
    pub bound: ClampConfig,
}

impl NetworkClass {
    pub fn contains(&self, params: &MlpParams) -> bool {
        let arch = params.arch();
        arch.input_dim == self.input_dim
            && arch.output_dim == self.output_dim
            && arch.depth() <= self.max_depth
            && arch.width() <= self.max_width
            && self.bound.kappa.is_none_or(|k| params.max_abs() <= k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(m: usize, hidden: &[usize], d: usize) -> MlpArchitecture {
        MlpArchitecture::new(m, hidden.to_vec(), d).unwrap()
    }

    fn cloud(dim: usize, coords: &[f64]) -> PointCloud {
        PointCloud::new(dim, coords.to_vec()).unwrap()
    }

    /// Straightforward per-row evaluation used as an oracle.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let depth = p.arch().depth();
        for l in 0..depth {
            let w = p.weights(l);
            let b = p.bias(l);
            let mut z: Vec<f64> = (0..b.len())
                .map(|r| b[r] + (0..a.len()).map(|c| w[r * a.len() + c] * a[c]).sum::<f64>())
                .collect();
            if l + 1 < depth {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = arch(1, &[10, 10], 2);
        let p = init(&a, 5).unwrap();
        assert_eq!(p, init(&a, 5).unwrap());
        assert_ne!(p, init(&a, 6).unwrap());
        assert_eq!(a.layer_shapes(), vec![(1, 10), (10, 10), (10, 2)]);
        assert_eq!(p.weights(0).len(), 10);
        assert_eq!(p.weights(1).len(), 100);
        assert_eq!(p.weights(2).len(), 20);
        for l in 0..3 {
            assert!(p.bias(l).iter().all(|&b| b == 0.0));
        }
        let limit = (6.0f64 / 20.0).sqrt();
        assert!(p.weights(1).iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn identity_and_constant_networks() {
        let a = arch(2, &[], 2);
        let id = MlpParams::from_flat(a.clone(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 0).unwrap();
        let x = cloud(2, &[0.25, -3.5, 1e-7, 2.0]);
        assert_eq!(forward(&id, &x).unwrap(), x);
        let constant = MlpParams::from_flat(a, vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.7], 0).unwrap();
        let y = forward(&constant, &x).unwrap();
        assert!(y.points().all(|p| p == [0.3, 0.7]));
    }

    #[test]
    fn absolute_value_network() {
        let p = MlpParams::from_layers(
            arch(1, &[2], 1),
            &[(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0]), (vec![vec![1.0, 1.0]], vec![0.0])],
            0,
        )
        .unwrap();
        let y = forward(&p, &cloud(1, &[-2.0, 0.0, 1.5])).unwrap();
        assert_eq!(y.coords(), &[2.0, 0.0, 1.5]);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = init(&arch(2, &[3], 1), 0).unwrap();
        assert!(matches!(forward(&p, &cloud(3, &[0.0; 3])), Err(Error::Shape(_))));
        assert!(matches!(backward(&p, &cloud(2, &[0.0; 2]), &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_of_affine_layer() {
        let p = MlpParams::from_flat(arch(2, &[], 3), (0..9).map(f64::from).collect(), 0).unwrap();
        let x = [0.5, -2.0];
        let u = [1.0, -1.0, 3.0];
        let g = backward(&p, &cloud(2, &x), &u).unwrap();
        let mut expected = Vec::new();
        for ur in u {
            expected.extend(x.iter().map(|xc| ur * xc));
        }
        expected.extend(u);
        assert_eq!(g, expected);
        let zero = backward(&p, &cloud(2, &x), &[0.0; 3]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_layer_keeps_leading_coordinates() {
        let p = MlpParams::projection(3, 2).unwrap();
        let y = forward(&p, &cloud(3, &[0.1, 0.2, 0.3, -1.0, 4.0, 9.0])).unwrap();
        assert_eq!(y.coords(), &[0.1, 0.2, -1.0, 4.0]);
        assert!(MlpParams::projection(2, 3).is_err());
    }

    #[test]
    fn adam_first_step() {
        let a = arch(1, &[], 1);
        let mut p = MlpParams::from_flat(a, vec![0.0, 0.0], 0).unwrap();
        let mut state = AdamState::for_params(AdamConfig::default(), &p);
        adam_step(&mut p, &[1.0, 0.0], &mut state).unwrap();
        assert!((p.as_flat()[0] + 0.001).abs() < 1e-6);
        assert_eq!(p.as_flat()[1], 0.0);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut p = init(&arch(2, &[4], 1), 3).unwrap();
        let before = p.clone();
        let mut state = AdamState::for_params(AdamConfig::default(), &p);
        let zeros = vec![0.0; p.len()];
        for _ in 0..5 {
            adam_step(&mut p, &zeros, &mut state).unwrap();
        }
        assert_eq!(p, before);
        assert!(state.first_moment().iter().chain(state.second_moment()).all(|&m| m == 0.0));
        assert!(adam_step(&mut p, &[1.0], &mut state).is_err());
    }

    #[test]
    fn clamping() {
        let a = arch(1, &[], 1);
        let mut p = MlpParams::from_flat(a.clone(), vec![-1.0, 3.0], 0).unwrap();
        clamp_weights(&mut p, ClampConfig::UNBOUNDED);
        assert_eq!(p.as_flat(), &[-1.0, 3.0]);
        clamp_weights(&mut p, ClampConfig::bounded(0.5).unwrap());
        assert_eq!(p.as_flat(), &[-0.5, 0.5]);
        let mut q = MlpParams::from_flat(arch(1, &[1], 1), vec![-1.0, 0.2, 3.0, 0.0], 0).unwrap();
        clamp_weights(&mut q, ClampConfig::bounded(0.5).unwrap());
        assert_eq!(q.as_flat(), &[-0.5, 0.2, 0.5, 0.0]);
        assert!(ClampConfig::bounded(0.0).is_err());
        assert!(ClampConfig::default().kappa().is_none());
    }

    #[test]
    fn clamp_json() {
        let c: ClampConfig = serde_json::from_str(r#"{"kappa":"unbounded"}"#).unwrap();
        assert_eq!(c, ClampConfig::UNBOUNDED);
        let c: ClampConfig = serde_json::from_str(r#"{"kappa":2.5}"#).unwrap();
        assert_eq!(c.kappa(), Some(2.5));
        assert!(serde_json::from_str::<ClampConfig>(r#"{"kappa":-1}"#).is_err());
        assert!(serde_json::from_str::<ClampConfig>(r#"{"kappa":"huge"}"#).is_err());
        assert_eq!(serde_json::to_string(&ClampConfig::UNBOUNDED).unwrap(), r#"{"kappa":"unbounded"}"#);
    }

    #[test]
    fn checkpoint_json_round_trip() {
        let p = init(&arch(2, &[3, 4], 3), 17).unwrap();
        let text = p.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seed"], 17);
        assert_eq!(v["layers"][1]["w"].as_array().unwrap().len(), 4);
        assert_eq!(v["layers"][1]["w"][0].as_array().unwrap().len(), 3);
        assert_eq!(MlpParams::from_json(&text).unwrap(), p);
        let v_bad = r#"{"arch":{"input_dim":1,"hidden_widths":[],"output_dim":1},"layers":[{"w":[[1,2]],"b":[0]}],"seed":0}"#;
        assert!(MlpParams::from_json(v_bad).is_err());
    }

    #[test]
    fn class_membership() {
        let p = init(&arch(2, &[5, 3], 1), 0).unwrap();
        let class = NetworkClass {
            input_dim: 2,
            output_dim: 1,
            max_depth: 3,
            max_width: 5,
            bound: ClampConfig::bounded(p.max_abs()).unwrap(),
        };
        assert!(class.contains(&p));
        assert!(!NetworkClass { max_depth: 2, ..class }.contains(&p));
        assert!(!NetworkClass { max_width: 4, ..class }.contains(&p));
        assert!(!NetworkClass {
            bound: ClampConfig::bounded(0.99 * p.max_abs()).unwrap(),
            ..class
        }
        .contains(&p));
        assert!(NetworkClass {
            bound: ClampConfig::UNBOUNDED,
            ..class
        }
        .contains(&p));
    }

    #[test]
    fn batched_forward_matches_per_row_oracle() {
        let p = init(&arch(3, &[7, 5], 2), 9).unwrap();
        let coords: Vec<f64> = (0..30).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let x = cloud(3, &coords);
        let y = forward(&p, &x).unwrap();
        let tape = forward_tape(&p, &x).unwrap();
        assert_eq!(tape.output(&p), y);
        for (xi, yi) in x.points().zip(y.points()) {
            for (a, b) in naive_forward(&p, xi).iter().zip(yi) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    fn arch_strategy() -> impl Strategy<Value = MlpArchitecture> {
        (1usize..=4, prop::collection::vec(1usize..=8, 0..=3), 1usize..=4)
            .prop_map(|(m, h, d)| MlpArchitecture::new(m, h, d).unwrap())
    }

    proptest! {
        #[test]
        fn positive_homogeneity(m in 1usize..4, w in 1usize..8, d in 1usize..4, seed in any::<u64>(),
                                lambda in 0.0..10.0f64, x in prop::collection::vec(-2.0..2.0f64, 4)) {
            let p = init(&arch(m, &[w], d), seed).unwrap();
            let x1 = cloud(m, &x[..m]);
            let xs = cloud(m, &x[..m].iter().map(|v| v * lambda).collect::<Vec<_>>());
            let y1 = forward(&p, &x1).unwrap();
            let ys = forward(&p, &xs).unwrap();
            for (a, b) in y1.coords().iter().zip(ys.coords()) {
                prop_assert!((a * lambda - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn gradients_match_central_differences(a in arch_strategy(), seed in any::<u64>(), n in 1usize..4) {
            use rand::Rng as _;
            let mut r = crate::rng::stream(seed, 99);
            // Random nonzero biases so kinks are not aligned with the origin.
            let values: Vec<f64> = init(&a, seed).unwrap().as_flat().iter()
                .map(|&v| v + r.random_range(-0.5..0.5)).collect();
            let p = MlpParams::from_flat(a.clone(), values, seed).unwrap();
            let x = cloud(a.input_dim, &(0..n * a.input_dim).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let u: Vec<f64> = (0..n * a.output_dim).map(|_| r.random_range(-1.0..1.0)).collect();
            // Skip inputs within reach of a ReLU kink.
            let tape = forward_tape(&p, &x).unwrap();
            let near_kink = (1..a.depth()).any(|l| {
                let prev = &tape.activations[l - 1];
                let fan_in = a.layer_shapes()[l - 1].0;
                prev.chunks(fan_in).any(|row| {
                    let z = naive_layer(&p, l - 1, row);
                    z.iter().any(|v| v.abs() < 1e-3)
                })
            });
            prop_assume!(!near_kink);
            let g = tape.backward(&p, &u).unwrap();
            let objective = |q: &MlpParams| -> f64 {
                forward(q, &x).unwrap().coords().iter().zip(&u).map(|(y, u)| y * u).sum()
            };
            let h = 1e-5;
            for k in 0..p.len() {
                let mut plus = p.as_flat().to_vec();
                plus[k] += h;
                let mut minus = p.as_flat().to_vec();
                minus[k] -= h;
                let fd = (objective(&MlpParams::from_flat(a.clone(), plus, 0).unwrap())
                    - objective(&MlpParams::from_flat(a.clone(), minus, 0).unwrap())) / (2.0 * h);
                let scale = fd.abs().max(g[k].abs()).max(1e-6);
                prop_assert!((fd - g[k]).abs() / scale <= 1e-4, "param {k}: fd {fd} analytic {}", g[k]);
            }
        }

        #[test]
        fn clamp_bounds_entries(seed in any::<u64>(), kappa in 0.01..1.0f64) {
            let mut p = init(&arch(3, &[6, 6], 2), seed).unwrap();
            clamp_weights(&mut p, ClampConfig::bounded(kappa).unwrap());
            prop_assert!(p.max_abs() <= kappa);
        }
    }

    /// Pre-activation of layer `l` for one layer input.
    fn naive_layer(p: &MlpParams, l: usize, input: &[f64]) -> Vec<f64> {
        let w = p.weights(l);
        let b = p.bias(l);
        (0..b.len())
            .map(|r| b[r] + input.iter().enumerate().map(|(c, a)| w[r * input.len() + c] * a).sum::<f64>())
            .collect()
    }
}
