//! Generative-modeling laboratory for manifold-supported targets.
//!
//! The crate trains small ReLU networks `g: [0,1]^m -> R^D` so that the
//! pushforward of an easy input distribution matches a target point cloud
//! under an exactly computed Wasserstein loss, and ships the constructive
//! oracles (serpentine space-filling curves and sheets, pullback smoothing,
//! inverse-CDF reparameterization) that explain why a one-dimensional input
//! can still fill a two- or three-dimensional target.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | manifolds, samplers, grids, fill distance, cost matrices |
//! | [`transport`] | exact (assignment / network simplex) and entropic OT, plan gradients |
//! | [`network`] | ReLU MLP forward/backward, Adam, weight clamping |
//! | [`spacefill`] | curves, sheets, pullback densities, reparameterization maps |
//! | [`trainer`] | the generator training loop and evaluation |
//! | [`experiments`] | presets, sweeps, run persistence and SVG plots |

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod network;
pub mod rng;
pub mod spacefill;
pub mod trainer;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{FillMode, ManifoldSpec, PointCloud};
pub use network::{AdamConfig, ClampConfig, MlpArchitecture, MlpParams};
pub use transport::{EmpiricalMeasure, OtConfig, OtMethod, TransportPlan};
