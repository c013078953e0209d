//! Multi-manifold embedding engine for click-through-rate prediction.
//!
//! Users and ads are embedded simultaneously in several manifolds
//! (Euclidean spaces and Poincaré balls of configurable curvature). Each
//! manifold scores a pair by negative geodesic distance; an attention layer
//! fuses the per-manifold scores into one click logit. Parameters are trained
//! with Riemannian SGD on binary cross-entropy.
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | conformal factor, Möbius addition, distance, exp/log maps, projection |
//! | [`optim`] | Riemannian gradients, RSGD steps, finite-difference gradient check |
//! | [`model`] | embedding tables, per-manifold scores, attention fusion, loss and backward |
//! | [`data`] | interaction logs, vocabularies, negative sampling, synthetic tree data |
//! | [`trainer`] | training loop and evaluation |
//! | [`checkpoint`] | JSON checkpoint format |
//! | [`serving`] | exact top-K retrieval |
//! | [`selftest`] | randomised invariant suite |

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seeds;
pub mod selftest;
pub mod serving;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint};
pub use data::{InteractionRecord, SyntheticTreeSpec, Vocab};
pub use error::{Error, Result};
pub use geometry::{ManifoldKind, ManifoldPoint, ManifoldSpec, TangentVector};
pub use metrics::Metrics;
pub use model::{FusionParams, LabeledPair, Model, ModelConfig};
pub use optim::{OptimizerConfig, UpdateMode};
pub use serving::{RankedAds, ScoredAd};
pub use trainer::{evaluate, train, TrainConfig, Trainer};
