//! Multi-manifold click scorer.
//!
//! Each user and ad owns one row per manifold. For a pair, manifold `m`
//! contributes the score `s_m = −β_m·d_m(u_m, a_m) + b_m`. The scores are
//! fused by attention conditioned on the score vector itself,
//! `α = softmax(W·s)`, into the logit `Σ_m α_m s_m + b₀`, and the click
//! probability is `σ(logit)`. Training minimises binary cross-entropy.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{all_finite, norm, ManifoldPoint, ManifoldSpec};
use crate::optim::{rsgd_step_slice, tangent_origin_step_slice, OptimizerConfig, UpdateMode};
use crate::seeds;

/// Lower bound applied to every per-manifold score scale `β_m`.
pub const MIN_SCALE: f64 = 1e-3;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    User,
    Ad,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Ad => "ad",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub manifolds: Vec<ManifoldSpec>,
    pub negatives_per_positive: usize,
    pub init_scale: f64,
    #[serde(default)]
    pub update_mode: UpdateMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl ModelConfig {
    pub fn new(manifolds: Vec<ManifoldSpec>) -> Self {
        Self {
            manifolds,
            negatives_per_positive: 4,
            init_scale: 1e-2,
            update_mode: UpdateMode::Riemannian,
            seed: default_seed(),
        }
    }

    pub fn num_manifolds(&self) -> usize {
        self.manifolds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifolds.is_empty() {
            return Err(Error::config("model.manifolds", "at least one manifold is required"));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::config("model.negatives_per_positive", "must be >= 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::config("model.init_scale", "must be finite and > 0"));
        }
        for (i, spec) in self.manifolds.iter().enumerate() {
            let limit = 0.1 / spec.curvature().max(1.0).sqrt();
            if self.init_scale > limit {
                return Err(Error::config(
                    "model.init_scale",
                    format!("must be <= 0.1/sqrt(max(c, 1)) = {limit} for manifolds[{i}]"),
                ));
            }
        }
        Ok(())
    }
}

/// Row-major embeddings for one entity kind on one manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    spec: ManifoldSpec,
    kind: EntityKind,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_rows(spec: ManifoldSpec, kind: EntityKind, rows: Vec<f64>) -> Result<Self> {
        let dim = spec.dim();
        if rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::domain(format!(
                "{} table needs a non-empty multiple of {dim} values, got {}",
                kind.name(),
                rows.len()
            )));
        }
        for row in rows.chunks_exact(dim) {
            spec.check_point(row)?;
        }
        Ok(Self { spec, kind, rows })
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.spec.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.spec.dim();
        &self.rows[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> ManifoldPoint {
        ManifoldPoint::new(self.spec, self.row(i).to_vec()).expect("table rows satisfy the invariant")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    /// Replaces row `i`, re-checking the point invariant.
    pub fn set_row(&mut self, i: usize, row: &[f64]) -> Result<()> {
        self.spec.check_point(row)?;
        let d = self.spec.dim();
        self.rows[i * d..(i + 1) * d].copy_from_slice(row);
        Ok(())
    }
}

/// Fusion parameters for `M` manifolds. `attention_weights` is `M × M`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionParams {
    pub manifold_bias: Vec<f64>,
    pub manifold_scale: Vec<f64>,
    pub attention_weights: Vec<f64>,
    pub global_bias: f64,
}

impl FusionParams {
    /// Zero biases, unit scales and zero attention (uniform weights).
    pub fn neutral(m: usize) -> Self {
        Self {
            manifold_bias: vec![0.0; m],
            manifold_scale: vec![1.0; m],
            attention_weights: vec![0.0; m * m],
            global_bias: 0.0,
        }
    }

    pub fn num_manifolds(&self) -> usize {
        self.manifold_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.manifold_bias.len();
        if m == 0 {
            return Err(Error::config("fusion.manifold_bias", "at least one manifold"));
        }
        if self.manifold_scale.len() != m {
            return Err(Error::config("fusion.manifold_scale", format!("expected {m} entries")));
        }
        if self.attention_weights.len() != m * m {
            return Err(Error::config(
                "fusion.attention_weights",
                format!("expected {} entries", m * m),
            ));
        }
        if self.manifold_scale.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::config("fusion.manifold_scale", "entries must be finite and > 0"));
        }
        if !all_finite(&self.manifold_bias)
            || !all_finite(&self.attention_weights)
            || !self.global_bias.is_finite()
        {
            return Err(Error::config("fusion", "parameters must be finite"));
        }
        Ok(())
    }
}

/// Output of [`fuse`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub alpha: Vec<f64>,
    pub logit: f64,
}

/// Per-manifold relevance `s_m = −β_m·d_m(u_m, a_m) + b_m`.
pub fn score_per_manifold(
    users: &[ManifoldPoint],
    ads: &[ManifoldPoint],
    fp: &FusionParams,
) -> Result<Vec<f64>> {
    let m = fp.num_manifolds();
    if users.len() != m || ads.len() != m {
        return Err(Error::LengthMismatch {
            left: users.len().max(ads.len()),
            right: m,
        });
    }
    users
        .iter()
        .zip(ads)
        .enumerate()
        .map(|(i, (u, a))| {
            let d = crate::geometry::distance(u, a)?;
            Ok(-fp.manifold_scale[i] * d + fp.manifold_bias[i])
        })
        .collect()
}

/// `α = softmax(W·s)`, `logit = Σ α_m s_m + b₀`.
pub fn fuse(s: &[f64], fp: &FusionParams) -> Result<Fused> {
    let m = fp.num_manifolds();
    if s.len() != m {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: m,
        });
    }
    if !all_finite(s) {
        return Err(Error::domain("non-finite manifold score"));
    }
    let alpha = softmax(&attention_logits(s, &fp.attention_weights));
    let logit = alpha.iter().zip(s).map(|(a, v)| a * v).sum::<f64>() + fp.global_bias;
    Ok(Fused { alpha, logit })
}

fn attention_logits(s: &[f64], w: &[f64]) -> Vec<f64> {
    let m = s.len();
    (0..m)
        .map(|j| (0..m).map(|k| w[j * m + k] * s[k]).sum())
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub fn sigmoid(logit: f64) -> f64 {
    if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[1e−7, 1 − 1e−7]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs.iter().zip(labels).map(|(p, y)| bce_term(*p, *y)).sum();
    Ok(total / probs.len() as f64)
}

fn bce_term(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// A `(user index, ad index, label)` training or evaluation example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub user: usize,
    pub ad: usize,
    pub label: u8,
}

impl LabeledPair {
    pub fn new(user: usize, ad: usize, label: u8) -> Self {
        Self { user, ad, label }
    }
}

/// Gradient of the fusion parameters; same layout as [`FusionParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrad {
    pub manifold_bias: Vec<f64>,
    pub manifold_scale: Vec<f64>,
    pub attention_weights: Vec<f64>,
    pub global_bias: f64,
}

impl FusionGrad {
    fn zeros(m: usize) -> Self {
        Self {
            manifold_bias: vec![0.0; m],
            manifold_scale: vec![0.0; m],
            attention_weights: vec![0.0; m * m],
            global_bias: 0.0,
        }
    }
}

/// Sparse ambient gradients: only rows touched by the batch appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub user_rows: Vec<BTreeMap<usize, Vec<f64>>>,
    pub ad_rows: Vec<BTreeMap<usize, Vec<f64>>>,
    pub fusion: FusionGrad,
}

impl Gradients {
    pub fn zeros(m: usize) -> Self {
        Self {
            user_rows: vec![BTreeMap::new(); m],
            ad_rows: vec![BTreeMap::new(); m],
            fusion: FusionGrad::zeros(m),
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: Gradients) {
        fn add_rows(dst: &mut [BTreeMap<usize, Vec<f64>>], src: Vec<BTreeMap<usize, Vec<f64>>>) {
            for (d, s) in dst.iter_mut().zip(src) {
                for (idx, g) in s {
                    accumulate(d, idx, &g, 1.0);
                }
            }
        }
        add_rows(&mut self.user_rows, other.user_rows);
        add_rows(&mut self.ad_rows, other.ad_rows);
        add_assign(&mut self.fusion.manifold_bias, &other.fusion.manifold_bias);
        add_assign(&mut self.fusion.manifold_scale, &other.fusion.manifold_scale);
        add_assign(&mut self.fusion.attention_weights, &other.fusion.attention_weights);
        self.fusion.global_bias += other.fusion.global_bias;
    }

    /// Multiplies every entry by `k`.
    pub fn scale(&mut self, k: f64) {
        for table in self.user_rows.iter_mut().chain(self.ad_rows.iter_mut()) {
            for g in table.values_mut() {
                g.iter_mut().for_each(|v| *v *= k);
            }
        }
        let f = &mut self.fusion;
        for v in f
            .manifold_bias
            .iter_mut()
            .chain(f.manifold_scale.iter_mut())
            .chain(f.attention_weights.iter_mut())
        {
            *v *= k;
        }
        f.global_bias *= k;
    }
}

fn accumulate(map: &mut BTreeMap<usize, Vec<f64>>, idx: usize, g: &[f64], k: f64) {
    let slot = map.entry(idx).or_insert_with(|| vec![0.0; g.len()]);
    slot.iter_mut().zip(g).for_each(|(s, v)| *s += k * v);
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Parameters of the multi-manifold scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub user_tables: Vec<EmbeddingTable>,
    pub ad_tables: Vec<EmbeddingTable>,
    pub fusion: FusionParams,
}

/// Draws initial tables and neutral fusion parameters. Ball rows are uniform
/// in the ball of radius `init_scale`; Euclidean rows are Gaussian with that
/// standard deviation.
pub fn init_embeddings(cfg: &ModelConfig, num_users: usize, num_ads: usize) -> Result<Model> {
    cfg.validate()?;
    if num_users == 0 {
        return Err(Error::config("num_users", "must be >= 1"));
    }
    if num_ads == 0 {
        return Err(Error::config("num_ads", "must be >= 1"));
    }
    let mut rng = seeds::rng(cfg.seed, seeds::INIT);
    let mut draw_table = |spec: ManifoldSpec, kind: EntityKind, n: usize| -> Result<EmbeddingTable> {
        let dim = spec.dim();
        let mut rows = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if spec.is_hyperbolic() {
                let gn = norm(&g).max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                let r = cfg.init_scale * u.powf(1.0 / dim as f64);
                rows.extend(g.iter().map(|v| v / gn * r));
            } else {
                rows.extend(g.iter().map(|v| v * cfg.init_scale));
            }
        }
        EmbeddingTable::from_rows(spec, kind, rows)
    };
    let mut user_tables = Vec::with_capacity(cfg.manifolds.len());
    let mut ad_tables = Vec::with_capacity(cfg.manifolds.len());
    for spec in &cfg.manifolds {
        user_tables.push(draw_table(*spec, EntityKind::User, num_users)?);
        ad_tables.push(draw_table(*spec, EntityKind::Ad, num_ads)?);
    }
    Ok(Model {
        config: cfg.clone(),
        user_tables,
        ad_tables,
        fusion: FusionParams::neutral(cfg.manifolds.len()),
    })
}

impl Model {
    pub fn num_manifolds(&self) -> usize {
        self.config.manifolds.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_tables[0].len()
    }

    pub fn num_ads(&self) -> usize {
        self.ad_tables[0].len()
    }

    /// Structural consistency of tables and fusion parameters with the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.fusion.validate()?;
        let m = self.num_manifolds();
        if self.user_tables.len() != m || self.ad_tables.len() != m || self.fusion.num_manifolds() != m {
            return Err(Error::domain("table count does not match the manifold list"));
        }
        for (i, spec) in self.config.manifolds.iter().enumerate() {
            for t in [&self.user_tables[i], &self.ad_tables[i]] {
                if t.spec() != spec {
                    return Err(Error::SpecMismatch {
                        left: t.spec().to_string(),
                        right: spec.to_string(),
                    });
                }
            }
            if self.user_tables[i].len() != self.num_users() || self.ad_tables[i].len() != self.num_ads() {
                return Err(Error::domain("tables disagree on entity counts"));
            }
        }
        Ok(())
    }

    fn check_ids(&self, user: usize, ad: usize) -> Result<()> {
        if user >= self.num_users() {
            return Err(Error::UnknownEntity {
                kind: "user",
                id: user.to_string(),
            });
        }
        if ad >= self.num_ads() {
            return Err(Error::UnknownEntity {
                kind: "ad",
                id: ad.to_string(),
            });
        }
        Ok(())
    }

    pub fn scores(&self, user: usize, ad: usize) -> Result<Vec<f64>> {
        self.check_ids(user, ad)?;
        (0..self.num_manifolds())
            .map(|m| {
                let spec = &self.config.manifolds[m];
                let d = spec.distance(self.user_tables[m].row(user), self.ad_tables[m].row(ad))?;
                Ok(-self.fusion.manifold_scale[m] * d + self.fusion.manifold_bias[m])
            })
            .collect()
    }

    pub fn logit(&self, user: usize, ad: usize) -> Result<f64> {
        Ok(fuse(&self.scores(user, ad)?, &self.fusion)?.logit)
    }

    /// Click probability `σ(logit)` for a (user index, ad index) pair.
    pub fn predict(&self, user: usize, ad: usize) -> Result<f64> {
        Ok(sigmoid(self.logit(user, ad)?))
    }

    /// Mean BCE over `batch`, computed through the forward path only.
    pub fn batch_loss(&self, batch: &[LabeledPair]) -> Result<f64> {
        let probs = batch
            .iter()
            .map(|p| self.predict(p.user, p.ad))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<u8> = batch.iter().map(|p| p.label).collect();
        bce_loss(&probs, &labels)
    }

    /// Mean BCE over `batch` and its gradients with respect to every touched
    /// row and every fusion parameter.
    ///
    /// The logit gradient is `p − y` (the derivative of BCE written in logit
    /// form); the probability clamp only affects the reported loss.
    pub fn backward(&self, batch: &[LabeledPair]) -> Result<(f64, Gradients)> {
        let (loss_sum, mut grads) = self.backward_sum(batch)?;
        let n = batch.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok((loss_sum / n, grads))
    }

    /// Summed (not averaged) loss and gradients over `batch`.
    pub(crate) fn backward_sum(&self, batch: &[LabeledPair]) -> Result<(f64, Gradients)> {
        let m = self.num_manifolds();
        let mut grads = Gradients::zeros(m);
        let mut loss_sum = 0.0;
        let mut dist = vec![0.0; m];
        let mut s = vec![0.0; m];
        let mut gu: Vec<Vec<f64>> = vec![Vec::new(); m];
        let mut ga: Vec<Vec<f64>> = vec![Vec::new(); m];
        for pair in batch {
            self.check_ids(pair.user, pair.ad)?;
            for k in 0..m {
                let spec = &self.config.manifolds[k];
                let (d, gx, gy) =
                    spec.distance_with_grad(self.user_tables[k].row(pair.user), self.ad_tables[k].row(pair.ad))?;
                dist[k] = d;
                s[k] = -self.fusion.manifold_scale[k] * d + self.fusion.manifold_bias[k];
                gu[k] = gx;
                ga[k] = gy;
            }
            let w = &self.fusion.attention_weights;
            let alpha = softmax(&attention_logits(&s, w));
            let mean_s: f64 = alpha.iter().zip(&s).map(|(a, v)| a * v).sum();
            let logit = mean_s + self.fusion.global_bias;
            let p = sigmoid(logit);
            loss_sum += bce_term(p, pair.label);

            let g = p - f64::from(pair.label);
            let f = &mut grads.fusion;
            f.global_bias += g;
            // ∂logit/∂z_j for attention logits z = W s
            let q: Vec<f64> = (0..m).map(|j| alpha[j] * (s[j] - mean_s)).collect();
            for (row, qj) in f.attention_weights.chunks_mut(m).zip(&q) {
                for (wjk, sk) in row.iter_mut().zip(&s) {
                    *wjk += g * qj * sk;
                }
            }
            for k in 0..m {
                let r = alpha[k] + (0..m).map(|j| w[j * m + k] * q[j]).sum::<f64>();
                let gs = g * r;
                f.manifold_bias[k] += gs;
                f.manifold_scale[k] -= gs * dist[k];
                let coef = -gs * self.fusion.manifold_scale[k];
                accumulate(&mut grads.user_rows[k], pair.user, &gu[k], coef);
                accumulate(&mut grads.ad_rows[k], pair.ad, &ga[k], coef);
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::domain("non-finite loss"));
        }
        Ok((loss_sum, grads))
    }

    /// Applies one optimizer step: rows move by RSGD (or the tangent-origin
    /// chart), fusion parameters by plain SGD with `β` clamped at [`MIN_SCALE`].
    pub fn apply_gradients(&mut self, grads: &Gradients, cfg: &OptimizerConfig) -> Result<()> {
        let mode = self.config.update_mode;
        for (tables, rows) in [
            (&mut self.user_tables, &grads.user_rows),
            (&mut self.ad_tables, &grads.ad_rows),
        ] {
            for (table, row_grads) in tables.iter_mut().zip(rows) {
                let spec = *table.spec();
                for (&idx, g) in row_grads {
                    let x = table.row(idx);
                    let next = match mode {
                        UpdateMode::Riemannian => rsgd_step_slice(&spec, x, g, cfg)?,
                        UpdateMode::TangentOrigin => tangent_origin_step_slice(&spec, x, g, cfg)?,
                    };
                    table.set_row(idx, &next)?;
                }
            }
        }
        let lr = cfg.learning_rate;
        let fp = &mut self.fusion;
        let fg = &grads.fusion;
        let mut next = fp.clone();
        for (p, g) in next.manifold_bias.iter_mut().zip(&fg.manifold_bias) {
            *p -= lr * g;
        }
        for (p, g) in next.manifold_scale.iter_mut().zip(&fg.manifold_scale) {
            *p = (*p - lr * g).max(MIN_SCALE);
        }
        for (p, g) in next.attention_weights.iter_mut().zip(&fg.attention_weights) {
            *p -= lr * g;
        }
        next.global_bias -= lr * fg.global_bias;
        next.validate()?;
        *fp = next;
        Ok(())
    }
}
