//! JSON checkpoint persistence.
//!
//! ```text
//! {
//!   "version": "1",
//!   "model_config": { ... },
//!   "manifolds": [ {"kind": "poincare_ball", "dim": 8, "curvature": 1.0}, ... ],
//!   "vocab": { "users": [...], "ads": [...] },
//!   "user_tables": [ [row-major numbers], ... ],   // one per manifold
//!   "ad_tables":   [ [row-major numbers], ... ],
//!   "fusion": { "manifold_bias": [...], "manifold_scale": [...],
//!               "attention_weights": [...], "global_bias": 0.0 },
//!   "train_config": { ... } | null
//! }
//! ```
//!
//! Parameters are stored as `f64` and written with the shortest decimal
//! representation that parses back to the same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::geometry::ManifoldSpec;
use crate::model::{sigmoid, EmbeddingTable, EntityKind, FusionParams, Model, ModelConfig};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_VERSION: &str = "1";

/// A trained model together with the vocabularies that map ids to rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub vocab: Vocab,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    version: String,
    model_config: ModelConfig,
    manifolds: Vec<ManifoldSpec>,
    vocab: Vocab,
    user_tables: Vec<Vec<f64>>,
    ad_tables: Vec<Vec<f64>>,
    fusion: FusionParams,
    #[serde(default)]
    train_config: Option<TrainConfig>,
}

fn format_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        field: field.into(),
        message: message.into(),
    }
}

impl ModelCheckpoint {
    pub fn new(model: Model, vocab: Vocab, train_config: Option<TrainConfig>) -> Result<Self> {
        model.validate()?;
        if vocab.num_users() != model.num_users() || vocab.num_ads() != model.num_ads() {
            return Err(Error::domain("vocabulary size does not match the tables"));
        }
        Ok(Self {
            model,
            vocab,
            train_config,
        })
    }

    /// Click probability for a pair of external ids.
    pub fn predict_ctr(&self, user_id: &str, ad_id: &str) -> Result<f64> {
        let u = self.vocab.require_user(user_id)?;
        let a = self.vocab.require_ad(ad_id)?;
        Ok(sigmoid(self.model.logit(u, a)?))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION.to_string(),
            model_config: self.model.config.clone(),
            manifolds: self.model.config.manifolds.clone(),
            vocab: self.vocab.clone(),
            user_tables: self.model.user_tables.iter().map(|t| t.as_slice().to_vec()).collect(),
            ad_tables: self.model.ad_tables.iter().map(|t| t.as_slice().to_vec()).collect(),
            fusion: self.model.fusion.clone(),
            train_config: self.train_config.clone(),
        };
        serde_json::to_string(&doc).map_err(|e| format_err("<root>", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format_err("<root>", e.to_string()))?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == CHECKPOINT_VERSION => {}
            Some(serde_json::Value::String(v)) => return Err(Error::Version(v.clone())),
            Some(serde_json::Value::Number(n)) => return Err(Error::Version(n.to_string())),
            Some(_) => return Err(format_err("version", "must be a string")),
            None => return Err(format_err("version", "missing field")),
        }
        let doc: CheckpointDoc = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            format_err(path, e.into_inner().to_string())
        })?;
        if doc.manifolds != doc.model_config.manifolds {
            return Err(format_err("manifolds", "disagrees with model_config.manifolds"));
        }
        let m = doc.manifolds.len();
        if doc.user_tables.len() != m {
            return Err(format_err("user_tables", format!("expected {m} tables")));
        }
        if doc.ad_tables.len() != m {
            return Err(format_err("ad_tables", format!("expected {m} tables")));
        }
        let build = |name: &str, rows: Vec<Vec<f64>>, kind: EntityKind, count: usize| {
            rows.into_iter()
                .zip(&doc.manifolds)
                .enumerate()
                .map(|(i, (r, spec))| {
                    if r.len() != count * spec.dim() {
                        return Err(format_err(
                            format!("{name}[{i}]"),
                            format!("expected {} values", count * spec.dim()),
                        ));
                    }
                    EmbeddingTable::from_rows(*spec, kind, r)
                        .map_err(|e| format_err(format!("{name}[{i}]"), e.to_string()))
                })
                .collect::<Result<Vec<_>>>()
        };
        let user_tables = build("user_tables", doc.user_tables, EntityKind::User, doc.vocab.num_users())?;
        let ad_tables = build("ad_tables", doc.ad_tables, EntityKind::Ad, doc.vocab.num_ads())?;
        let model = Model {
            config: doc.model_config,
            user_tables,
            ad_tables,
            fusion: doc.fusion,
        };
        model.validate().map_err(|e| format_err("<model>", e.to_string()))?;
        Ok(Self {
            model,
            vocab: doc.vocab,
            train_config: doc.train_config,
        })
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_embeddings;

    fn sample() -> ModelCheckpoint {
        let cfg = ModelConfig::new(vec![
            ManifoldSpec::poincare(3, 1.0).unwrap(),
            ManifoldSpec::euclidean(2).unwrap(),
        ]);
        let model = init_embeddings(&cfg, 2, 3).unwrap();
        let vocab = Vocab::from_ids(
            vec!["u1".into(), "u2".into()],
            vec!["a1".into(), "a2".into(), "a3".into()],
        )
        .unwrap();
        ModelCheckpoint::new(model, vocab, None).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = ModelCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.predict_ctr("u2", "a3").unwrap(), ck.predict_ctr("u2", "a3").unwrap());
    }

    #[test]
    fn truncated_is_format_error() {
        let json = sample().to_json().unwrap();
        let cut = &json[..json.len() / 2];
        assert!(matches!(ModelCheckpoint::from_json(cut), Err(Error::Format { .. })));
    }

    #[test]
    fn unknown_version_rejected() {
        let json = sample().to_json().unwrap().replacen("\"version\":\"1\"", "\"version\":\"999\"", 1);
        match ModelCheckpoint::from_json(&json) {
            Err(Error::Version(v)) => assert_eq!(v, "999"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn bad_field_reports_path() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json().unwrap()).unwrap();
        v["fusion"]["global_bias"] = serde_json::Value::String("x".into());
        match ModelCheckpoint::from_json(&v.to_string()) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "fusion.global_bias"),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json().unwrap()).unwrap();
        v["user_tables"][0] = serde_json::json!([2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        match ModelCheckpoint::from_json(&v.to_string()) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "user_tables[0]"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_ids() {
        let ck = sample();
        assert!(matches!(ck.predict_ctr("nobody", "a1"), Err(Error::UnknownEntity { kind: "user", .. })));
        assert!(matches!(ck.predict_ctr("u1", "zz"), Err(Error::UnknownEntity { kind: "ad", .. })));
    }
}
