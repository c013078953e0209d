use std::time::{Duration, Instant};

use mmctr_core::data::{parse_interactions, write_interactions};
use mmctr_core::metrics::auc;
use mmctr_core::model::{fuse, init_embeddings};
use mmctr_core::serving::{batch_topk, topk};
use mmctr_core::{
    InteractionRecord, ManifoldSpec, ModelCheckpoint, ModelConfig, SyntheticTreeSpec, Vocab,
};
use proptest::prelude::*;

fn ball_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_map(move |v| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.9 {
            v.iter().map(|x| x * 0.9 / n).collect()
        } else {
            v
        }
    })
}

fn checkpoint(num_users: usize, num_ads: usize, seed: u64) -> ModelCheckpoint {
    let cfg = ModelConfig {
        seed,
        init_scale: 0.1,
        ..ModelConfig::new(vec![ManifoldSpec::euclidean(3).unwrap(), ManifoldSpec::poincare(3, 1.0).unwrap()])
    };
    let model = init_embeddings(&cfg, num_users, num_ads).unwrap();
    let vocab = Vocab::from_ids(
        (0..num_users).map(|i| format!("u{i}")).collect(),
        (0..num_ads).map(|i| format!("a{i}")).collect(),
    )
    .unwrap();
    ModelCheckpoint::new(model, vocab, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric(x in ball_point(4), y in ball_point(4), c in 0.1f64..2.0) {
        let spec = ManifoldSpec::poincare(4, c).unwrap();
        let r = spec.radius();
        let x: Vec<f64> = x.iter().map(|v| v * r).collect();
        let y: Vec<f64> = y.iter().map(|v| v * r).collect();
        let d1 = spec.distance(&x, &y).unwrap();
        let d2 = spec.distance(&y, &x).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12 * (1.0 + d1));
    }

    #[test]
    fn attention_is_a_distribution(
        s in prop::collection::vec(-50.0f64..50.0, 3),
        w in prop::collection::vec(-3.0f64..3.0, 9),
    ) {
        let mut fp = mmctr_core::FusionParams::neutral(3);
        fp.attention_weights = w;
        let fused = fuse(&s, &fp).unwrap();
        prop_assert!(fused.alpha.iter().all(|a| *a >= 0.0));
        prop_assert!((fused.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(fused.logit.is_finite());
    }

    #[test]
    fn auc_is_rank_invariant(
        pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..60),
    ) {
        let labels: Vec<u8> = pairs.iter().map(|p| u8::from(p.1)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let raw: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let squashed: Vec<f64> = raw.iter().map(|v| (v / 3.0).tanh()).collect();
        prop_assert_eq!(auc(&raw, &labels).unwrap(), auc(&squashed, &labels).unwrap());
    }

    #[test]
    fn interactions_round_trip(
        rows in prop::collection::vec(("[a-z][a-z0-9_]{0,6}", "[a-z][a-z0-9_]{0,6}", 0u8..2, prop::option::of(0i64..1_000_000)), 1..30),
    ) {
        let with_ts = rows[0].3.is_some();
        let records: Vec<InteractionRecord> = rows
            .into_iter()
            .map(|(u, a, l, ts)| InteractionRecord {
                timestamp: if with_ts { Some(ts.unwrap_or(0)) } else { None },
                ..InteractionRecord::new(u, a, l)
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_interactions(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(parse_interactions(&text, &path).unwrap(), records);
    }

    #[test]
    fn topk_prefixes_agree(num_ads in 1usize..200, seed in any::<u64>(), k in 1usize..50) {
        let ckpt = checkpoint(2, num_ads, seed);
        let small = topk(&ckpt, "u1", k).unwrap();
        let large = topk(&ckpt, "u1", k + 7).unwrap();
        prop_assert_eq!(small.ads.len(), k.min(num_ads));
        prop_assert_eq!(&large.ads[..small.ads.len()], &small.ads[..]);
    }
}

#[test]
fn checkpoint_survives_json() {
    let ckpt = checkpoint(3, 5, 9);
    let back = ModelCheckpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.to_json().unwrap(), ckpt.to_json().unwrap());
}

#[test]
fn batch_topk_on_synthetic_catalog_is_fast() {
    let spec = SyntheticTreeSpec::default();
    let num_ads = spec.num_nodes();
    assert_eq!(num_ads, 1093);
    let ckpt = checkpoint(1000, num_ads, 5);
    let users: Vec<String> = (0..1000).map(|i| format!("u{i}")).collect();
    let start = Instant::now();
    let ranked = batch_topk(&ckpt, &users, 10).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(ranked.len(), 1000);
    assert!(ranked.iter().all(|r| r.ads.len() == 10));
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
}
