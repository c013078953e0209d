use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mmctr_core::data::{generate_tree_dataset, split_train_test};
use mmctr_core::model::{init_embeddings, LabeledPair};
use mmctr_core::optim::rsgd_step_slice;
use mmctr_core::selftest::sample_in_ball;
use mmctr_core::seeds;
use mmctr_core::serving::{batch_topk, topk};
use mmctr_core::{
    ManifoldSpec, ModelCheckpoint, ModelConfig, OptimizerConfig, SyntheticTreeSpec, TrainConfig, Trainer, Vocab,
};

fn geometry(c: &mut Criterion) {
    let spec = ManifoldSpec::poincare(16, 1.0).unwrap();
    let mut rng = seeds::rng(1, "bench");
    let x = sample_in_ball(&mut rng, 16, 0.8);
    let y = sample_in_ball(&mut rng, 16, 0.8);
    let v = sample_in_ball(&mut rng, 16, 2.0);
    let cfg = OptimizerConfig::default();

    let mut g = c.benchmark_group("geometry_dim16");
    g.bench_function("mobius_add", |b| b.iter(|| spec.mobius_add(black_box(&x), black_box(&y)).unwrap()));
    g.bench_function("distance", |b| b.iter(|| spec.distance(black_box(&x), black_box(&y)).unwrap()));
    g.bench_function("distance_with_grad", |b| {
        b.iter(|| spec.distance_with_grad(black_box(&x), black_box(&y)).unwrap())
    });
    g.bench_function("exp_map", |b| b.iter(|| spec.exp_map(black_box(&x), black_box(&v)).unwrap()));
    g.bench_function("log_map", |b| b.iter(|| spec.log_map(black_box(&x), black_box(&y)).unwrap()));
    g.bench_function("rsgd_step", |b| b.iter(|| rsgd_step_slice(&spec, black_box(&x), black_box(&v), &cfg).unwrap()));
    g.finish();
}

fn mixed_config() -> ModelConfig {
    ModelConfig::new(vec![ManifoldSpec::euclidean(8).unwrap(), ManifoldSpec::poincare(8, 1.0).unwrap()])
}

fn backward(c: &mut Criterion) {
    let model = init_embeddings(&mixed_config(), 500, 1000).unwrap();
    let batch: Vec<LabeledPair> = (0..256)
        .map(|i| LabeledPair::new((i * 7919) % 500, (i * 104_729) % 1000, u8::from(i % 5 == 0)))
        .collect();
    let cfg = OptimizerConfig::default();
    c.bench_function("backward_batch256", |b| b.iter(|| model.backward(black_box(&batch)).unwrap()));
    c.bench_function("backward_and_apply_batch256", |b| {
        b.iter_batched(
            || model.clone(),
            |mut m| {
                let (_, grads) = m.backward(&batch).unwrap();
                m.apply_gradients(&grads, &cfg).unwrap();
                m
            },
            BatchSize::LargeInput,
        )
    });
}

fn training_epoch(c: &mut Criterion) {
    let spec = SyntheticTreeSpec {
        depth: 4,
        users_per_leaf: 5,
        ..Default::default()
    };
    let ds = generate_tree_dataset(&spec).unwrap();
    let (train, _) = split_train_test(&ds.records, 0.1, 42);
    let cfg = TrainConfig {
        epochs: 1,
        eval_every: 1,
        ..TrainConfig::new(mixed_config(), OptimizerConfig::default())
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("one_epoch_depth4", |b| b.iter(|| Trainer::new(cfg.clone()).run(&train, |_| {}).unwrap()));
    g.finish();
}

fn retrieval(c: &mut Criterion) {
    let num_ads = SyntheticTreeSpec::default().num_nodes();
    let model = init_embeddings(&mixed_config(), 1000, num_ads).unwrap();
    let vocab = Vocab::from_ids(
        (0..1000).map(|i| format!("u{i}")).collect(),
        (0..num_ads).map(|i| format!("ad{i}")).collect(),
    )
    .unwrap();
    let ckpt = ModelCheckpoint::new(model, vocab, None).unwrap();
    let users: Vec<String> = (0..1000).map(|i| format!("u{i}")).collect();

    let mut g = c.benchmark_group("topk_1093_ads");
    g.bench_function("single_user_k10", |b| b.iter(|| topk(&ckpt, black_box("u17"), 10).unwrap()));
    g.sample_size(10);
    g.bench_function("1000_users_k10", |b| b.iter(|| batch_topk(&ckpt, black_box(&users), 10).unwrap()));
    g.finish();
}

criterion_group!(benches, geometry, backward, training_epoch, retrieval);
criterion_main!(benches);
