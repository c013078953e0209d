//! Mini-batch training and held-out evaluation.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::data::{build_vocab, sample_negative_pairs, InteractionRecord, Vocab};
use crate::error::{Error, Result};
use crate::metrics::{auc, logloss, Metrics};
use crate::model::{init_embeddings, Gradients, LabeledPair, Model, ModelConfig};
use crate::optim::OptimizerConfig;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn new(model: ModelConfig, optimizer: OptimizerConfig) -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            optimizer,
            model,
            eval_every: 1,
            deterministic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        self.optimizer.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch, measured before each batch update.
    pub loss: f64,
    pub metrics: Option<Metrics>,
}

impl fmt::Display for EpochReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6}", self.epoch, self.loss)?;
        if let Some(m) = &self.metrics {
            write!(f, " {m}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub epochs: Vec<EpochReport>,
}

/// Training loop. Labeled records are augmented every epoch with freshly
/// sampled negatives, shuffled with a seed of `seed + epoch`, and consumed in
/// mini-batches of mean BCE.
///
/// With `deterministic = true` each batch gradient is accumulated in batch
/// order on one thread, so results are bit-identical for any thread count.
/// Otherwise batches are split across the thread pool and partial gradients
/// summed, which is reproducible only for a fixed thread count.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    eval_records: Option<&'a [InteractionRecord]>,
    threads: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig) -> Self {
        Self {
            cfg,
            eval_records: None,
            threads: 1,
        }
    }

    /// Records used for periodic metrics; the training records are used when unset.
    pub fn with_eval(mut self, records: &'a [InteractionRecord]) -> Self {
        self.eval_records = Some(records);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// The untrained checkpoint `run` starts from.
    pub fn initial_checkpoint(&self, records: &[InteractionRecord]) -> Result<ModelCheckpoint> {
        self.cfg.validate()?;
        if records.is_empty() {
            return Err(Error::config("data", "no training records"));
        }
        let vocab = build_vocab(records);
        let model = init_embeddings(&self.cfg.model, vocab.num_users(), vocab.num_ads())?;
        ModelCheckpoint::new(model, vocab, Some(self.cfg.clone()))
    }

    pub fn run<F>(&self, records: &[InteractionRecord], mut on_epoch: F) -> Result<TrainOutcome>
    where
        F: FnMut(&EpochReport),
    {
        let ModelCheckpoint { mut model, vocab, .. } = self.initial_checkpoint(records)?;
        let pairs: Vec<LabeledPair> = records
            .iter()
            .map(|r| vocab.encode(r).expect("vocabulary built from these records"))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::domain(e.to_string()))?;
        let cfg = &self.cfg;
        let seed = cfg.model.seed;
        let mut reports = Vec::with_capacity(cfg.epochs);
        let positives = pairs.iter().filter(|p| p.label == 1).count();
        let per_epoch = (pairs.len() + positives * cfg.model.negatives_per_positive).div_ceil(cfg.batch_size);
        let total_steps = per_epoch * cfg.epochs;
        let mut step = 0;
        for epoch in 0..cfg.epochs {
            let mut rng = seeds::epoch_rng(seed, epoch, seeds::SAMPLING);
            let mut batch_pairs =
                sample_negative_pairs(&pairs, vocab.num_ads(), cfg.model.negatives_per_positive, &mut rng)?;
            batch_pairs.shuffle(&mut seeds::epoch_rng(seed, epoch, seeds::SHUFFLE));

            let mut loss_sum = 0.0;
            for (b, batch) in batch_pairs.chunks(cfg.batch_size).enumerate() {
                let (batch_loss, mut grads) = if cfg.deterministic || self.threads == 1 {
                    model.backward_sum(batch)
                } else {
                    pool.install(|| parallel_backward(&model, batch, self.threads))
                }
                .map_err(|e| match e {
                    Error::Domain(_) => Error::NonFiniteLoss { epoch: epoch + 1, batch: b },
                    other => other,
                })?;
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b });
                }
                loss_sum += batch_loss;
                grads.scale(1.0 / batch.len() as f64);
                model.apply_gradients(&grads, &cfg.optimizer.at_step(step, total_steps))?;
                step += 1;
            }

            let metrics = if (epoch + 1) % cfg.eval_every == 0 {
                let eval = self.eval_records.unwrap_or(records);
                Some(pool.install(|| evaluate_model(&model, &vocab, eval))?)
            } else {
                None
            };
            let report = EpochReport {
                epoch: epoch + 1,
                loss: loss_sum / batch_pairs.len() as f64,
                metrics,
            };
            on_epoch(&report);
            reports.push(report);
        }
        Ok(TrainOutcome {
            checkpoint: ModelCheckpoint::new(model, vocab, Some(cfg.clone()))?,
            epochs: reports,
        })
    }
}

pub fn train(cfg: &TrainConfig, records: &[InteractionRecord]) -> Result<TrainOutcome> {
    Trainer::new(cfg.clone()).run(records, |_| {})
}

fn parallel_backward(model: &Model, batch: &[LabeledPair], threads: usize) -> Result<(f64, Gradients)> {
    let chunk = batch.len().div_ceil(threads).max(1);
    batch
        .par_chunks(chunk)
        .map(|c| model.backward_sum(c))
        .try_reduce(
            || (0.0, Gradients::zeros(model.num_manifolds())),
            |(la, mut ga), (lb, gb)| {
                ga.merge(gb);
                Ok((la + lb, ga))
            },
        )
}

fn evaluate_model(model: &Model, vocab: &Vocab, records: &[InteractionRecord]) -> Result<Metrics> {
    let pairs: Vec<LabeledPair> = records.iter().filter_map(|r| vocab.encode(r)).collect();
    let num_skipped = records.len() - pairs.len();
    let num_eval = pairs.len();
    let probs = pairs
        .par_iter()
        .map(|p| model.predict(p.user, p.ad))
        .collect::<Result<Vec<f64>>>()?;
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let auc = auc(&probs, &labels).map_err(|e| match e {
        Error::DegenerateLabels { .. } => Error::DegenerateLabels { num_eval },
        other => other,
    })?;
    Ok(Metrics {
        auc,
        logloss: logloss(&probs, &labels)?,
        num_eval,
        num_skipped,
    })
}

/// Scores `records` with the checkpoint. Unknown users or ads are skipped
/// and counted; an evaluation set without both classes is an error.
pub fn evaluate(ckpt: &ModelCheckpoint, records: &[InteractionRecord]) -> Result<Metrics> {
    evaluate_model(&ckpt.model, &ckpt.vocab, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldSpec;

    fn tiny() -> Vec<InteractionRecord> {
        vec![
            InteractionRecord::new("u1", "a1", 1),
            InteractionRecord::new("u1", "a2", 0),
            InteractionRecord::new("u2", "a2", 1),
            InteractionRecord::new("u2", "a1", 0),
        ]
    }

    fn cfg() -> TrainConfig {
        let model = ModelConfig::new(vec![ManifoldSpec::poincare(2, 1.0).unwrap()]);
        TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::new(model, OptimizerConfig::default())
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut c = cfg();
        c.epochs = 0;
        assert!(matches!(train(&c, &tiny()), Err(Error::Config { .. })));
        assert!(train(&cfg(), &[]).is_err());
    }

    #[test]
    fn epoch_lines() {
        let out = train(&cfg(), &tiny()).unwrap();
        assert_eq!(out.epochs.len(), 3);
        let line = out.epochs[0].to_string();
        assert!(line.starts_with("epoch=1 loss="), "{line}");
        assert!(line.contains(" auc=") && line.contains(" logloss="), "{line}");
    }

    #[test]
    fn eval_every_skips_metrics() {
        let mut c = cfg();
        c.eval_every = 2;
        let out = train(&c, &tiny()).unwrap();
        assert!(out.epochs[0].metrics.is_none());
        assert!(out.epochs[1].metrics.is_some());
    }

    #[test]
    fn constant_model_metrics() {
        let trainer = Trainer::new(cfg());
        let mut ck = trainer.initial_checkpoint(&tiny()).unwrap();
        for t in ck.model.user_tables.iter_mut().chain(ck.model.ad_tables.iter_mut()) {
            for i in 0..t.len() {
                t.set_row(i, &[0.0, 0.0]).unwrap();
            }
        }
        let m = evaluate(&ck, &tiny()).unwrap();
        assert_eq!(m.auc, 0.5);
        assert!((m.logloss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unknown_entities_skipped_or_rejected() {
        let ck = Trainer::new(cfg()).initial_checkpoint(&tiny()).unwrap();
        let mut recs = tiny();
        recs.push(InteractionRecord::new("ghost", "a1", 1));
        assert_eq!(evaluate(&ck, &recs).unwrap().num_skipped, 1);
        let ghosts = vec![InteractionRecord::new("g1", "a1", 1), InteractionRecord::new("g2", "a9", 0)];
        assert!(matches!(evaluate(&ck, &ghosts), Err(Error::DegenerateLabels { num_eval: 0 })));
    }
}
