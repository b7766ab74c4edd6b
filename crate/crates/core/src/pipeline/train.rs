//! Seeded minibatch training with Adam, learning-rate decay and best-validation selection.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::ingest::Dataset;
use super::instances::{build_instances, item_train_degrees};
use super::split::{timeline_split, Split};
use crate::error::{Error, Result};
use crate::eval::{auc, ScoredSet};
use crate::features::{EncodedInstance, FeatureSchema};
use crate::model::{batch_loss_and_gradient, PigatParams};
use crate::numeric::AdamState;

/// Independent random streams expanded from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub const METRICS_HEADER: &str = "epoch\ttrain_loss\tval_auc\tlr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split lacks a class.
    pub val_auc: Option<f64>,
    pub learning_rate: f64,
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let val = self.val_auc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.8}"));
        write!(f, "{}\t{:.8}\t{}\t{}", self.epoch, self.train_loss, val, self.learning_rate)
    }
}

/// A dataset encoded for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    /// One per record, in record order.
    pub instances: Vec<EncodedInstance>,
    /// Training-period degree of each record's item.
    pub degrees: Vec<usize>,
}

impl Prepared {
    pub fn new(dataset: Dataset, config: &TrainConfig) -> Result<Self> {
        let dataset = dataset.with_widths(config.embed_user, config.embed_item);
        let split = timeline_split(dataset.len())?;
        let instances = build_instances(
            &dataset,
            &split,
            config.graph_mode,
            config.max_neighbors,
            config.negative_neighbors,
        )?;
        let degrees = item_train_degrees(&dataset, &split)?;
        Ok(Prepared {
            dataset,
            split,
            instances,
            degrees,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.dataset.schema
    }

    pub fn train(&self) -> &[EncodedInstance] {
        &self.instances[self.split.train.clone()]
    }

    pub fn val(&self) -> &[EncodedInstance] {
        &self.instances[self.split.val.clone()]
    }

    pub fn test(&self) -> &[EncodedInstance] {
        &self.instances[self.split.test.clone()]
    }

    /// Eval-mode scores over `range` of the records.
    pub fn scored(&self, params: &PigatParams, range: std::ops::Range<usize>) -> Result<ScoredSet> {
        let scores = predict_all(params, &self.instances[range.clone()])?;
        let labels = self.instances[range.clone()].iter().map(|i| i.label).collect();
        ScoredSet::new(scores, labels, self.degrees[range].to_vec())
    }
}

pub fn predict_all(params: &PigatParams, instances: &[EncodedInstance]) -> Result<Vec<f64>> {
    instances.iter().map(|i| params.predict(i)).collect()
}

/// Optimiser state plus the random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: PigatParams,
    grads: PigatParams,
    adam: AdamState,
    shuffle: ChaCha8Rng,
    dropout: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(schema: &FeatureSchema, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = PigatParams::new(schema, config.model_config(), &mut stream_rng(config.seed, Stream::Init))?;
        Ok(Self::from_params(params, config))
    }

    pub fn from_params(params: PigatParams, config: &TrainConfig) -> Self {
        let grads = params.zeros_like();
        let adam = AdamState::new(config.adam_config(), &params.trainable_shapes());
        Trainer {
            config: config.clone(),
            params,
            grads,
            adam,
            shuffle: stream_rng(config.seed, Stream::Shuffle),
            dropout: stream_rng(config.seed, Stream::Dropout),
            epochs_done: 0,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate_at(self.epochs_done)
    }

    /// One shuffled pass over `train`; returns the mean per-instance loss.
    pub fn train_epoch(&mut self, train: &[EncodedInstance]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Data("no training instances".into()));
        }
        let lr = self.learning_rate();
        self.adam.set_learning_rate(lr);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.shuffle);

        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&EncodedInstance> = chunk.iter().map(|&i| &train[i]).collect();
            self.grads.zero();
            let seed = self.dropout.gen::<u64>();
            let loss = batch_loss_and_gradient(&self.params, &batch, seed, &mut self.grads)?;
            if !loss.is_finite() {
                return Err(self.non_finite(b));
            }
            total += loss * batch.len() as f64;
            let grads = self.grads.trainable();
            self.adam.step(&mut self.params.trainable_mut(), &grads)?;
            self.params.pin_padding();
            self.params.bump_version();
            if !self.params.is_finite() {
                return Err(self.non_finite(b));
            }
        }
        self.epochs_done += 1;
        Ok(total / train.len() as f64)
    }

    fn non_finite(&self, batch: usize) -> Error {
        Error::NonFinite {
            epoch: self.epochs_done + 1,
            batch,
            norms: self.params.norm_report(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation AUC (the last epoch if none is defined).
    pub best: PigatParams,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn metrics_text(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for m in &self.log {
            out.push_str(&format!("{m}\n"));
        }
        out
    }
}

pub fn train(config: &TrainConfig, prepared: &Prepared) -> Result<TrainOutcome> {
    train_with(config, prepared, |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch.
pub fn train_with<F: FnMut(&EpochMetrics)>(config: &TrainConfig, prepared: &Prepared, mut on_epoch: F) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(prepared.schema(), config)?;
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, PigatParams)> = None;
    for _ in 0..config.epochs {
        let learning_rate = trainer.learning_rate();
        let train_loss = trainer.train_epoch(prepared.train())?;
        let val_auc = auc(&prepared.scored(&trainer.params, prepared.split.val.clone())?).ok();
        let m = EpochMetrics {
            epoch: trainer.epochs_done(),
            train_loss,
            val_auc,
            learning_rate,
        };
        if let Some(v) = val_auc {
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, m.epoch, trainer.params.clone()));
            }
        }
        on_epoch(&m);
        log.push(m);
    }
    let (best_epoch, best) = match best {
        Some((_, e, p)) => (e, p),
        None => (trainer.epochs_done(), trainer.params),
    };
    Ok(TrainOutcome { best, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ingest::{infer_schema, ingest_raw, parse_interactions, SignalKind};
    use std::fmt::Write as _;
    use std::path::Path;

    fn dataset() -> Dataset {
        let mut text = String::new();
        for t in 0..200 {
            let u = t % 7;
            let i = (t * 3) % 11;
            let _ = writeln!(text, "{t}\tuser_id=u{u}\titem_id=i{i};cat=c{}\t{}", i % 2, u8::from((u + i) % 2 == 0));
        }
        let raw = parse_interactions(&text, Path::new("t")).unwrap();
        let schema = infer_schema(&raw, 4, 4).unwrap();
        ingest_raw(raw, schema, SignalKind::Auto).unwrap()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 32,
            hidden: 8,
            embed_user: 4,
            embed_item: 4,
            max_neighbors: 4,
            learning_rate: 5e-3,
            dropout: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_log() {
        let c = config();
        let p = Prepared::new(dataset(), &c).unwrap();
        let a = train(&c, &p).unwrap();
        let b = train(&c, &p).unwrap();
        assert_eq!(a.metrics_text(), b.metrics_text());
        assert_eq!(a.best.named_tensors(), b.best.named_tensors());
    }

    #[test]
    fn different_seed_differs() {
        let c = config();
        let p = Prepared::new(dataset(), &c).unwrap();
        let a = train(&c, &p).unwrap();
        let b = train(&TrainConfig { seed: 9, ..c.clone() }, &p).unwrap();
        assert_ne!(a.metrics_text(), b.metrics_text());
    }

    #[test]
    fn log_shape_and_decay() {
        let c = TrainConfig {
            decay_rate: 0.5,
            decay_every: 2,
            ..config()
        };
        let p = Prepared::new(dataset(), &c).unwrap();
        let out = train(&c, &p).unwrap();
        let text = out.metrics_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 4);
        let lrs: Vec<f64> = out.log.iter().map(|m| m.learning_rate).collect();
        assert_eq!(lrs, vec![5e-3, 5e-3, 2.5e-3]);
        assert!(out.best_epoch >= 1 && out.best_epoch <= 3);
    }

    #[test]
    fn loss_goes_down() {
        let c = TrainConfig { epochs: 4, ..config() };
        let p = Prepared::new(dataset(), &c).unwrap();
        let out = train(&c, &p).unwrap();
        assert!(out.log[3].train_loss < out.log[0].train_loss, "{:?}", out.log);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostics() {
        let c = config();
        let p = Prepared::new(dataset(), &c).unwrap();
        let mut t = Trainer::new(p.schema(), &c).unwrap();
        t.params.mlp.layers[2].bias.data_mut()[0] = f64::NAN;
        match t.train_epoch(p.train()) {
            Err(Error::NonFinite { epoch: 1, batch: 0, norms }) => assert!(norms.contains("mlp")),
            other => panic!("{other:?}"),
        }
    }
}
