use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::confidence::ConfidenceVariant;
use crate::error::{Error, Result};
use crate::model::{AttentionKind, ModelConfig, PoolingMode};
use crate::numeric::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphMode {
    /// Each instance sees the graph as it was just before the instance.
    Dynamic,
    /// Every instance sees the graph frozen at the end of the training period.
    Static,
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphMode::Dynamic => "dynamic",
            GraphMode::Static => "static",
        })
    }
}

impl FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(GraphMode::Dynamic),
            "static" => Ok(GraphMode::Static),
            other => Err(Error::Config(format!("unknown graph mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `decay_every` epochs.
    pub decay_rate: f64,
    pub decay_every: usize,
    pub l2: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub confidence: ConfidenceVariant,
    pub attention: AttentionKind,
    pub graph_mode: GraphMode,
    pub pooling: PoolingMode,
    pub max_neighbors: usize,
    pub embed_user: usize,
    pub embed_item: usize,
    pub hidden: usize,
    pub literal_eq3: bool,
    pub confidence_in_pooling: bool,
    /// Whether negatively labelled interactions enter the neighbour sequences.
    pub negative_neighbors: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            decay_rate: 1.0,
            decay_every: 1,
            l2: 1e-5,
            dropout: 0.0,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            confidence: ConfidenceVariant::Ce,
            attention: AttentionKind::Ffn3,
            graph_mode: GraphMode::Dynamic,
            pooling: PoolingMode::Attention,
            max_neighbors: 10,
            embed_user: 16,
            embed_item: 16,
            hidden: 64,
            literal_eq3: false,
            confidence_in_pooling: true,
            negative_neighbors: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

pub const CONFIG_KEYS: [&str; 22] = [
    "learning_rate",
    "decay_rate",
    "decay_every",
    "l2",
    "dropout",
    "batch_size",
    "epochs",
    "seed",
    "confidence",
    "attention",
    "graph_mode",
    "pooling",
    "max_neighbors",
    "embed_user",
    "embed_item",
    "hidden",
    "literal_eq3",
    "confidence_in_pooling",
    "negative_neighbors",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "decay_rate" => self.decay_rate = parse_value(key, value)?,
            "decay_every" => self.decay_every = parse_value(key, value)?,
            "l2" => self.l2 = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "confidence" => self.confidence = value.parse()?,
            "attention" => self.attention = value.parse()?,
            "graph_mode" => self.graph_mode = value.parse()?,
            "pooling" => self.pooling = value.parse()?,
            "max_neighbors" => self.max_neighbors = parse_value(key, value)?,
            "embed_user" => self.embed_user = parse_value(key, value)?,
            "embed_item" => self.embed_item = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "literal_eq3" => self.literal_eq3 = parse_value(key, value)?,
            "confidence_in_pooling" => self.confidence_in_pooling = parse_value(key, value)?,
            "negative_neighbors" => self.negative_neighbors = parse_value(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (key, value) in key_values(text)? {
            config.set(&key, &value)?;
        }
        config.validate()?;
        Ok(config)
    }

    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate must lie in (0, 1]");
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("decay_every, batch_size and epochs must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.max_neighbors == 0 || self.embed_user == 0 || self.embed_item == 0 || self.hidden == 0 {
            return bad("max_neighbors, embedding widths and hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "learning_rate" => self.learning_rate.to_string(),
            "decay_rate" => self.decay_rate.to_string(),
            "decay_every" => self.decay_every.to_string(),
            "l2" => self.l2.to_string(),
            "dropout" => self.dropout.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "confidence" => self.confidence.to_string(),
            "attention" => self.attention.to_string(),
            "graph_mode" => self.graph_mode.to_string(),
            "pooling" => self.pooling.to_string(),
            "max_neighbors" => self.max_neighbors.to_string(),
            "embed_user" => self.embed_user.to_string(),
            "embed_item" => self.embed_item.to_string(),
            "hidden" => self.hidden.to_string(),
            "literal_eq3" => self.literal_eq3.to_string(),
            "confidence_in_pooling" => self.confidence_in_pooling.to_string(),
            "negative_neighbors" => self.negative_neighbors.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "adam_epsilon" => self.adam_epsilon.to_string(),
            _ => String::new(),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            confidence: self.confidence,
            attention: self.attention,
            pooling: self.pooling,
            hidden: self.hidden,
            max_neighbors: self.max_neighbors,
            literal_eq3: self.literal_eq3,
            confidence_in_pooling: self.confidence_in_pooling,
            dropout: self.dropout,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            l2: self.l2,
        }
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_rate.powi((epoch / self.decay_every) as i32)
    }
}

/// `key = value` pairs of a plain-text config, with `#` comments and blank lines skipped.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`, got {line:?}", n + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let mut c = TrainConfig::default();
        c.set("confidence", "rce").unwrap();
        c.set("learning_rate", "5e-4").unwrap();
        let text = c.to_text();
        for key in CONFIG_KEYS {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
        assert_eq!(TrainConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn unknown_key_and_bad_values() {
        assert!(TrainConfig::parse("learnin_rate = 0.1").is_err());
        assert!(TrainConfig::parse("dropout = 1.0").is_err());
        assert!(TrainConfig::parse("attention = ffn-9").is_err());
        assert!(TrainConfig::parse("just words").is_err());
    }

    #[test]
    fn decay_schedule() {
        let mut c = TrainConfig::default();
        for e in 0..5 {
            assert_eq!(c.learning_rate_at(e), c.learning_rate);
        }
        c.decay_rate = 0.5;
        c.decay_every = 2;
        assert_eq!(c.learning_rate_at(1), 1e-3);
        assert_eq!(c.learning_rate_at(2), 5e-4);
        assert_eq!(c.learning_rate_at(5), 2.5e-4);
    }

    #[test]
    fn comments_are_ignored() {
        let c = TrainConfig::parse("# header\nepochs = 3 # short run\n\n").unwrap();
        assert_eq!(c.epochs, 3);
    }
}
