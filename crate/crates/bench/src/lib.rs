//! Fixtures for the benchmarks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pigat::eval::ScoredSet;
use pigat::model::AttentionKind;
use pigat::pipeline::{generate_synthetic, infer_schema, ingest_raw, parse_interactions, Prepared, SignalKind, SynthSpec};
use pigat::{Dataset, TrainConfig};

/// A synthetic stream of `events` interactions over 200 users and 2000 items.
pub fn synthetic_dataset(events: usize) -> Dataset {
    let spec = SynthSpec {
        events,
        ..SynthSpec::default()
    };
    let text = generate_synthetic(&spec).expect("valid spec").to_interactions_text();
    let raw = parse_interactions(&text, Path::new("synthetic")).expect("well-formed");
    let schema = infer_schema(&raw, 1, 1).expect("fields");
    ingest_raw(raw, schema, SignalKind::Binary).expect("ingest")
}

pub fn bench_config(attention: AttentionKind) -> TrainConfig {
    TrainConfig {
        attention,
        embed_user: 8,
        embed_item: 8,
        hidden: 16,
        batch_size: 128,
        epochs: 1,
        ..TrainConfig::default()
    }
}

pub fn prepared(events: usize, config: &TrainConfig) -> Prepared {
    Prepared::new(synthetic_dataset(events), config).expect("prepared")
}

/// Random scores with tied values and both classes present.
pub fn random_scores(n: usize, seed: u64) -> ScoredSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| (rng.gen::<f64>() * 1000.0).round() / 1000.0).collect();
    let labels = (0..n).map(|i| if i < 2 { i as u8 } else { rng.gen_range(0..2) }).collect();
    let degrees = (0..n).map(|_| rng.gen_range(0..20)).collect();
    ScoredSet::new(scores, labels, degrees).expect("consistent lengths")
}
