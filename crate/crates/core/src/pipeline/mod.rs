//! From an interactions file to trained parameters.

pub mod config;
pub mod ingest;
pub mod instances;
pub mod split;
pub mod synth;
pub mod train;

pub use config::{key_values, GraphMode, TrainConfig, CONFIG_KEYS};
pub use ingest::{ingest, ingest_raw, infer_schema, parse_interactions, read_interactions, Dataset, RawInteraction, Record, SignalKind};
pub use instances::{build_instances, item_train_degrees};
pub use split::{timeline_split, Split};
pub use train::{predict_all, stream_rng, train, train_with, EpochMetrics, Prepared, Stream, TrainOutcome, Trainer, METRICS_HEADER};
pub use synth::{degree_summary, generate_synthetic, DegreeSummary, SynthData, SynthSpec};
