//! Context-aware recommendation over a time-evolving user-item interaction graph.
//!
//! Each (user, item) query pools the recent neighbours of both endpoints with four
//! attention heads, adds confidence embeddings that encode recency and history length,
//! and scores the result with a small MLP.

pub mod checkpoint;
pub mod confidence;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod eval;
pub mod pipeline;

pub use checkpoint::Checkpoint;
pub use confidence::{ConfidenceTable, ConfidenceVariant};
pub use error::{Error, Result};
pub use features::{encode_instance, EmbeddingTable, EncodedInstance, FeatureSchema, Field, Side, Vocabulary};
pub use graph::{GraphSnapshot, GraphView, InteractionEvent, InteractionGraph, NodeId};
pub use model::{AttentionKind, ForwardCache, Mode, ModelConfig, PigatParams, PoolingMode};
pub use pipeline::{Dataset, GraphMode, TrainConfig};
