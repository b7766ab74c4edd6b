use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::attention::{AttentionHead, AttentionKind};
use crate::confidence::{ConfidenceTable, ConfidenceVariant};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, FeatureSchema, Side};
use crate::numeric::{Dense, Ffn, Matrix, LEAKY_SLOPE};

pub const MLP_HIDDEN: [usize; 2] = [80, 40];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolingMode {
    Attention,
    /// Uniform weights over live neighbours; the attention heads are unused.
    Average,
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingMode::Attention => "attention",
            PoolingMode::Average => "average",
        })
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(PoolingMode::Attention),
            "average" => Ok(PoolingMode::Average),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

/// Architecture switches that shape the parameters or the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub confidence: ConfidenceVariant,
    pub attention: AttentionKind,
    pub pooling: PoolingMode,
    /// Output width of the four integrate layers.
    pub hidden: usize,
    pub max_neighbors: usize,
    /// Query all four heads with the user profile instead of the role-matched endpoint.
    pub literal_eq3: bool,
    /// Pool over confidence-augmented neighbours (otherwise raw neighbours).
    pub confidence_in_pooling: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            confidence: ConfidenceVariant::Ce,
            attention: AttentionKind::Ffn3,
            pooling: PoolingMode::Attention,
            hidden: 64,
            max_neighbors: 10,
            literal_eq3: false,
            confidence_in_pooling: true,
            dropout: 0.0,
        }
    }
}

/// Widths derived from the schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub user_fields: usize,
    pub item_fields: usize,
    /// `n_u·H_u`
    pub user_profile: usize,
    /// `n_i·H_i`, also the width of a user-neighbour slot.
    pub item_profile: usize,
    /// `H_u`, the width of an item-neighbour slot.
    pub item_neighbor: usize,
    pub user_rows: usize,
    pub item_rows: usize,
    pub user_padding: usize,
    pub item_padding: usize,
}

impl ModelDims {
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        ModelDims {
            user_fields: schema.field_count(Side::User),
            item_fields: schema.field_count(Side::Item),
            user_profile: schema.field_count(Side::User) * schema.user_width,
            item_profile: schema.field_count(Side::Item) * schema.item_width,
            item_neighbor: schema.user_width,
            user_rows: schema.table_rows(Side::User),
            item_rows: schema.table_rows(Side::Item),
            user_padding: schema.padding_id(Side::User),
            item_padding: schema.padding_id(Side::Item),
        }
    }

    pub fn user_neighbor(&self) -> usize {
        self.item_profile
    }
}

/// Heads in fixed order: user-interactive, user-adaptive, item-interactive, item-adaptive.
pub const HEAD_NAMES: [&str; 4] = ["user_interactive", "user_adaptive", "item_interactive", "item_adaptive"];

#[derive(Debug, Clone, PartialEq)]
pub struct PigatParams {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub user_table: EmbeddingTable,
    pub item_table: EmbeddingTable,
    /// Added to user-neighbour slots (width `n_i·H_i`).
    pub user_confidence: ConfidenceTable,
    /// Added to item-neighbour slots (width `H_u`).
    pub item_confidence: ConfidenceTable,
    pub heads: [AttentionHead; 4],
    pub integrate_user: Dense,
    pub integrate_item: Dense,
    pub adaptive_user: Dense,
    pub adaptive_item: Dense,
    pub mlp: Ffn,
    version: u64,
}

/// Which profile embedding queries head `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuerySource {
    User,
    Item,
}

impl PigatParams {
    pub fn new<R: Rng + ?Sized>(schema: &FeatureSchema, config: ModelConfig, rng: &mut R) -> Result<Self> {
        if config.hidden == 0 || config.max_neighbors == 0 {
            return Err(Error::Config("hidden width and max_neighbors must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let dims = ModelDims::from_schema(schema);
        let user_table = EmbeddingTable::new(dims.user_rows, schema.user_width, dims.user_padding, rng);
        let item_table = EmbeddingTable::new(dims.item_rows, schema.item_width, dims.item_padding, rng);
        let user_confidence = ConfidenceTable::build(config.confidence, config.max_neighbors, dims.user_neighbor(), rng)?;
        let item_confidence = ConfidenceTable::build(config.confidence, config.max_neighbors, dims.item_neighbor, rng)?;

        let query_width = |q: QuerySource| match q {
            QuerySource::User => dims.user_profile,
            QuerySource::Item => dims.item_profile,
        };
        let neighbor_width = |h: usize| if h < 2 { dims.user_neighbor() } else { dims.item_neighbor };
        let mut heads = Vec::with_capacity(4);
        for h in 0..4 {
            let q = Self::query_source_for(config.literal_eq3, h);
            heads.push(AttentionHead::new(config.attention, query_width(q), neighbor_width(h), rng)?);
        }
        let heads: [AttentionHead; 4] = heads.try_into().expect("four heads");

        let d = config.hidden;
        let integrate_user = Dense::new(dims.user_profile + dims.user_neighbor(), d, rng);
        let integrate_item = Dense::new(dims.item_profile + dims.item_neighbor, d, rng);
        let adaptive_user = Dense::new(2 * dims.user_neighbor(), d, rng);
        let adaptive_item = Dense::new(2 * dims.item_neighbor, d, rng);
        let mlp = Ffn::new(&[4 * d, MLP_HIDDEN[0], MLP_HIDDEN[1], 1], LEAKY_SLOPE, rng)?;

        Ok(PigatParams {
            config,
            dims,
            user_table,
            item_table,
            user_confidence,
            item_confidence,
            heads,
            integrate_user,
            integrate_item,
            adaptive_user,
            adaptive_item,
            mlp,
            version: 0,
        })
    }

    pub fn query_source_for(literal_eq3: bool, head: usize) -> QuerySource {
        if literal_eq3 {
            return QuerySource::User;
        }
        match head {
            0 | 3 => QuerySource::User,
            _ => QuerySource::Item,
        }
    }

    pub fn query_source(&self, head: usize) -> QuerySource {
        Self::query_source_for(self.config.literal_eq3, head)
    }

    /// Same structure, all values zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        PigatParams {
            config: self.config,
            dims: self.dims,
            user_table: self.user_table.zeros_like(),
            item_table: self.item_table.zeros_like(),
            user_confidence: self.user_confidence.zeros_like(),
            item_confidence: self.item_confidence.zeros_like(),
            heads: self.heads.clone().map(|h| h.zeros_like()),
            integrate_user: self.integrate_user.zeros_like(),
            integrate_item: self.integrate_item.zeros_like(),
            adaptive_user: self.adaptive_user.zeros_like(),
            adaptive_item: self.adaptive_item.zeros_like(),
            mlp: self.mlp.zeros_like(),
            version: self.version,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Marks the parameters as modified so that older forward caches are rejected.
    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    fn group_flags(&self) -> [bool; 4] {
        [
            true,
            self.config.confidence.trainable(),
            self.config.pooling == PoolingMode::Attention,
            true,
        ]
    }

    /// Every tensor with its name and whether it trains, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, bool, &Matrix)> {
        let [emb, conf, att, dense] = self.group_flags();
        let mut out: Vec<(String, bool, &Matrix)> = vec![
            ("user_table".into(), emb, &self.user_table.weights),
            ("item_table".into(), emb, &self.item_table.weights),
            ("user_confidence".into(), conf, &self.user_confidence.values),
            ("item_confidence".into(), conf, &self.item_confidence.values),
        ];
        for (h, head) in self.heads.iter().enumerate() {
            for (j, t) in head.tensors().into_iter().enumerate() {
                out.push((format!("{}.{j}", HEAD_NAMES[h]), att, t));
            }
        }
        for (name, layer) in [
            ("integrate_user", &self.integrate_user),
            ("integrate_item", &self.integrate_item),
            ("adaptive_user", &self.adaptive_user),
            ("adaptive_item", &self.adaptive_item),
        ] {
            out.push((format!("{name}.weight"), dense, &layer.weight));
            out.push((format!("{name}.bias"), dense, &layer.bias));
        }
        for (j, t) in self.mlp.tensors().into_iter().enumerate() {
            out.push((format!("mlp.{j}"), dense, t));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, bool, &mut Matrix)> {
        let [emb, conf, att, dense] = self.group_flags();
        let mut out: Vec<(String, bool, &mut Matrix)> = vec![
            ("user_table".into(), emb, &mut self.user_table.weights),
            ("item_table".into(), emb, &mut self.item_table.weights),
            ("user_confidence".into(), conf, &mut self.user_confidence.values),
            ("item_confidence".into(), conf, &mut self.item_confidence.values),
        ];
        for (h, head) in self.heads.iter_mut().enumerate() {
            for (j, t) in head.tensors_mut().into_iter().enumerate() {
                out.push((format!("{}.{j}", HEAD_NAMES[h]), att, t));
            }
        }
        for (name, layer) in [
            ("integrate_user", &mut self.integrate_user),
            ("integrate_item", &mut self.integrate_item),
            ("adaptive_user", &mut self.adaptive_user),
            ("adaptive_item", &mut self.adaptive_item),
        ] {
            let [w, b] = layer.tensors_mut();
            out.push((format!("{name}.weight"), dense, w));
            out.push((format!("{name}.bias"), dense, b));
        }
        for (j, t) in self.mlp.tensors_mut().into_iter().enumerate() {
            out.push((format!("mlp.{j}"), dense, t));
        }
        out
    }

    pub fn trainable_shapes(&self) -> Vec<(usize, usize)> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, trains, _)| *trains)
            .map(|(_, _, t)| t.shape())
            .collect()
    }

    pub fn trainable(&self) -> Vec<&Matrix> {
        self.named_tensors().into_iter().filter(|t| t.1).map(|t| t.2).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.named_tensors_mut().into_iter().filter(|t| t.1).map(|t| t.2).collect()
    }

    pub fn zero(&mut self) {
        for (_, _, t) in self.named_tensors_mut() {
            t.fill(0.0);
        }
    }

    /// Element-wise `self += other` over every tensor.
    pub fn add_assign(&mut self, other: &PigatParams) -> Result<()> {
        let theirs = other.named_tensors();
        let mine = self.named_tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Usage("parameter structures differ".into()));
        }
        for ((_, _, a), (_, _, b)) in mine.into_iter().zip(theirs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn pin_padding(&mut self) {
        self.user_table.pin_padding();
        self.item_table.pin_padding();
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, t)| t.is_finite())
    }

    /// `name=norm` for each tensor group, for diagnostics.
    pub fn norm_report(&self) -> String {
        self.named_tensors()
            .iter()
            .map(|(n, _, t)| format!("{n}={:.4e}", t.norm()))
            .collect::<Vec<_>>()
            .join(", ")
    }
}
