//! Categorical vocabularies, embedding tables and instance encoding.
//!
//! Each side (user, item) owns one embedding table. Field `f` of a side occupies a
//! contiguous block of rows: its vocabulary values followed by one reserved OOV row.
//! A single padding row at the end of the table is pinned to zero.
//!
//! The item table doubles as the table for the user-neighbour sequence and the
//! user table as the table for the item-neighbour sequence (user-id field only).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{GraphView, InteractionEvent, NodeId};
use crate::numeric::{axpy, Matrix};

pub use crate::graph::Part as Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Unknown values map to the field's trainable OOV row.
    #[default]
    Reserved,
    Reject,
}

/// Dense value→index map in first-seen order, optionally capped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    values: Vec<String>,
    index: HashMap<String, usize>,
    capacity: Option<usize>,
    frozen: bool,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_limit(capacity: usize) -> Self {
        Vocabulary {
            capacity: Some(capacity),
            ..Self::default()
        }
    }

    pub fn from_values<I: IntoIterator<Item = String>>(values: I) -> Self {
        let mut v = Vocabulary::new();
        for value in values {
            v.observe(&value);
        }
        v.frozen = true;
        v
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Adds `value` unless frozen or full; returns its index if present afterwards.
    pub fn observe(&mut self, value: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(value) {
            return Some(i);
        }
        if self.frozen || self.capacity.is_some_and(|c| self.values.len() >= c) {
            return None;
        }
        let i = self.values.len();
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), i);
        Some(i)
    }

    pub fn get(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }

    /// Number of rows this field needs: its values, or the declared capacity when larger.
    pub fn cardinality(&self) -> usize {
        self.capacity.unwrap_or(0).max(self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub vocab: Vocabulary,
}

impl Field {
    pub fn new(name: impl Into<String>) -> Self {
        Field {
            name: name.into(),
            vocab: Vocabulary::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    /// The first user field is the user id; it identifies user nodes and feeds the item-neighbour sequence.
    pub user_fields: Vec<Field>,
    /// The first item field is the item id.
    pub item_fields: Vec<Field>,
    pub user_width: usize,
    pub item_width: usize,
    pub oov: OovPolicy,
}

impl FeatureSchema {
    pub fn new(user_fields: Vec<Field>, item_fields: Vec<Field>, user_width: usize, item_width: usize) -> Result<Self> {
        if user_fields.is_empty() || item_fields.is_empty() {
            return Err(Error::Config("schema needs at least one user and one item field".into()));
        }
        if user_width == 0 || item_width == 0 {
            return Err(Error::Config("embedding widths must be positive".into()));
        }
        Ok(FeatureSchema {
            user_fields,
            item_fields,
            user_width,
            item_width,
            oov: OovPolicy::default(),
        })
    }

    pub fn fields(&self, side: Side) -> &[Field] {
        match side {
            Side::User => &self.user_fields,
            Side::Item => &self.item_fields,
        }
    }

    pub fn fields_mut(&mut self, side: Side) -> &mut Vec<Field> {
        match side {
            Side::User => &mut self.user_fields,
            Side::Item => &mut self.item_fields,
        }
    }

    pub fn width(&self, side: Side) -> usize {
        match side {
            Side::User => self.user_width,
            Side::Item => self.item_width,
        }
    }

    pub fn field_count(&self, side: Side) -> usize {
        self.fields(side).len()
    }

    /// First table row of field `f`.
    pub fn field_offset(&self, side: Side, f: usize) -> usize {
        self.fields(side)[..f].iter().map(|fl| fl.vocab.cardinality() + 1).sum()
    }

    pub fn oov_id(&self, side: Side, f: usize) -> usize {
        self.field_offset(side, f) + self.fields(side)[f].vocab.cardinality()
    }

    pub fn padding_id(&self, side: Side) -> usize {
        self.field_offset(side, self.field_count(side))
    }

    /// Rows in the side's table, padding included.
    pub fn table_rows(&self, side: Side) -> usize {
        self.padding_id(side) + 1
    }

    /// Table id for `value` of field `f`, applying the OOV policy.
    pub fn table_id(&self, side: Side, f: usize, value: &str) -> Result<usize> {
        let field = &self.fields(side)[f];
        match field.vocab.get(value) {
            Some(i) => Ok(self.field_offset(side, f) + i),
            None => match self.oov {
                OovPolicy::Reserved => Ok(self.oov_id(side, f)),
                OovPolicy::Reject => Err(Error::UnknownValue {
                    field: field.name.clone(),
                    value: value.to_string(),
                }),
            },
        }
    }

    /// Graph node index for a table id of the side's first (id) field.
    pub fn node_index(&self, side: Side, table_id: usize) -> usize {
        table_id - self.field_offset(side, 0)
    }

    pub fn freeze(&mut self) {
        for side in [Side::User, Side::Item] {
            for f in self.fields_mut(side) {
                f.vocab.freeze();
            }
        }
    }

    /// Plain-text schema: `side field_name cardinality` per field plus `embed` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (side, tag) in [(Side::User, "user"), (Side::Item, "item")] {
            for f in self.fields(side) {
                let _ = writeln!(out, "{tag} {} {}", f.name, f.vocab.cardinality());
            }
        }
        let _ = writeln!(out, "embed user {}", self.user_width);
        let _ = writeln!(out, "embed item {}", self.item_width);
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut user_fields = Vec::new();
        let mut item_fields = Vec::new();
        let mut widths = (None, None);
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(n + 1, format!("expected 3 tokens, got {:?}", line)));
            }
            let number: usize = parts[2]
                .parse()
                .map_err(|_| err(n + 1, format!("bad number {:?}", parts[2])))?;
            match (parts[0], parts[1]) {
                ("embed", "user") => widths.0 = Some(number),
                ("embed", "item") => widths.1 = Some(number),
                ("embed", other) => return Err(err(n + 1, format!("unknown embed side {other:?}"))),
                (side @ ("user" | "item"), name) => {
                    let field = Field {
                        name: name.to_string(),
                        vocab: if number > 0 {
                            Vocabulary::with_capacity_limit(number)
                        } else {
                            Vocabulary::new()
                        },
                    };
                    if side == "user" {
                        user_fields.push(field);
                    } else {
                        item_fields.push(field);
                    }
                }
                (other, _) => return Err(err(n + 1, format!("unknown side {other:?}"))),
            }
        }
        let (Some(uw), Some(iw)) = widths else {
            return Err(err(0, "missing `embed user` or `embed item` line".into()));
        };
        FeatureSchema::new(user_fields, item_fields, uw, iw)
    }

    /// Short digest of the field layout, widths and vocabularies.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        for side in [Side::User, Side::Item] {
            for f in self.fields(side) {
                for v in f.vocab.values() {
                    h.update(v.as_bytes());
                    h.update([0u8]);
                }
                h.update([1u8]);
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Digest of the field names and widths only, for comparing layouts independently of vocabularies.
    pub fn layout_hash(&self) -> String {
        let mut h = Sha256::new();
        for side in [Side::User, Side::Item] {
            for f in self.fields(side) {
                h.update(f.name.as_bytes());
                h.update([0u8]);
            }
            h.update([1u8]);
        }
        h.update(self.user_width.to_le_bytes());
        h.update(self.item_width.to_le_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Embedding table with one row per id; `padding` reads as zero and never trains.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Matrix,
    pub padding: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng + ?Sized>(count: usize, width: usize, padding: usize, rng: &mut R) -> Self {
        let mut weights = Matrix::glorot(count, width, rng);
        weights.row_mut(padding).fill(0.0);
        EmbeddingTable { weights, padding }
    }

    pub fn zeros_like(&self) -> Self {
        EmbeddingTable {
            weights: Matrix::zeros(self.weights.rows(), self.weights.cols()),
            padding: self.padding,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.cols()
    }

    pub fn count(&self) -> usize {
        self.weights.rows()
    }

    /// Concatenation of the rows for `ids`; padding contributes zeros.
    pub fn lookup(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let h = self.width();
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= self.count() {
                return Err(Error::Domain(format!("embedding id {id} out of range 0..{}", self.count())));
            }
            if id == self.padding {
                out.extend(std::iter::repeat_n(0.0, h));
            } else {
                out.extend_from_slice(self.weights.row(id));
            }
        }
        Ok(out)
    }

    /// Accumulates slices of `upstream` into the rows of `ids`; the padding slice is dropped.
    /// Called on a gradient accumulator shaped like the table.
    pub fn scatter_gradient(&mut self, ids: &[usize], upstream: &[f64]) -> Result<()> {
        let h = self.width();
        if upstream.len() != ids.len() * h {
            return Err(Error::shape("scatter_gradient", (ids.len(), h), (upstream.len(), 1)));
        }
        for (slot, &id) in ids.iter().enumerate() {
            if id == self.padding {
                continue;
            }
            if id >= self.count() {
                return Err(Error::Domain(format!("embedding id {id} out of range 0..{}", self.count())));
            }
            axpy(1.0, &upstream[slot * h..(slot + 1) * h], self.weights.row_mut(id));
        }
        Ok(())
    }

    pub fn pin_padding(&mut self) {
        let p = self.padding;
        self.weights.row_mut(p).fill(0.0);
    }
}

/// One (user, item, label) query with both neighbour windows.
///
/// Live neighbour slots come first in interaction order; the remaining slots carry
/// the padding id and are masked out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub user_node: usize,
    pub item_node: usize,
    pub user_profile: Vec<usize>,
    pub item_profile: Vec<usize>,
    /// Item-profile ids of the user's last neighbours.
    pub user_sequence: Vec<Vec<usize>>,
    pub user_mask: Vec<bool>,
    /// User-id ids of the item's last neighbours.
    pub item_sequence: Vec<usize>,
    pub item_mask: Vec<bool>,
    pub label: u8,
    pub cutoff: i64,
}

impl EncodedInstance {
    pub fn user_len(&self) -> usize {
        self.user_mask.iter().filter(|&&m| m).count()
    }

    pub fn item_len(&self) -> usize {
        self.item_mask.iter().filter(|&&m| m).count()
    }

    pub fn max_neighbors(&self) -> usize {
        self.user_mask.len()
    }
}

/// Encodes `event` against `view`. Leakage freedom requires the view to exclude the
/// event itself and everything after it, e.g. `graph.snapshot_at(event.timestamp)`.
pub fn encode_instance<V: GraphView + ?Sized>(
    schema: &FeatureSchema,
    event: &InteractionEvent,
    view: &V,
    k: usize,
) -> Result<EncodedInstance> {
    if event.payload.user_features.len() != schema.field_count(Side::User)
        || event.payload.item_features.len() != schema.field_count(Side::Item)
    {
        return Err(Error::shape(
            "encode_instance",
            (schema.field_count(Side::User), schema.field_count(Side::Item)),
            (event.payload.user_features.len(), event.payload.item_features.len()),
        ));
    }
    let item_pad = schema.padding_id(Side::Item);
    let user_pad = schema.padding_id(Side::User);
    let n_items = schema.field_count(Side::Item);

    let mut user_sequence = vec![vec![item_pad; n_items]; k];
    let mut user_mask = vec![false; k];
    for (slot, nb) in view.neighbors(NodeId::user(event.user), k).iter().enumerate() {
        let payload = view
            .payload(nb.event)
            .ok_or_else(|| Error::Usage(format!("neighbour event {} not visible", nb.event)))?;
        user_sequence[slot] = payload.item_features;
        user_mask[slot] = true;
    }

    let mut item_sequence = vec![user_pad; k];
    let mut item_mask = vec![false; k];
    for (slot, nb) in view.neighbors(NodeId::item(event.item), k).iter().enumerate() {
        let payload = view
            .payload(nb.event)
            .ok_or_else(|| Error::Usage(format!("neighbour event {} not visible", nb.event)))?;
        item_sequence[slot] = payload.user_features[0];
        item_mask[slot] = true;
    }

    Ok(EncodedInstance {
        user_node: event.user,
        item_node: event.item,
        user_profile: event.payload.user_features.clone(),
        item_profile: event.payload.item_features.clone(),
        user_sequence,
        user_mask,
        item_sequence,
        item_mask,
        label: event.payload.label,
        cutoff: event.timestamp,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{EventPayload, InteractionGraph};

    fn schema() -> FeatureSchema {
        let mut user_id = Field::new("user_id");
        for u in ["u0", "u1", "u2"] {
            user_id.vocab.observe(u);
        }
        let mut item_id = Field::new("item_id");
        for i in 0..12 {
            item_id.vocab.observe(&format!("i{i}"));
        }
        let mut cat = Field::new("cat");
        for c in ["a", "b"] {
            cat.vocab.observe(c);
        }
        FeatureSchema::new(vec![user_id], vec![item_id, cat], 4, 4).unwrap()
    }

    fn event(s: &FeatureSchema, user: usize, item: usize, t: i64) -> InteractionEvent {
        InteractionEvent {
            user,
            item,
            timestamp: t,
            payload: EventPayload {
                label: 1,
                user_features: vec![s.field_offset(Side::User, 0) + user],
                item_features: vec![
                    s.field_offset(Side::Item, 0) + item,
                    s.field_offset(Side::Item, 1) + item % 2,
                ],
            },
        }
    }

    #[test]
    fn table_layout() {
        let s = schema();
        // item_id: 12 values + oov, cat: 2 values + oov, then padding
        assert_eq!(s.field_offset(Side::Item, 1), 13);
        assert_eq!(s.oov_id(Side::Item, 1), 15);
        assert_eq!(s.padding_id(Side::Item), 16);
        assert_eq!(s.table_rows(Side::Item), 17);
        assert_eq!(s.table_id(Side::Item, 1, "b").unwrap(), 14);
        assert_eq!(s.table_id(Side::Item, 1, "zzz").unwrap(), 15);
        let mut strict = s.clone();
        strict.oov = OovPolicy::Reject;
        assert!(strict.table_id(Side::Item, 1, "zzz").is_err());
    }

    #[test]
    fn schema_text_round_trip() {
        let s = schema();
        let text = s.to_text();
        assert!(text.contains("item cat 2\n") && text.contains("embed user 4\n"));
        let parsed = FeatureSchema::parse(&text, Path::new("schema.txt")).unwrap();
        assert_eq!(parsed.to_text(), text);
        assert!(FeatureSchema::parse("user a 3\n", Path::new("x")).is_err());
    }

    #[test]
    fn lookup_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = EmbeddingTable::new(4, 3, 3, &mut rng);
        t.weights.row_mut(0).fill(0.1);
        assert_eq!(t.lookup(&[0]).unwrap(), vec![0.1; 3]);
        assert_eq!(t.lookup(&[3]).unwrap(), vec![0.0; 3]);
        let both = t.lookup(&[1, 2]).unwrap();
        let mut expected = t.lookup(&[1]).unwrap();
        expected.extend(t.lookup(&[2]).unwrap());
        assert_eq!(both, expected);
        assert!(t.lookup(&[4]).is_err());
    }

    #[test]
    fn scatter_accumulates_and_skips_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = EmbeddingTable::new(5, 2, 4, &mut rng);
        let mut g = t.zeros_like();
        g.scatter_gradient(&[3, 3], &[1.0, 2.0, 10.0, 20.0]).unwrap();
        assert_eq!(g.weights.row(3), &[11.0, 22.0]);
        g.scatter_gradient(&[4], &[5.0, 5.0]).unwrap();
        assert_eq!(g.weights.row(4), &[0.0, 0.0]);
        assert!(g.scatter_gradient(&[1], &[1.0]).is_err());
    }

    #[test]
    fn sgd_step_touches_only_looked_up_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = EmbeddingTable::new(6, 3, 5, &mut rng);
        let before = t.clone();
        // loss = sum of the looked-up embedding, gradient of ones
        let ids = [1, 4];
        let mut g = t.zeros_like();
        g.scatter_gradient(&ids, &[1.0; 6]).unwrap();
        for (w, d) in t.weights.data_mut().iter_mut().zip(g.weights.data()) {
            *w -= 0.1 * d;
        }
        for row in 0..6 {
            let changed = t.weights.row(row) != before.weights.row(row);
            assert_eq!(changed, ids.contains(&row), "row {row}");
        }
    }

    #[test]
    fn encode_cold_and_warm() {
        let s = schema();
        let g = InteractionGraph::new();
        let first = event(&s, 0, 0, 10);
        let enc = encode_instance(&s, &first, &g.snapshot_at(10), 10).unwrap();
        assert_eq!(enc.user_len(), 0);
        assert_eq!(enc.item_len(), 0);
        assert!(enc.user_sequence.iter().all(|ids| ids.iter().all(|&i| i == s.padding_id(Side::Item))));
        g.insert_interaction(first.clone()).unwrap();

        let second = event(&s, 0, 3, 20);
        let enc = encode_instance(&s, &second, &g.snapshot_at(20), 10).unwrap();
        assert_eq!(enc.user_len(), 1);
        assert_eq!(enc.user_sequence[0], first.payload.item_features);
        assert_eq!(enc.item_len(), 0);
    }

    #[test]
    fn encode_window_of_last_ten() {
        let s = schema();
        let g = InteractionGraph::new();
        for t in 0..12 {
            g.insert_interaction(event(&s, 1, t as usize, t)).unwrap();
        }
        let probe = event(&s, 1, 0, 100);
        let enc = encode_instance(&s, &probe, &g.snapshot_at(100), 10).unwrap();
        let items: Vec<usize> = enc.user_sequence.iter().map(|ids| s.node_index(Side::Item, ids[0])).collect();
        assert_eq!(items, (2..12).collect::<Vec<_>>());
        // item 0 was touched once by user 1
        assert_eq!(enc.item_len(), 1);
        assert_eq!(enc.item_sequence[0], s.field_offset(Side::User, 0) + 1);
    }

    #[test]
    fn encoding_ignores_future_events() {
        let s = schema();
        let g = InteractionGraph::new();
        g.insert_interaction(event(&s, 0, 1, 5)).unwrap();
        let probe = event(&s, 0, 2, 10);
        let snap = g.snapshot_at(10);
        let before = encode_instance(&s, &probe, &snap, 4).unwrap();
        g.insert_interaction(event(&s, 0, 2, 10)).unwrap();
        g.insert_interaction(event(&s, 2, 2, 30)).unwrap();
        assert_eq!(encode_instance(&s, &probe, &snap, 4).unwrap(), before);
        assert_eq!(encode_instance(&s, &probe, &g.snapshot_at(10), 4).unwrap(), before);
    }
}
