//! Interactions file:
//! `timestamp<TAB>user_field=value;…<TAB>item_field=value;…<TAB>signal`, one record per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Field, Side};
use crate::graph::{EventPayload, InteractionEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub timestamp: i64,
    pub user: Vec<(String, String)>,
    pub item: Vec<(String, String)>,
    pub signal: f64,
    /// 1-based line in the source file.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalKind {
    /// Binary when every signal is 0 or 1, ratings otherwise.
    #[default]
    Auto,
    Binary,
    /// Ratings above 3 are positive.
    Rating,
}

pub const RATING_THRESHOLD: f64 = 3.0;

/// One interaction with every categorical value resolved to an embedding-table id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub timestamp: i64,
    pub user_features: Vec<usize>,
    pub item_features: Vec<usize>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    /// Sorted by timestamp, ties in file order.
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_node(&self, r: &Record) -> usize {
        self.schema.node_index(Side::User, r.user_features[0])
    }

    pub fn item_node(&self, r: &Record) -> usize {
        self.schema.node_index(Side::Item, r.item_features[0])
    }

    pub fn event(&self, r: &Record) -> InteractionEvent {
        InteractionEvent {
            user: self.user_node(r),
            item: self.item_node(r),
            timestamp: r.timestamp,
            payload: EventPayload {
                label: r.label,
                user_features: r.user_features.clone(),
                item_features: r.item_features.clone(),
            },
        }
    }

    pub fn with_widths(mut self, user: usize, item: usize) -> Self {
        self.schema.user_width = user;
        self.schema.item_width = item;
        self
    }

    /// Serialises back to the interactions format; the signal column holds the label.
    pub fn to_interactions_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.timestamp,
                self.render(Side::User, &r.user_features),
                self.render(Side::Item, &r.item_features),
                r.label
            );
        }
        out
    }

    fn render(&self, side: Side, ids: &[usize]) -> String {
        self.schema
            .fields(side)
            .iter()
            .enumerate()
            .map(|(f, field)| {
                let local = ids[f] - self.schema.field_offset(side, f);
                let value = field.vocab.values().get(local).map_or("__oov__", |v| v.as_str());
                format!("{}={}", field.name, value)
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn parse_fields(text: &str) -> Option<Vec<(String, String)>> {
    text.split(';')
        .filter(|s| !s.is_empty())
        .map(|kv| kv.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

pub fn parse_interactions(text: &str, path: &Path) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 tab-separated columns, got {}", cols.len())));
        }
        let timestamp: i64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad timestamp {:?}", cols[0])))?;
        if timestamp < 0 {
            return Err(err(format!("negative timestamp {timestamp}")));
        }
        let user = parse_fields(cols[1]).ok_or_else(|| err(format!("bad user fields {:?}", cols[1])))?;
        let item = parse_fields(cols[2]).ok_or_else(|| err(format!("bad item fields {:?}", cols[2])))?;
        if user.is_empty() || item.is_empty() {
            return Err(err("user and item need at least one field each".into()));
        }
        let signal: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad signal {:?}", cols[3])))?;
        if !signal.is_finite() {
            return Err(err(format!("non-finite signal {signal}")));
        }
        out.push(RawInteraction {
            timestamp,
            user,
            item,
            signal,
            line: line_no,
        });
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{}: no interactions", path.display())));
    }
    Ok(out)
}

pub fn read_interactions(path: &Path) -> Result<Vec<RawInteraction>> {
    let text = std::fs::read_to_string(path)?;
    parse_interactions(&text, path)
}

/// Field layout implied by the first record, with empty vocabularies.
pub fn infer_schema(raw: &[RawInteraction], user_width: usize, item_width: usize) -> Result<FeatureSchema> {
    let first = raw.first().ok_or_else(|| Error::Data("no interactions".into()))?;
    let fields = |kv: &[(String, String)]| kv.iter().map(|(k, _)| Field::new(k.clone())).collect();
    FeatureSchema::new(fields(&first.user), fields(&first.item), user_width, item_width)
}

pub fn labels(raw: &[RawInteraction], kind: SignalKind) -> Result<Vec<u8>> {
    let binary = match kind {
        SignalKind::Binary => true,
        SignalKind::Rating => false,
        SignalKind::Auto => raw.iter().all(|r| r.signal == 0.0 || r.signal == 1.0),
    };
    raw.iter()
        .map(|r| {
            if binary {
                match r.signal {
                    0.0 => Ok(0),
                    1.0 => Ok(1),
                    s => Err(Error::Data(format!("line {}: binary signal {s} is not 0 or 1", r.line))),
                }
            } else {
                Ok(u8::from(r.signal > RATING_THRESHOLD))
            }
        })
        .collect()
}

/// Sorts by timestamp (stable on ties), builds or applies vocabularies in that order
/// and resolves every value to a table id.
pub fn ingest_raw(mut raw: Vec<RawInteraction>, mut schema: FeatureSchema, signal: SignalKind) -> Result<Dataset> {
    raw.sort_by_key(|r| r.timestamp);
    let labels = labels(&raw, signal)?;

    let lookup = |kv: &[(String, String)], name: &str, line: usize| -> Result<String> {
        kv.iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Data(format!("line {line}: missing field {name:?}")))
    };
    for r in &raw {
        for (side, kv) in [(Side::User, &r.user), (Side::Item, &r.item)] {
            let fields = schema.fields_mut(side);
            if kv.len() != fields.len() {
                return Err(Error::Data(format!(
                    "line {}: expected {} {side:?} fields, got {}",
                    r.line,
                    fields.len(),
                    kv.len()
                )));
            }
            for field in fields.iter_mut() {
                let value = lookup(kv, &field.name, r.line)?;
                field.vocab.observe(&value);
            }
        }
    }

    let mut records = Vec::with_capacity(raw.len());
    for (r, label) in raw.iter().zip(labels) {
        let mut ids = [Vec::new(), Vec::new()];
        for (slot, (side, kv)) in [(Side::User, &r.user), (Side::Item, &r.item)].into_iter().enumerate() {
            for f in 0..schema.field_count(side) {
                let value = lookup(kv, &schema.fields(side)[f].name, r.line)?;
                ids[slot].push(schema.table_id(side, f, &value)?);
            }
        }
        let [user_features, item_features] = ids;
        records.push(Record {
            timestamp: r.timestamp,
            user_features,
            item_features,
            label,
        });
    }
    Ok(Dataset { schema, records })
}

/// Reads and ingests a file. Without a schema the field layout comes from the first record.
pub fn ingest(path: &Path, schema: Option<FeatureSchema>, widths: (usize, usize), signal: SignalKind) -> Result<Dataset> {
    let raw = read_interactions(path)?;
    let schema = match schema {
        Some(s) => s,
        None => infer_schema(&raw, widths.0, widths.1)?,
    };
    ingest_raw(raw, schema, signal)
}
