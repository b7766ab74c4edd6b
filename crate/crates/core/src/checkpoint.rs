//! Plain-text checkpoints: resolved config, feature schema with vocabularies, and every
//! tensor as hex-encoded f64 bits, so a save/load round trip is exact.
//!
//! ```text
//! pigat-checkpoint v1
//! schema_hash <hex>
//! layout_hash <hex>
//! [config]
//! key = value
//! [schema]
//! user user_id 6
//! ...
//! [vocab user 0 <count>]
//! <one value per line>
//! [tensor <name> <rows> <cols>]
//! <one row per line, space-separated hex bits>
//! [end]
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Side};
use crate::model::PigatParams;
use crate::pipeline::TrainConfig;

pub const MAGIC: &str = "pigat-checkpoint v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub schema: FeatureSchema,
    pub params: PigatParams,
}

fn side_tag(side: Side) -> &'static str {
    match side {
        Side::User => "user",
        Side::Item => "item",
    }
}

impl Checkpoint {
    pub fn new(config: TrainConfig, schema: FeatureSchema, params: PigatParams) -> Self {
        Checkpoint { config, schema, params }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "schema_hash {}", self.schema.hash());
        let _ = writeln!(out, "layout_hash {}", self.schema.layout_hash());
        out.push_str("[config]\n");
        out.push_str(&self.config.to_text());
        out.push_str("[schema]\n");
        out.push_str(&self.schema.to_text());
        for side in [Side::User, Side::Item] {
            for (f, field) in self.schema.fields(side).iter().enumerate() {
                let values = field.vocab.values();
                let _ = writeln!(out, "[vocab {} {f} {}]", side_tag(side), values.len());
                for v in values {
                    let _ = writeln!(out, "{v}");
                }
            }
        }
        for (name, _, t) in self.params.named_tensors() {
            let _ = writeln!(out, "[tensor {name} {} {}]", t.rows(), t.cols());
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|x| format!("{:016x}", x.to_bits())).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("[end]\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if lines.first() != Some(&MAGIC) {
            return Err(err(1, format!("expected {MAGIC:?}")));
        }
        let header = |i: usize, key: &str| -> Result<String> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| err(i + 1, format!("expected `{key} <hex>`")))
        };
        let schema_hash = header(1, "schema_hash")?;
        let layout_hash = header(2, "layout_hash")?;

        // Collect the free-form blocks that run until the next section header.
        let mut i = 3;
        let block = |name: &str, i: &mut usize| -> Result<String> {
            if lines.get(*i) != Some(&name) {
                return Err(err(*i + 1, format!("expected {name}")));
            }
            *i += 1;
            let mut body = String::new();
            while let Some(l) = lines.get(*i) {
                if l.starts_with('[') {
                    break;
                }
                body.push_str(l);
                body.push('\n');
                *i += 1;
            }
            Ok(body)
        };
        let config = TrainConfig::parse(&block("[config]", &mut i)?)?;
        let mut schema = FeatureSchema::parse(&block("[schema]", &mut i)?, path)?;

        let mut params = PigatParams::new(&schema, config.model_config(), &mut ChaCha8Rng::seed_from_u64(0))?;
        let mut filled = vec![false; params.named_tensors().len()];
        loop {
            let line_no = i + 1;
            let Some(head) = lines.get(i) else {
                return Err(err(line_no, "truncated checkpoint: missing [end]".into()));
            };
            i += 1;
            if *head == "[end]" {
                break;
            }
            let inner = head
                .strip_prefix('[')
                .and_then(|h| h.strip_suffix(']'))
                .ok_or_else(|| err(line_no, format!("expected a section header, got {head:?}")))?;
            let parts: Vec<&str> = inner.split(' ').collect();
            let number = |s: &str| s.parse::<usize>().map_err(|_| err(line_no, format!("bad number {s:?}")));
            match parts.as_slice() {
                ["vocab", side, f, count] => {
                    let side = match *side {
                        "user" => Side::User,
                        "item" => Side::Item,
                        other => return Err(err(line_no, format!("unknown side {other:?}"))),
                    };
                    let (f, count) = (number(f)?, number(count)?);
                    let field = schema
                        .fields_mut(side)
                        .get_mut(f)
                        .ok_or_else(|| err(line_no, format!("no field {f}")))?;
                    for k in 0..count {
                        let v = lines.get(i + k).ok_or_else(|| err(i + k + 1, "truncated vocabulary".into()))?;
                        if field.vocab.observe(v) != Some(k) {
                            return Err(err(i + k + 1, format!("duplicate or overflowing value {v:?}")));
                        }
                    }
                    i += count;
                }
                ["tensor", name, rows, cols] => {
                    let (rows, cols) = (number(rows)?, number(cols)?);
                    let mut tensors = params.named_tensors_mut();
                    let slot = tensors
                        .iter()
                        .position(|(n, _, _)| n == name)
                        .ok_or_else(|| err(line_no, format!("unknown tensor {name:?}")))?;
                    let t = &mut tensors[slot].2;
                    if t.shape() != (rows, cols) {
                        return Err(Error::shape("checkpoint tensor", t.shape(), (rows, cols)));
                    }
                    for r in 0..rows {
                        let text = lines.get(i + r).ok_or_else(|| err(i + r + 1, "truncated tensor".into()))?;
                        let row = t.row_mut(r);
                        let words: Vec<&str> = text.split(' ').filter(|w| !w.is_empty()).collect();
                        if words.len() != cols {
                            return Err(err(i + r + 1, format!("expected {cols} values, got {}", words.len())));
                        }
                        for (x, w) in row.iter_mut().zip(words) {
                            let bits = u64::from_str_radix(w, 16).map_err(|_| err(i + r + 1, format!("bad hex {w:?}")))?;
                            *x = f64::from_bits(bits);
                        }
                    }
                    i += rows;
                    filled[slot] = true;
                }
                _ => return Err(err(line_no, format!("unknown section {head:?}"))),
            }
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            let name = params.named_tensors()[missing].0.clone();
            return Err(err(lines.len(), format!("tensor {name:?} missing")));
        }
        schema.freeze();
        if schema.layout_hash() != layout_hash {
            return Err(Error::SchemaMismatch {
                expected: layout_hash,
                found: schema.layout_hash(),
            });
        }
        if schema.hash() != schema_hash {
            return Err(Error::SchemaMismatch {
                expected: schema_hash,
                found: schema.hash(),
            });
        }
        params.bump_version();
        Ok(Checkpoint { config, schema, params })
    }

    /// Fails unless `data` has the same field layout and embedding widths as the checkpoint.
    pub fn check_layout(&self, data: &FeatureSchema) -> Result<()> {
        let (expected, found) = (self.schema.layout_hash(), data.layout_hash());
        if expected != found {
            return Err(Error::SchemaMismatch { expected, found });
        }
        Ok(())
    }
}
