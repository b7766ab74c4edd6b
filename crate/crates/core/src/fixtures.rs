//! Small deterministic schemas and instance sets for checks, demos and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::features::{encode_instance, EncodedInstance, FeatureSchema, Field, Vocabulary};
use crate::graph::{EventPayload, InteractionEvent, InteractionGraph};

pub const TOY_USERS: usize = 6;
pub const TOY_ITEMS: usize = 8;
const TOY_GROUPS: usize = 3;

fn field(name: &str, prefix: &str, n: usize) -> Field {
    Field {
        name: name.to_string(),
        vocab: Vocabulary::from_values((0..n).map(|i| format!("{prefix}{i}"))),
    }
}

/// Two user fields (id, group) and two item fields (id, category), all frozen.
pub fn toy_schema(width: usize) -> FeatureSchema {
    FeatureSchema::new(
        vec![field("user_id", "u", TOY_USERS), field("user_group", "g", TOY_GROUPS)],
        vec![field("item_id", "i", TOY_ITEMS), field("item_cat", "c", TOY_GROUPS)],
        width,
        width,
    )
    .expect("valid toy schema")
}

/// Random interaction events over the toy schema, strictly increasing timestamps.
pub fn toy_events(schema: &FeatureSchema, seed: u64, count: usize) -> Vec<InteractionEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_offset = schema.field_offset(crate::features::Side::User, 1);
    let cat_offset = schema.field_offset(crate::features::Side::Item, 1);
    (0..count)
        .map(|t| {
            let user = rng.gen_range(0..TOY_USERS);
            let item = rng.gen_range(0..TOY_ITEMS);
            InteractionEvent {
                user,
                item,
                timestamp: t as i64,
                payload: EventPayload {
                    label: rng.gen_range(0..2),
                    user_features: vec![user, group_offset + user % TOY_GROUPS],
                    item_features: vec![item, cat_offset + item % TOY_GROUPS],
                },
            }
        })
        .collect()
}

/// Encodes `count` random events in dynamic order and returns every instance.
pub fn toy_instances(schema: &FeatureSchema, seed: u64, count: usize, k: usize) -> Result<Vec<EncodedInstance>> {
    let graph = InteractionGraph::new();
    let mut out = Vec::with_capacity(count);
    for event in toy_events(schema, seed, count) {
        out.push(encode_instance(schema, &event, &graph.snapshot_at(event.timestamp), k)?);
        graph.insert_interaction(event)?;
    }
    Ok(out)
}

/// A small batch mixing a cold-start instance with partly and fully populated windows.
pub fn toy_batch(schema: &FeatureSchema, seed: u64, k: usize) -> Result<Vec<EncodedInstance>> {
    let all = toy_instances(schema, seed, 24, k)?;
    let partial = all.iter().find(|i| i.user_len() > 0 && i.user_len() < k && i.item_len() > 0);
    let mut batch = vec![all[0].clone()];
    batch.extend(partial.cloned());
    batch.push(all[all.len() - 1].clone());
    Ok(batch)
}
