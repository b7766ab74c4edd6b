use crate::error::{Error, Result};
use crate::features::{encode_instance, EncodedInstance, Side};
use crate::graph::{GraphView, InteractionGraph, NodeId};

use super::config::GraphMode;
use super::ingest::Dataset;
use super::split::Split;

fn graph_for(dataset: &Dataset) -> InteractionGraph {
    InteractionGraph::frozen(
        dataset.schema.fields(Side::User)[0].vocab.cardinality() + 1,
        dataset.schema.fields(Side::Item)[0].vocab.cardinality() + 1,
    )
}

/// One encoded instance per record, in record order.
///
/// Dynamic mode encodes every record against the graph of all earlier records and then
/// inserts it. Static mode encodes every record against the training-period graph.
/// Negatively labelled records are kept out of the graph unless `negative_neighbors`.
pub fn build_instances(
    dataset: &Dataset,
    split: &Split,
    mode: GraphMode,
    k: usize,
    negative_neighbors: bool,
) -> Result<Vec<EncodedInstance>> {
    if split.len() != dataset.len() {
        return Err(Error::Usage(format!(
            "split covers {} records, dataset has {}",
            split.len(),
            dataset.len()
        )));
    }
    let graph = graph_for(dataset);
    let admit = |label: u8| negative_neighbors || label == 1;
    let mut out = Vec::with_capacity(dataset.len());
    match mode {
        GraphMode::Dynamic => {
            for r in &dataset.records {
                let event = dataset.event(r);
                let view = graph.snapshot_at(event.timestamp);
                out.push(encode_instance(&dataset.schema, &event, &view, k)?);
                if admit(r.label) {
                    graph.insert_interaction(event)?;
                }
            }
        }
        GraphMode::Static => {
            for r in &dataset.records[split.train.clone()] {
                if admit(r.label) {
                    graph.insert_interaction(dataset.event(r))?;
                }
            }
            let view = graph.snapshot_at(i64::MAX);
            for r in &dataset.records {
                out.push(encode_instance(&dataset.schema, &dataset.event(r), &view, k)?);
            }
        }
    }
    Ok(out)
}

/// Per record, the number of training-period interactions of its item.
pub fn item_train_degrees(dataset: &Dataset, split: &Split) -> Result<Vec<usize>> {
    let graph = graph_for(dataset);
    for r in &dataset.records[split.train.clone()] {
        graph.insert_interaction(dataset.event(r))?;
    }
    let view = graph.snapshot_at(i64::MAX);
    Ok(dataset
        .records
        .iter()
        .map(|r| view.degree(NodeId::item(dataset.item_node(r))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ingest::{infer_schema, ingest_raw, parse_interactions, SignalKind};
    use crate::pipeline::split::timeline_split;
    use std::fmt::Write as _;
    use std::path::Path;

    fn dataset() -> Dataset {
        let mut text = String::new();
        for i in 0..20 {
            let _ = writeln!(text, "{}\tuser_id=u{}\titem_id=i{}\t{}", i / 2, i % 3, i % 5, (i % 3 != 0) as u8);
        }
        let raw = parse_interactions(&text, Path::new("t")).unwrap();
        let schema = infer_schema(&raw, 4, 4).unwrap();
        ingest_raw(raw, schema, SignalKind::Auto).unwrap()
    }

    #[test]
    fn dynamic_never_sees_same_or_later_timestamps() {
        let ds = dataset();
        let split = timeline_split(ds.len()).unwrap();
        let inst = build_instances(&ds, &split, GraphMode::Dynamic, 3, true).unwrap();
        // pairs of records share a timestamp, so the second of a pair must not see the first
        for (n, i) in inst.iter().enumerate() {
            let earlier = ds.records[..n].iter().filter(|r| r.timestamp < ds.records[n].timestamp);
            let user_node = ds.user_node(&ds.records[n]);
            let visible = earlier.filter(|r| ds.user_node(r) == user_node).count();
            assert_eq!(i.user_len(), visible.min(3), "record {n}");
        }
    }

    #[test]
    fn static_windows_are_frozen() {
        let ds = dataset();
        let split = timeline_split(ds.len()).unwrap();
        let inst = build_instances(&ds, &split, GraphMode::Static, 3, true).unwrap();
        let first = &inst[0];
        let again = inst.iter().find(|i| i.user_node == first.user_node && i.cutoff > first.cutoff).unwrap();
        assert_eq!(first.user_sequence, again.user_sequence);
    }

    #[test]
    fn negatives_can_be_excluded() {
        let ds = dataset();
        let split = timeline_split(ds.len()).unwrap();
        let with = build_instances(&ds, &split, GraphMode::Dynamic, 10, true).unwrap();
        let without = build_instances(&ds, &split, GraphMode::Dynamic, 10, false).unwrap();
        let total = |v: &[EncodedInstance]| v.iter().map(|i| i.user_len()).sum::<usize>();
        assert!(total(&without) < total(&with));
    }

    #[test]
    fn degrees_count_training_records() {
        let ds = dataset();
        let split = timeline_split(ds.len()).unwrap();
        let deg = item_train_degrees(&ds, &split).unwrap();
        let node = ds.item_node(&ds.records[0]);
        let expect = ds.records[split.train.clone()].iter().filter(|r| ds.item_node(r) == node).count();
        assert_eq!(deg[0], expect);
    }
}
