use std::fmt::Write as _;
use std::path::Path;

use proptest::prelude::*;

use pigat::pipeline::{build_instances, infer_schema, ingest_raw, parse_interactions, timeline_split, SignalKind, Split};
use pigat::{Dataset, GraphMode};

fn dataset(text: &str) -> Dataset {
    let raw = parse_interactions(text, Path::new("inline")).unwrap();
    let schema = infer_schema(&raw, 4, 4).unwrap();
    ingest_raw(raw, schema, SignalKind::Auto).unwrap()
}

#[test]
fn hundred_records_with_paired_timestamps_split_80_10_10() {
    // Written newest first; every timestamp is shared by two records.
    let mut text = String::new();
    for i in (0..100).rev() {
        let _ = writeln!(text, "{}\tuser_id=u{}\titem_id=i{i}\t{}", i / 2, i % 7, i % 2);
    }
    let d = dataset(&text);
    let s = timeline_split(d.len()).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
    assert!(d.records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    // The boundary falls between timestamps 39 and 40, so no tie straddles it.
    assert_eq!(d.records[79].timestamp, 39);
    assert_eq!(d.records[80].timestamp, 40);
    // Ties keep file order: the odd-indexed record was written first.
    assert_eq!(d.records[0].label, 1);
    assert_eq!(d.records[1].label, 0);
}

fn stream(events: &[(u8, u8, u8)]) -> String {
    let mut text = String::new();
    for (t, (u, i, y)) in events.iter().enumerate() {
        let _ = writeln!(text, "{}\tuser_id=u{u}\titem_id=i{i};cat=c{}\t{y}", t / 2, i % 3);
    }
    text
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Appending later records never changes the encoding of earlier ones.
    #[test]
    fn dynamic_encoding_ignores_the_future(
        events in prop::collection::vec((0u8..5, 0u8..6, 0u8..2), 12..40),
        extra in prop::collection::vec((0u8..5, 0u8..6, 0u8..2), 1..20),
        k in 1usize..6,
    ) {
        let mut all = events.clone();
        all.extend(&extra);
        let long = dataset(&stream(&all));
        let mut schema = long.schema.clone();
        schema.freeze();
        let raw = parse_interactions(&stream(&events), Path::new("prefix")).unwrap();
        let short = ingest_raw(raw, schema, SignalKind::Auto).unwrap();
        let whole = |n: usize| Split { train: 0..n, val: n..n, test: n..n };
        let a = build_instances(&short, &whole(short.len()), GraphMode::Dynamic, k, true).unwrap();
        let b = build_instances(&long, &whole(long.len()), GraphMode::Dynamic, k, true).unwrap();
        prop_assert_eq!(&a[..], &b[..a.len()]);
    }
}
