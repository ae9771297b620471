use harp_core::history::{parse_line, to_line, HistoryStore};
use harp_core::types::{ChunkType, HistoryEntry, NetworkProfile, ParamTriple};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn entry() -> impl Strategy<Value = HistoryEntry> {
    (
        ("[a-z]{1,6}", "[a-z ]{0,6}"),
        (1e6f64..1e11, 0.0f64..0.3, 1e4f64..1e9),
        0usize..4,
        (1.0f64..1e10, 1u64..100_000),
        (1u32..=32, 1u32..=32, 1u32..=32),
        (1e3f64..1e11, -1_000_000i64..2_000_000_000),
        "[a-z0-9-]{1,8}",
    )
        .prop_map(|((src, dst), (bw, rtt, buf), t, (avg, n), (cc, p, pp), (thr, at), sid)| HistoryEntry {
            source: src,
            destination: dst,
            network: NetworkProfile::new(bw, rtt, buf).unwrap(),
            chunk_type: ChunkType::ALL[t],
            avg_file_size: avg,
            file_count: n,
            params: ParamTriple { cc, p, pp },
            throughput: thr,
            collected_at: at,
            session_id: sid,
        })
}

proptest! {
    #[test]
    fn line_round_trip(e in entry()) {
        let back = parse_line(&to_line(&e), 1).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn prune_keeps_exactly_recent(entries in prop::collection::vec(entry(), 0..40), cutoff in -1_000_000i64..2_000_000_000) {
        let mut store = HistoryStore::from_entries(entries.clone()).unwrap();
        store.prune_older_than(cutoff);
        let want: Vec<HistoryEntry> = entries.into_iter().filter(|e| e.collected_at >= cutoff).collect();
        prop_assert_eq!(store.entries(), &want[..]);
        prop_assert_eq!(store.feature_stats().is_some(), !want.is_empty());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let entries: Vec<HistoryEntry> = (0..200)
        .map(|_| entry().new_tree(&mut runner).unwrap().current())
        .collect();
    HistoryStore::from_entries(entries.clone()).unwrap().save(&path).unwrap();
    assert_eq!(HistoryStore::load(&path).unwrap().entries(), &entries[..]);
}
