use harp_core::history::FEATURE_COUNT;
use harp_core::similarity::{cosine_similarity, filter_similar, similarities, FeatureVector, Query};
use harp_core::types::{ChunkType, HistoryEntry, NetworkProfile, ParamTriple};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = (NetworkProfile, usize, f64, u64)> {
    (
        prop::sample::select(vec![1e9, 10e9, 40e9]),
        prop::sample::select(vec![0.002, 0.03, 0.04, 0.1]),
        prop::sample::select(vec![16e6, 32e6, 64e6]),
        0usize..4,
        1e5f64..5e9,
        1u64..20_000,
    )
        .prop_map(|(bw, rtt, buf, t, avg, n)| (NetworkProfile::new(bw, rtt, buf).unwrap(), t, avg, n))
}

fn entry() -> impl Strategy<Value = HistoryEntry> {
    profile().prop_map(|(network, t, avg, n)| HistoryEntry {
        source: "a".into(),
        destination: "b".into(),
        network,
        chunk_type: ChunkType::ALL[t],
        avg_file_size: avg,
        file_count: n,
        params: ParamTriple { cc: 1, p: 1, pp: 1 },
        throughput: 1e9,
        collected_at: 0,
        session_id: "s".into(),
    })
}

fn query() -> impl Strategy<Value = Query> {
    profile().prop_map(|(network, t, avg, n)| Query {
        network,
        chunk_type: ChunkType::ALL[t],
        avg_file_size: avg,
        file_count: n,
    })
}

fn vector() -> impl Strategy<Value = [f64; FEATURE_COUNT]> {
    prop::array::uniform6(0.0f64..10.0)
}

proptest! {
    #[test]
    fn cosine_ignores_length(a in vector(), b in vector(), k in 0.01f64..100.0) {
        let (fa, fb) = (FeatureVector(a), FeatureVector(b));
        prop_assume!(!fa.is_zero() && !fb.is_zero());
        let scaled = FeatureVector(a.map(|x| x * k));
        let s1 = cosine_similarity(&fa, &fb).unwrap();
        let s2 = cosine_similarity(&scaled, &fb).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&s1));
        prop_assert!((s1 - cosine_similarity(&fb, &fa).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn file_size_units_do_not_matter(entries in prop::collection::vec(entry(), 1..30), q in query(), k in 0.001f64..1000.0) {
        let base = similarities(&entries, &q);
        let scaled: Vec<HistoryEntry> = entries
            .iter()
            .map(|e| HistoryEntry { avg_file_size: e.avg_file_size * k, ..e.clone() })
            .collect();
        let sq = Query { avg_file_size: q.avg_file_size * k, ..q };
        for (a, b) in base.iter().zip(similarities(&scaled, &sq)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_matches_brute_force(entries in prop::collection::vec(entry(), 1..60), q in query(), min in 1usize..60) {
        let sims = similarities(&entries, &q);
        let out = filter_similar(&entries, &q, min).unwrap();
        if entries.len() < min {
            prop_assert!(out.threshold.is_none() && out.warning);
            prop_assert_eq!(out.entries.len(), entries.len());
            return Ok(());
        }
        let mut want = 0.5;
        for pct in (50..=99).rev() {
            let t = pct as f64 / 100.0;
            if sims.iter().filter(|&&s| s >= t).count() >= min {
                want = t;
                break;
            }
        }
        prop_assert_eq!(out.threshold, Some(want));
        let kept = sims.iter().filter(|&&s| s >= want).count();
        prop_assert_eq!(out.entries.len(), kept);
        prop_assert_eq!(out.warning, kept < min);
        prop_assert!(out.entries.iter().all(|(_, s)| *s >= want));
    }

    #[test]
    fn asking_for_more_never_keeps_less(entries in prop::collection::vec(entry(), 1..60), q in query(), a in 1usize..60, b in 1usize..60) {
        let (lo, hi) = (a.min(b), a.max(b));
        let small = filter_similar(&entries, &q, lo).unwrap();
        let large = filter_similar(&entries, &q, hi).unwrap();
        prop_assert!(large.entries.len() >= small.entries.len());
        if let (Some(ts), Some(tl)) = (small.threshold, large.threshold) {
            prop_assert!(tl <= ts);
        }
    }
}
