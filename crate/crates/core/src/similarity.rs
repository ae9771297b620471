//! Weighted cosine similarity over history features, threshold filtering and
//! session grouping.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::history::{entry_features, FeatureStats, FEATURE_COUNT};
use crate::types::{ChunkType, HistoryEntry, NetworkProfile};

/// Bandwidth, rtt, bdp/buffer, chunk type, average file size, file count.
pub const FEATURE_WEIGHTS: [f64; FEATURE_COUNT] = [2.0, 2.0, 10.0, 10.0, 3.0, 1.0];

pub const DEFAULT_MIN_ENTRIES: usize = 432;
pub const MIN_GROUP: usize = 27;

const START_THRESHOLD_PCT: u32 = 99;
const FLOOR_THRESHOLD_PCT: u32 = 50;

/// Min-max normalized, weighted features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    /// Normalizes `raw` against `stats` and applies [`FEATURE_WEIGHTS`].
    ///
    /// A column with no spread carries no information about distance and is
    /// mapped to 1 so identical features still count toward similarity.
    pub fn from_raw(raw: &[f64; FEATURE_COUNT], stats: &FeatureStats) -> Self {
        let mut v = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            let span = stats.max[i] - stats.min[i];
            let n = if span > 0.0 {
                ((raw[i] - stats.min[i]) / span).clamp(0.0, 1.0)
            } else {
                1.0
            };
            v[i] = n * FEATURE_WEIGHTS[i];
        }
        Self(v)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let na = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Cosine similarity where the origin matches only itself.
fn similarity_total(a: &FeatureVector, b: &FeatureVector) -> f64 {
    match (a.is_zero(), b.is_zero()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => cosine_similarity(a, b).expect("non-zero vectors"),
    }
}

/// Dataset and network description of a transfer to be tuned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub network: NetworkProfile,
    pub chunk_type: ChunkType,
    pub avg_file_size: f64,
    pub file_count: u64,
}

impl Query {
    pub fn raw(&self) -> [f64; FEATURE_COUNT] {
        crate::history::raw_features(&self.network, self.chunk_type, self.avg_file_size, self.file_count)
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Surviving entries with their similarity to the query.
    pub entries: Vec<(HistoryEntry, f64)>,
    /// Final threshold; `None` when the store was returned whole.
    pub threshold: Option<f64>,
    /// Fewer than `min_entries` survived.
    pub warning: bool,
}

/// Similarity of every entry to `query`, normalizing over the entries plus the query.
pub fn similarities(entries: &[HistoryEntry], query: &Query) -> Vec<f64> {
    let q = query.raw();
    let mut stats = FeatureStats::from_point(&q);
    for e in entries {
        stats.extend(&entry_features(e));
    }
    let qv = FeatureVector::from_raw(&q, &stats);
    entries
        .iter()
        .map(|e| similarity_total(&FeatureVector::from_raw(&entry_features(e), &stats), &qv))
        .collect()
}

/// Lowers the threshold from 0.99 in steps of 0.01 until at least
/// `min_entries` entries are at least that similar, stopping at 0.5.
pub fn filter_similar(entries: &[HistoryEntry], query: &Query, min_entries: usize) -> Result<FilterOutcome> {
    if entries.is_empty() {
        return Err(Error::InvalidInput("history is empty".into()));
    }
    if min_entries == 0 {
        return Err(Error::InvalidInput("min_entries must be at least 1".into()));
    }
    let sims = similarities(entries, query);
    if entries.len() < min_entries {
        return Ok(FilterOutcome {
            entries: entries.iter().cloned().zip(sims).collect(),
            threshold: None,
            warning: true,
        });
    }
    let mut pct = START_THRESHOLD_PCT;
    loop {
        let t = pct as f64 / 100.0;
        let count = sims.iter().filter(|&&s| s >= t).count();
        if count >= min_entries || pct == FLOOR_THRESHOLD_PCT {
            let kept = entries
                .iter()
                .zip(&sims)
                .filter(|(_, &s)| s >= t)
                .map(|(e, &s)| (e.clone(), s))
                .collect();
            return Ok(FilterOutcome {
                entries: kept,
                threshold: Some(t),
                warning: count < min_entries,
            });
        }
        pct -= 1;
    }
}

/// Entries from one sweep under one set of conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryGroup {
    pub session_id: String,
    pub network: NetworkProfile,
    pub chunk_type: ChunkType,
    pub avg_file_size: f64,
    pub file_count: u64,
    pub members: Vec<HistoryEntry>,
}

/// Partitions by session and features, dropping groups under [`MIN_GROUP`].
pub fn group_by_session(entries: &[HistoryEntry]) -> Vec<EntryGroup> {
    group_by_session_min(entries, MIN_GROUP)
}

pub fn group_by_session_min(entries: &[HistoryEntry], min_group: usize) -> Vec<EntryGroup> {
    type Key = (String, [u64; 3], u8, u64, u64);
    let mut groups: BTreeMap<Key, Vec<HistoryEntry>> = BTreeMap::new();
    for e in entries {
        let key = (
            e.session_id.clone(),
            [
                e.network.bandwidth_bps.to_bits(),
                e.network.rtt_s.to_bits(),
                e.network.buffer_bytes.to_bits(),
            ],
            e.chunk_type.code(),
            e.avg_file_size.to_bits(),
            e.file_count,
        );
        groups.entry(key).or_default().push(e.clone());
    }
    groups
        .into_values()
        .filter(|m| m.len() >= min_group)
        .map(|members| {
            let f = &members[0];
            EntryGroup {
                session_id: f.session_id.clone(),
                network: f.network,
                chunk_type: f.chunk_type,
                avg_file_size: f.avg_file_size,
                file_count: f.file_count,
                members,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ParamTriple;

    fn fv(v: [f64; 6]) -> FeatureVector {
        FeatureVector(v)
    }

    #[test]
    fn cosine_basics() {
        let a = fv([1.0, 2.0, 3.0, 0.0, 1.0, 1.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = fv([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = fv([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cosine_similarity(&b, &c).unwrap(), 0.0);
        let d = fv([1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((cosine_similarity(&b, &d).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(cosine_similarity(&b, &fv([0.0; 6])), Err(Error::ZeroVector)));
    }

    fn entry(session: &str, file_count: u64) -> HistoryEntry {
        HistoryEntry {
            source: "a".into(),
            destination: "b".into(),
            network: NetworkProfile::new(1e9, 0.02, 4.0 * 1048576.0).unwrap(),
            chunk_type: ChunkType::Small,
            avg_file_size: 1048576.0,
            file_count,
            params: ParamTriple::new(1, 1, 1).unwrap(),
            throughput: 1e8,
            collected_at: 0,
            session_id: session.into(),
        }
    }

    #[test]
    fn grouping_drops_strays() {
        let mut v: Vec<HistoryEntry> = (0..216).map(|_| entry("s1", 10)).collect();
        v.extend((0..10).map(|_| entry("s2", 10)));
        let g = group_by_session(&v);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members.len(), 216);
        assert!(group_by_session(&[]).is_empty());
    }

    #[test]
    fn small_store_returned_whole() {
        let v: Vec<HistoryEntry> = (0..300).map(|i| entry("s", 10 + i)).collect();
        let q = Query {
            network: v[0].network,
            chunk_type: ChunkType::Small,
            avg_file_size: 1048576.0,
            file_count: 10,
        };
        let out = filter_similar(&v, &q, 432).unwrap();
        assert_eq!(out.entries.len(), 300);
        assert!(out.warning);
    }
}
