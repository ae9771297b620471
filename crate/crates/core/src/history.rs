//! History log persistence.
//!
//! One JSON object per line with the keys, in order: `source`, `destination`,
//! `bandwidth_bps`, `rtt_s`, `buffer_bytes`, `chunk_type`,
//! `avg_file_size_bytes`, `file_count`, `cc`, `p`, `pp`, `throughput_bps`,
//! `collected_at`, `session_id`. Blank lines are ignored.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ChunkType, HistoryEntry, NetworkProfile, ParamTriple};

/// Entries without a session id that share a dataset and fall within this
/// many seconds of the bucket's first entry are treated as one sweep.
pub const SESSION_WINDOW_S: i64 = 30 * 60;

pub const FEATURE_COUNT: usize = 6;

/// Raw similarity features: bandwidth, rtt, bdp/buffer, chunk type code,
/// average file size, file count.
pub fn raw_features(
    network: &NetworkProfile,
    chunk_type: ChunkType,
    avg_file_size: f64,
    file_count: u64,
) -> [f64; FEATURE_COUNT] {
    [
        network.bandwidth_bps,
        network.rtt_s,
        network.bdp() / network.buffer_bytes,
        chunk_type.code() as f64,
        avg_file_size,
        file_count as f64,
    ]
}

pub fn entry_features(e: &HistoryEntry) -> [f64; FEATURE_COUNT] {
    raw_features(&e.network, e.chunk_type, e.avg_file_size, e.file_count)
}

/// Per-feature `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub min: [f64; FEATURE_COUNT],
    pub max: [f64; FEATURE_COUNT],
}

impl FeatureStats {
    pub fn from_point(x: &[f64; FEATURE_COUNT]) -> Self {
        Self { min: *x, max: *x }
    }

    pub fn extend(&mut self, x: &[f64; FEATURE_COUNT]) {
        for i in 0..FEATURE_COUNT {
            self.min[i] = self.min[i].min(x[i]);
            self.max[i] = self.max[i].max(x[i]);
        }
    }

    pub fn of_entries(entries: &[HistoryEntry]) -> Option<Self> {
        let mut it = entries.iter().map(entry_features);
        let mut s = Self::from_point(&it.next()?);
        for x in it {
            s.extend(&x);
        }
        Some(s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    source: String,
    destination: String,
    bandwidth_bps: f64,
    rtt_s: f64,
    buffer_bytes: f64,
    chunk_type: ChunkType,
    avg_file_size_bytes: f64,
    file_count: u64,
    cc: u32,
    p: u32,
    pp: u32,
    throughput_bps: f64,
    collected_at: i64,
    #[serde(default)]
    session_id: Option<String>,
}

impl From<&HistoryEntry> for Record {
    fn from(e: &HistoryEntry) -> Self {
        Record {
            source: e.source.clone(),
            destination: e.destination.clone(),
            bandwidth_bps: e.network.bandwidth_bps,
            rtt_s: e.network.rtt_s,
            buffer_bytes: e.network.buffer_bytes,
            chunk_type: e.chunk_type,
            avg_file_size_bytes: e.avg_file_size,
            file_count: e.file_count,
            cc: e.params.cc,
            p: e.params.p,
            pp: e.params.pp,
            throughput_bps: e.throughput,
            collected_at: e.collected_at,
            session_id: Some(e.session_id.clone()),
        }
    }
}

impl Record {
    fn into_entry(self) -> HistoryEntry {
        HistoryEntry {
            source: self.source,
            destination: self.destination,
            network: NetworkProfile {
                bandwidth_bps: self.bandwidth_bps,
                rtt_s: self.rtt_s,
                buffer_bytes: self.buffer_bytes,
            },
            chunk_type: self.chunk_type,
            avg_file_size: self.avg_file_size_bytes,
            file_count: self.file_count,
            params: ParamTriple {
                cc: self.cc,
                p: self.p,
                pp: self.pp,
            },
            throughput: self.throughput_bps,
            collected_at: self.collected_at,
            session_id: self.session_id.unwrap_or_default(),
        }
    }
}

/// Serializes one entry as a history line (no trailing newline).
pub fn to_line(entry: &HistoryEntry) -> String {
    serde_json::to_string(&Record::from(entry)).expect("record serializes")
}

/// Parses one history line. An absent or empty `session_id` comes back empty.
pub fn parse_line(line: &str, line_no: usize) -> Result<HistoryEntry> {
    let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let entry = rec.into_entry();
    entry.validate().map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    Ok(entry)
}

#[derive(Debug, Clone, Default)]
pub struct HistoryStore {
    entries: Vec<HistoryEntry>,
    stats: Option<FeatureStats>,
    path: Option<PathBuf>,
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// In-memory store over `entries`, all of which must be valid.
    pub fn from_entries(entries: Vec<HistoryEntry>) -> Result<Self> {
        for e in &entries {
            e.validate()?;
        }
        let stats = FeatureStats::of_entries(&entries);
        Ok(Self {
            entries,
            stats,
            path: None,
        })
    }

    /// Reads a history file. Later appends are written back to the same file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(parse_line(&line, i + 1)?);
        }
        assign_missing_sessions(&mut entries);
        let stats = FeatureStats::of_entries(&entries);
        Ok(Self {
            entries,
            stats,
            path: Some(path.to_path_buf()),
        })
    }

    /// Writes every entry to `path`, replacing its contents.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{}", to_line(e))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn bind(&mut self, path: impl Into<PathBuf>) {
        self.path = Some(path.into());
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn feature_stats(&self) -> Option<FeatureStats> {
        self.stats
    }

    /// Adds entries, writing them to the bound file if there is one.
    ///
    /// Nothing is added if any entry is invalid.
    pub fn append(&mut self, entries: &[HistoryEntry]) -> Result<()> {
        for e in entries {
            e.validate()?;
        }
        if let Some(path) = &self.path {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut w = BufWriter::new(file);
            for e in entries {
                writeln!(w, "{}", to_line(e))?;
            }
            w.flush()?;
        }
        for e in entries {
            let x = entry_features(e);
            match &mut self.stats {
                Some(s) => s.extend(&x),
                None => self.stats = Some(FeatureStats::from_point(&x)),
            }
            self.entries.push(e.clone());
        }
        Ok(())
    }

    /// Keeps entries collected at or after `cutoff`.
    pub fn prune_older_than(&mut self, cutoff: i64) {
        self.entries.retain(|e| e.collected_at >= cutoff);
        self.stats = FeatureStats::of_entries(&self.entries);
    }
}

/// Buckets entries with an empty session id by dataset and collection time.
pub fn assign_missing_sessions(entries: &mut [HistoryEntry]) {
    type Key = (String, String, u8, u64, u64);
    let mut by_key: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.session_id.is_empty() {
            let key = (
                e.source.clone(),
                e.destination.clone(),
                e.chunk_type.code(),
                e.avg_file_size.to_bits(),
                e.file_count,
            );
            by_key.entry(key).or_default().push(i);
        }
    }
    let mut next = 0usize;
    for idx in by_key.values_mut() {
        idx.sort_by_key(|&i| (entries[i].collected_at, i));
        let mut bucket_start: Option<i64> = None;
        for &i in idx.iter() {
            let t = entries[i].collected_at;
            if bucket_start.is_none_or(|s| t - s > SESSION_WINDOW_S) {
                bucket_start = Some(t);
                next += 1;
            }
            entries[i].session_id = format!("auto-{next}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(t: i64, thr: f64) -> HistoryEntry {
        HistoryEntry {
            source: "a".into(),
            destination: "b".into(),
            network: NetworkProfile::new(1e9, 0.02, 4.0 * 1048576.0).unwrap(),
            chunk_type: ChunkType::Small,
            avg_file_size: 1048576.0,
            file_count: 10,
            params: ParamTriple::new(2, 2, 2).unwrap(),
            throughput: thr,
            collected_at: t,
            session_id: "s".into(),
        }
    }

    #[test]
    fn line_has_fixed_key_order() {
        let line = to_line(&entry(5, 1e8));
        let keys = [
            "source",
            "destination",
            "bandwidth_bps",
            "rtt_s",
            "buffer_bytes",
            "chunk_type",
            "avg_file_size_bytes",
            "file_count",
            "cc",
            "p",
            "pp",
            "throughput_bps",
            "collected_at",
            "session_id",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| line.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
    }

    #[test]
    fn missing_field_is_named() {
        let line = to_line(&entry(5, 1e8)).replace("\"throughput_bps\":100000000.0,", "");
        let err = parse_line(&line, 7).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("throughput_bps"), "{err}");
    }

    #[test]
    fn append_updates_stats() {
        let mut s = HistoryStore::from_entries(vec![entry(0, 1e8)]).unwrap();
        let mut wide = entry(1, 2e8);
        wide.file_count = 500;
        s.append(&[wide.clone(), wide]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.feature_stats().unwrap().max[5], 500.0);
        assert!(s.append(&[entry(2, 0.0)]).is_err());
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn buckets_entries_without_session() {
        let mut v: Vec<HistoryEntry> = [0, 600, 1700, 1900, 5000]
            .iter()
            .map(|&t| {
                let mut e = entry(t, 1e8);
                e.session_id.clear();
                e
            })
            .collect();
        assign_missing_sessions(&mut v);
        assert_eq!(v[0].session_id, v[1].session_id);
        assert_eq!(v[1].session_id, v[2].session_id);
        assert_ne!(v[2].session_id, v[3].session_id);
        assert_ne!(v[3].session_id, v[4].session_id);
    }
}
