//! Domain types shared by every module.
//!
//! Units are fixed crate-wide: sizes in bytes, throughput in bits per second,
//! time in seconds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CC_MAX: u32 = 32;
pub const P_MAX: u32 = 32;
pub const PP_MAX: u32 = 32;

/// Upper bounds for the three tunables. Lower bounds are always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub cc_max: u32,
    pub p_max: u32,
    pub pp_max: u32,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            cc_max: CC_MAX,
            p_max: P_MAX,
            pp_max: PP_MAX,
        }
    }
}

impl ParamBounds {
    pub fn as_array(&self) -> [u32; 3] {
        [self.cc_max, self.p_max, self.pp_max]
    }

    pub fn contains(&self, params: ParamTriple) -> bool {
        (1..=self.cc_max).contains(&params.cc)
            && (1..=self.p_max).contains(&params.p)
            && (1..=self.pp_max).contains(&params.pp)
    }
}

/// Concurrency, parallelism and pipelining for one transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamTriple {
    pub cc: u32,
    pub p: u32,
    pub pp: u32,
}

impl ParamTriple {
    /// Builds a triple within the default 32/32/32 bounds.
    pub fn new(cc: u32, p: u32, pp: u32) -> Result<Self> {
        Self::within(cc, p, pp, &ParamBounds::default())
    }

    pub fn within(cc: u32, p: u32, pp: u32, bounds: &ParamBounds) -> Result<Self> {
        check("cc", cc, bounds.cc_max)?;
        check("p", p, bounds.p_max)?;
        check("pp", pp, bounds.pp_max)?;
        Ok(Self { cc, p, pp })
    }

    /// Rounds and clamps a real-valued point into the box.
    pub fn from_real(x: [f64; 3], bounds: &ParamBounds) -> Self {
        let snap = |v: f64, max: u32| -> u32 {
            let r = if v.is_finite() { (v + 0.5).floor() } else { 1.0 };
            r.clamp(1.0, max as f64) as u32
        };
        Self {
            cc: snap(x[0], bounds.cc_max),
            p: snap(x[1], bounds.p_max),
            pp: snap(x[2], bounds.pp_max),
        }
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.cc, self.p, self.pp]
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.cc as f64, self.p as f64, self.pp as f64]
    }

    /// Total TCP flows this triple opens.
    pub fn flows(&self) -> u32 {
        self.cc * self.p
    }

    pub fn with_cc(self, cc: u32) -> Self {
        Self { cc, ..self }
    }
}

fn check(name: &'static str, value: u32, max: u32) -> Result<()> {
    if value == 0 || value > max {
        return Err(Error::ParamOutOfRange { name, value, max });
    }
    Ok(())
}

impl fmt::Display for ParamTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.cc, self.p, self.pp)
    }
}

impl FromStr for ParamTriple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().trim_matches(|c| c == '(' || c == ')').split(',').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidInput(format!("expected cc,p,pp, got {s:?}")));
        }
        let mut v = [0u32; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad integer {part:?} in {s:?}")))?;
        }
        Self::new(v[0], v[1], v[2])
    }
}

/// Path characteristics of a source/destination pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub bandwidth_bps: f64,
    pub rtt_s: f64,
    pub buffer_bytes: f64,
}

impl NetworkProfile {
    /// Bandwidth and buffer must be positive. A zero RTT is accepted and
    /// describes an ideal, latency-free link.
    pub fn new(bandwidth_bps: f64, rtt_s: f64, buffer_bytes: f64) -> Result<Self> {
        let profile = Self {
            bandwidth_bps,
            rtt_s,
            buffer_bytes,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bps.is_finite() && self.bandwidth_bps > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth_bps
            )));
        }
        if !(self.rtt_s.is_finite() && self.rtt_s >= 0.0) {
            return Err(Error::InvalidNetwork(format!("rtt must be non-negative, got {}", self.rtt_s)));
        }
        if !(self.buffer_bytes.is_finite() && self.buffer_bytes > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "buffer size must be positive, got {}",
                self.buffer_bytes
            )));
        }
        Ok(())
    }

    /// Bandwidth-delay product in bytes.
    pub fn bdp(&self) -> f64 {
        self.bandwidth_bps / 8.0 * self.rtt_s
    }

    /// Throughput ceiling of a single TCP flow, bits per second.
    pub fn window_limit_bps(&self) -> f64 {
        if self.rtt_s > 0.0 {
            self.buffer_bytes * 8.0 / self.rtt_s
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FileInfo {
    pub path: String,
    pub size: u64,
}

impl FileInfo {
    pub fn new(path: impl Into<String>, size: u64) -> Result<Self> {
        let path = path.into();
        if size == 0 {
            return Err(Error::InvalidFile {
                path,
                reason: "size must be positive".into(),
            });
        }
        Ok(Self { path, size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChunkType {
    Tiny,
    Small,
    Medium,
    Large,
}

impl ChunkType {
    pub const ALL: [ChunkType; 4] = [Self::Tiny, Self::Small, Self::Medium, Self::Large];

    /// Ordinal code used as a similarity feature.
    pub fn code(self) -> u8 {
        match self {
            Self::Tiny => 1,
            Self::Small => 2,
            Self::Medium => 3,
            Self::Large => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tiny => "Tiny",
            Self::Small => "Small",
            Self::Medium => "Medium",
            Self::Large => "Large",
        }
    }
}

impl fmt::Display for ChunkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChunkType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Self::Tiny),
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            _ => Err(Error::InvalidInput(format!("unknown chunk type {s:?}"))),
        }
    }
}

/// Upper size bounds of each class as multiples of the BDP.
/// A size exactly on a bound belongs to the smaller class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkThresholds {
    pub tiny: f64,
    pub small: f64,
    pub medium: f64,
}

impl Default for ChunkThresholds {
    fn default() -> Self {
        Self {
            tiny: 0.05,
            small: 0.5,
            medium: 5.0,
        }
    }
}

pub fn classify_file(size: u64, network: &NetworkProfile) -> ChunkType {
    classify_with(size, network, &ChunkThresholds::default())
}

pub fn classify_with(size: u64, network: &NetworkProfile, thresholds: &ChunkThresholds) -> ChunkType {
    let bdp = network.bdp();
    let size = size as f64;
    if size <= thresholds.tiny * bdp {
        ChunkType::Tiny
    } else if size <= thresholds.small * bdp {
        ChunkType::Small
    } else if size <= thresholds.medium * bdp {
        ChunkType::Medium
    } else {
        ChunkType::Large
    }
}

/// A group of files of one size class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_type: ChunkType,
    pub files: Vec<FileInfo>,
    pub total_size: u64,
    pub avg_file_size: f64,
}

impl Chunk {
    pub fn new(chunk_type: ChunkType, files: Vec<FileInfo>) -> Result<Self> {
        if files.is_empty() {
            return Err(Error::InvalidInput(format!("{chunk_type} chunk has no files")));
        }
        let total_size: u64 = files.iter().map(|f| f.size).sum();
        let avg_file_size = total_size as f64 / files.len() as f64;
        Ok(Self {
            chunk_type,
            files,
            total_size,
            avg_file_size,
        })
    }

    /// `count` files of `size` bytes each, named `<prefix>/<i>`.
    pub fn uniform(chunk_type: ChunkType, prefix: &str, count: usize, size: u64) -> Result<Self> {
        let files = (0..count)
            .map(|i| FileInfo::new(format!("{prefix}/{i}"), size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(chunk_type, files)
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    /// True if every file falls in this chunk's class for `network`.
    pub fn is_consistent(&self, network: &NetworkProfile, thresholds: &ChunkThresholds) -> bool {
        self.files
            .iter()
            .all(|f| classify_with(f.size, network, thresholds) == self.chunk_type)
    }
}

/// Splits a file list into per-class chunks, smallest class first.
/// Classes with no files are omitted.
pub fn partition_files(
    files: &[FileInfo],
    network: &NetworkProfile,
    thresholds: &ChunkThresholds,
) -> Vec<Chunk> {
    let mut buckets: [Vec<FileInfo>; 4] = Default::default();
    for f in files {
        let t = classify_with(f.size, network, thresholds);
        buckets[t.code() as usize - 1].push(f.clone());
    }
    ChunkType::ALL
        .iter()
        .zip(buckets)
        .filter(|(_, files)| !files.is_empty())
        .map(|(&t, files)| Chunk::new(t, files).expect("bucket is non-empty"))
        .collect()
}

/// One logged transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub source: String,
    pub destination: String,
    pub network: NetworkProfile,
    pub chunk_type: ChunkType,
    pub avg_file_size: f64,
    pub file_count: u64,
    pub params: ParamTriple,
    pub throughput: f64,
    /// Seconds since the Unix epoch.
    pub collected_at: i64,
    pub session_id: String,
}

impl HistoryEntry {
    pub fn validate(&self) -> Result<()> {
        self.network
            .validate()
            .map_err(|e| Error::InvalidEntry(e.to_string()))?;
        if !(self.throughput.is_finite() && self.throughput > 0.0) {
            return Err(Error::InvalidEntry(format!(
                "throughput must be positive, got {}",
                self.throughput
            )));
        }
        if self.file_count == 0 {
            return Err(Error::InvalidEntry("file_count must be at least 1".into()));
        }
        if !(self.avg_file_size.is_finite() && self.avg_file_size > 0.0) {
            return Err(Error::InvalidEntry(format!(
                "avg_file_size must be positive, got {}",
                self.avg_file_size
            )));
        }
        if !ParamBounds::default().contains(self.params) {
            return Err(Error::InvalidEntry(format!("params {} out of range", self.params)));
        }
        Ok(())
    }
}

/// Optimizer output for one chunk as consumed by the scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkDecision {
    pub params: ParamTriple,
    /// Estimated throughput at concurrency 1.
    pub unit_throughput: f64,
    pub estimated_throughput: f64,
}

impl ChunkDecision {
    pub fn new(params: ParamTriple, unit_throughput: f64, estimated_throughput: f64) -> Result<Self> {
        if !(unit_throughput.is_finite() && unit_throughput > 0.0) {
            return Err(Error::InvalidInput(format!(
                "unit throughput must be positive, got {unit_throughput}"
            )));
        }
        Ok(Self {
            params,
            unit_throughput,
            estimated_throughput,
        })
    }
}

pub const KB: u64 = 1 << 10;
pub const MB: u64 = 1 << 20;
pub const GB: u64 = 1 << 30;
