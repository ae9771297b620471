//! Scenario files.
//!
//! A scenario is a single TOML document:
//!
//! ```toml
//! preset = "wan"            # optional; start from SimScenario::wan_default()
//! bandwidth_bps = 10e9      # required without a preset
//! rtt_s = 0.04
//! buffer_bytes = 33554432
//! control_latency_s = 0.04  # optional, defaults to rtt_s
//! slow_start_tau_s = 1.0
//! noise_sigma = 0.05
//! conn_setup_s = 2.0
//! seed = 7
//! fs_profile = [[1, 1.6e8], [16, 1.25e9]]   # (concurrent ops, bytes/s)
//! source = "siteA"
//! destination = "siteB"
//!
//! [[traffic]]
//! start_s = 0.0
//! end_s = 600.0
//! bg_flows = 16
//!
//! [[sweep]]                 # datasets for history generation
//! file_count = 500
//! file_size_bytes = 2097152
//! chunk_type = "Tiny"       # optional, classified from size otherwise
//! ```

use std::path::Path;

use serde::Deserialize;

use super::scenario::{FsProfile, SimScenario, TrafficInterval};
use crate::error::{Error, Result};
use crate::types::{classify_file, Chunk, ChunkType, NetworkProfile, MB};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    bandwidth_bps: Option<f64>,
    rtt_s: Option<f64>,
    buffer_bytes: Option<f64>,
    control_latency_s: Option<f64>,
    slow_start_tau_s: Option<f64>,
    noise_sigma: Option<f64>,
    conn_setup_s: Option<f64>,
    seed: Option<u64>,
    fs_profile: Option<Vec<(u32, f64)>>,
    source: Option<String>,
    destination: Option<String>,
    #[serde(default)]
    traffic: Vec<RawTraffic>,
    #[serde(default)]
    sweep: Vec<SweepDataset>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    start_s: f64,
    end_s: Option<f64>,
    bg_flows: u32,
}

/// A homogeneous dataset swept during history generation.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDataset {
    pub file_count: usize,
    pub file_size_bytes: u64,
    pub chunk_type: Option<ChunkType>,
}

impl SweepDataset {
    pub fn to_chunk(&self, network: &NetworkProfile, label: &str) -> Result<Chunk> {
        if self.file_count == 0 {
            return Err(Error::InvalidScenario("sweep dataset has no files".into()));
        }
        let t = self
            .chunk_type
            .unwrap_or_else(|| classify_file(self.file_size_bytes, network));
        Chunk::uniform(t, label, self.file_count, self.file_size_bytes)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub scenario: SimScenario,
    pub sweep: Vec<SweepDataset>,
    pub source: String,
    pub destination: String,
}

impl ScenarioFile {
    /// Sweep datasets as chunks; a single 20 x 100 MiB dataset when none are listed.
    pub fn sweep_chunks(&self) -> Result<Vec<Chunk>> {
        let defaults = [SweepDataset {
            file_count: 20,
            file_size_bytes: 100 * MB,
            chunk_type: None,
        }];
        let list: &[SweepDataset] = if self.sweep.is_empty() { &defaults } else { &self.sweep };
        list.iter()
            .enumerate()
            .map(|(i, d)| d.to_chunk(&self.scenario.network, &format!("sweep{i}")))
            .collect()
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let mut scenario = match raw.preset.as_deref() {
        Some("wan") => SimScenario::wan_default(),
        Some(other) => return Err(Error::InvalidScenario(format!("unknown preset {other:?}"))),
        None => {
            let missing = |name: &str| Error::InvalidScenario(format!("missing field {name}"));
            let network = NetworkProfile {
                bandwidth_bps: raw.bandwidth_bps.ok_or_else(|| missing("bandwidth_bps"))?,
                rtt_s: raw.rtt_s.ok_or_else(|| missing("rtt_s"))?,
                buffer_bytes: raw.buffer_bytes.ok_or_else(|| missing("buffer_bytes"))?,
            };
            SimScenario::new(network)
        }
    };
    if let Some(v) = raw.bandwidth_bps {
        scenario.network.bandwidth_bps = v;
    }
    if let Some(v) = raw.rtt_s {
        scenario.network.rtt_s = v;
    }
    if let Some(v) = raw.buffer_bytes {
        scenario.network.buffer_bytes = v;
    }
    if raw.control_latency_s.is_some() {
        scenario.control_latency = raw.control_latency_s;
    }
    if let Some(v) = raw.slow_start_tau_s {
        scenario.slow_start_tau = v;
    }
    if let Some(v) = raw.noise_sigma {
        scenario.noise_sigma = v;
    }
    if let Some(v) = raw.conn_setup_s {
        scenario.conn_setup = v;
    }
    if let Some(v) = raw.seed {
        scenario.seed = v;
    }
    if let Some(points) = raw.fs_profile {
        scenario.fs_profile = FsProfile::new(points)?;
    }
    if !raw.traffic.is_empty() {
        scenario.traffic = raw
            .traffic
            .iter()
            .map(|t| TrafficInterval {
                start: t.start_s,
                end: t.end_s.unwrap_or(f64::INFINITY),
                bg_flows: t.bg_flows,
            })
            .collect();
    }
    scenario.validate()?;
    Ok(ScenarioFile {
        scenario,
        sweep: raw.sweep,
        source: raw.source.unwrap_or_else(|| "src".into()),
        destination: raw.destination.unwrap_or_else(|| "dst".into()),
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_document() {
        let f = parse_scenario(
            r#"
            bandwidth_bps = 1e9
            rtt_s = 0.0002
            buffer_bytes = 4194304
            noise_sigma = 0.0
            seed = 9
            fs_profile = [[1, 9.0e7]]
            [[traffic]]
            start_s = 0.0
            end_s = 30.0
            bg_flows = 4
            [[sweep]]
            file_count = 3
            file_size_bytes = 1000
            chunk_type = "Small"
            "#,
        )
        .unwrap();
        assert_eq!(f.scenario.network.bandwidth_bps, 1e9);
        assert_eq!(f.scenario.seed, 9);
        assert_eq!(f.scenario.bg_flows_at(10.0), 4);
        assert_eq!(f.scenario.bg_flows_at(31.0), 0);
        let chunks = f.sweep_chunks().unwrap();
        assert_eq!(chunks[0].chunk_type, ChunkType::Small);
        assert_eq!(chunks[0].file_count(), 3);
    }

    #[test]
    fn preset_and_defaults() {
        let f = parse_scenario("preset = \"wan\"\nseed = 2\n").unwrap();
        assert_eq!(f.scenario.network, SimScenario::wan_default().network);
        assert_eq!(f.sweep_chunks().unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_scenario("rtt_s = 0.1\nbuffer_bytes = 1.0\n").is_err());
        assert!(parse_scenario("preset = \"moon\"\n").is_err());
        assert!(parse_scenario("preset = \"wan\"\nbogus = 1\n").is_err());
        assert!(parse_scenario("preset = \"wan\"\nbandwidth_bps = 0.0\n").is_err());
    }
}
