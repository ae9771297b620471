//! Deterministic transfer simulator.
//!
//! The throughput model is deliberately simple: a per-flow rate of
//! `min(buffer/rtt, bandwidth / (foreground + background flows))`, a
//! slow-start ramp per channel, a storage ceiling indexed by the number of
//! busy channels, a per-file command latency divided by the pipelining depth
//! and a pipelining imbalance penalty. It is enough to reproduce the effects
//! the tuner exploits: parallel streams beat buffer limits, concurrency
//! saturates storage, pipelining hides latency on small files and hurts at
//! high concurrency.

mod config;
mod engine;
mod executor;
mod history_gen;
mod penalty;
mod scenario;

use std::io::Write;

pub use config::{load_scenario, parse_scenario, ScenarioFile, SweepDataset};
pub use engine::{Engine, TimelinePoint, TICK};
pub use executor::SimExecutor;
pub use history_gen::{default_param_grid, generate_history, generate_history_with, HistoryGenOptions};
pub use penalty::{pipelining_imbalance_penalty, PENALTY_FLOOR};
pub use scenario::{FsProfile, SimScenario, TrafficInterval};

use crate::error::{Error, Result};
use crate::types::{Chunk, ParamBounds, ParamTriple};

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub aggregate_throughput: f64,
    pub duration: f64,
    pub total_bytes: f64,
    pub timeline: Vec<TimelinePoint>,
    /// Peak number of foreground flows.
    pub flows_used: u32,
}

impl SimResult {
    /// Builds a result from delivered bytes over `[start, end]` and a tick timeline.
    pub fn from_parts(total_bytes: f64, start: f64, end: f64, timeline: Vec<TimelinePoint>) -> Self {
        let duration = (end - start).max(0.0);
        let aggregate_throughput = if duration > 0.0 {
            total_bytes * 8.0 / duration
        } else {
            0.0
        };
        let flows_used = timeline.iter().map(|p| p.flows).max().unwrap_or(0);
        Self {
            aggregate_throughput,
            duration,
            total_bytes,
            timeline,
            flows_used,
        }
    }

    /// Writes the timeline as `t_s,throughput_bps,flows`.
    pub fn write_timeline_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_s,throughput_bps,flows")?;
        for p in &self.timeline {
            writeln!(out, "{:.1},{:.3},{}", p.t, p.throughput_bps, p.flows)?;
        }
        Ok(())
    }
}

/// Runs every chunk concurrently from `start` until all are delivered.
pub fn simulate_transfer(
    chunks: &[(Chunk, ParamTriple)],
    scenario: &SimScenario,
    start: f64,
) -> Result<SimResult> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("no chunks to simulate".into()));
    }
    let bounds = ParamBounds::default();
    for (chunk, params) in chunks {
        if chunk.files.is_empty() {
            return Err(Error::InvalidInput("empty chunk".into()));
        }
        if !bounds.contains(*params) {
            return Err(Error::ParamOutOfRange {
                name: "params",
                value: params.cc.max(params.p).max(params.pp),
                max: 32,
            });
        }
    }
    let mut engine = Engine::new(scenario.clone(), start)?;
    let ids = chunks
        .iter()
        .map(|(c, p)| engine.launch(c, *p))
        .collect::<Result<Vec<_>>>()?;
    engine.run_to_completion()?;
    let mut bytes = 0.0;
    let mut end = start;
    for id in ids {
        let s = engine.summary(id)?;
        bytes += s.bytes;
        end = end.max(s.ended.unwrap_or(start));
    }
    Ok(SimResult::from_parts(bytes, start, end, engine.take_timeline()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ChunkType, NetworkProfile, GB, MB};

    fn quiet(mut s: SimScenario) -> SimScenario {
        s.noise_sigma = 0.0;
        s
    }

    #[test]
    fn unconstrained_link() {
        let mut s = quiet(SimScenario::new(NetworkProfile::new(10e9, 0.0, 64.0 * MB as f64).unwrap()));
        s.slow_start_tau = 0.0;
        let chunk = Chunk::uniform(ChunkType::Large, "f", 1, 1_000_000_000).unwrap();
        let r = simulate_transfer(&[(chunk, ParamTriple::new(1, 1, 1).unwrap())], &s, 0.0).unwrap();
        assert!((r.duration - 0.8).abs() < 1e-9, "{}", r.duration);
        assert!((r.aggregate_throughput - 10e9).abs() / 10e9 < 1e-9);
    }

    #[test]
    fn pipelining_amortizes_control_latency() {
        let s = quiet(SimScenario::new(NetworkProfile::new(10e9, 0.040, 32.0 * MB as f64).unwrap()));
        let chunk = Chunk::uniform(ChunkType::Tiny, "f", 1000, MB).unwrap();
        let run = |pp| {
            simulate_transfer(&[(chunk.clone(), ParamTriple::new(1, 1, pp).unwrap())], &s, 0.0)
                .unwrap()
                .aggregate_throughput
        };
        assert!(run(16) > run(1));
    }

    #[test]
    fn rejects_bad_input() {
        let s = SimScenario::wan_default();
        assert!(simulate_transfer(&[], &s, 0.0).is_err());
        let mut bad = s.clone();
        bad.network.bandwidth_bps = 0.0;
        let chunk = Chunk::uniform(ChunkType::Large, "f", 1, GB).unwrap();
        assert!(simulate_transfer(&[(chunk, ParamTriple::new(1, 1, 1).unwrap())], &bad, 0.0).is_err());
    }

    #[test]
    fn aggregate_matches_bytes_over_duration() {
        let s = SimScenario::wan_default().with_constant_traffic(16).with_seed(3);
        let chunk = Chunk::uniform(ChunkType::Medium, "f", 40, 100 * MB).unwrap();
        let r = simulate_transfer(&[(chunk.clone(), ParamTriple::new(4, 4, 2).unwrap())], &s, 0.0).unwrap();
        let expect = chunk.total_size as f64 * 8.0 / r.duration;
        assert!((r.aggregate_throughput - expect).abs() / expect < 1e-3);
        assert!((r.total_bytes - chunk.total_size as f64).abs() < 1.0);
    }

    #[test]
    fn timeline_csv_header() {
        let s = SimScenario::wan_default();
        let chunk = Chunk::uniform(ChunkType::Medium, "f", 2, 100 * MB).unwrap();
        let r = simulate_transfer(&[(chunk, ParamTriple::new(2, 1, 1).unwrap())], &s, 0.0).unwrap();
        let mut buf = Vec::new();
        r.write_timeline_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,throughput_bps,flows\n"));
        assert_eq!(text.lines().count(), r.timeline.len() + 1);
    }
}
