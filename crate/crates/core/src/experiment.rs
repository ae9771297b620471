//! Seeded experiment runs shared by the command line and the test suites.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::online::{run_online, DecisionRow, OnlineConfig};
use crate::scheduler::{execute_sequential, run_baseline, Harp, HarpConfig, RunReport, Strategy};
use crate::simnet::{simulate_transfer, SimExecutor, SimScenario, TimelinePoint};
use crate::types::{partition_files, Chunk, ChunkThresholds, FileInfo, HistoryEntry, NetworkProfile, ParamTriple};

/// Background flows for each named load level.
pub const TRAFFIC_PRESETS: [(&str, u32); 3] = [("light", 0), ("medium", 16), ("heavy", 48)];

pub fn traffic_preset(name: &str) -> Result<u32> {
    TRAFFIC_PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, bg)| *bg)
        .ok_or_else(|| Error::InvalidInput(format!("unknown traffic level {name:?} (light, medium, heavy)")))
}

/// Reads `path size_bytes` lines into per-class chunks. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, network: &NetworkProfile) -> Result<Vec<Chunk>> {
    let mut files = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let (path, size) = line
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| parse_err("expected \"path size_bytes\"".into()))?;
        let size: u64 = size
            .parse()
            .map_err(|_| parse_err(format!("bad size {size:?}")))?;
        files.push(FileInfo::new(path.trim_end(), size).map_err(|e| parse_err(e.to_string()))?);
    }
    if files.is_empty() {
        return Err(Error::InvalidInput("manifest lists no files".into()));
    }
    Ok(partition_files(&files, network, &ChunkThresholds::default()))
}

/// The same scenario under each traffic preset.
pub fn traffic_variants(base: &SimScenario) -> Vec<SimScenario> {
    TRAFFIC_PRESETS
        .iter()
        .map(|&(_, bg)| base.clone().with_constant_traffic(bg))
        .collect()
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub online: bool,
    pub report: RunReport,
    pub timeline: Vec<TimelinePoint>,
    /// Online decisions, when tuning online.
    pub decisions: Vec<DecisionRow>,
}

/// Runs one strategy on a fresh simulator from time zero.
pub fn run_strategy(
    strategy: Strategy,
    scenario: &SimScenario,
    chunks: &[Chunk],
    history: &[HistoryEntry],
    config: &HarpConfig,
    online: Option<&OnlineConfig>,
) -> Result<StrategyRun> {
    let mut ex = SimExecutor::new(scenario.clone(), 0.0)?;
    let network = scenario.network;
    let mut decisions = Vec::new();
    let report = match (strategy, online) {
        (Strategy::Harp, None) => Harp::new(history, config.clone()).run(&mut ex, chunks, &network)?.run,
        (Strategy::Harp, Some(oc)) => {
            let r = run_online(&Harp::new(history, config.clone()), &mut ex, chunks, &network, oc)?;
            decisions = r.log;
            r.run
        }
        (s, None) => run_baseline(&mut ex, s, chunks, &network)?,
        (s, Some(_)) => return Err(Error::InvalidInput(format!("online tuning needs the tuner, not {s}"))),
    };
    Ok(StrategyRun {
        strategy,
        online: online.is_some(),
        report,
        timeline: ex.take_timeline(),
        decisions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub strategy: Strategy,
    pub throughput: f64,
    pub duration: f64,
    pub params: Vec<ParamTriple>,
}

pub fn compare(
    strategies: &[Strategy],
    scenario: &SimScenario,
    chunks: &[Chunk],
    history: &[HistoryEntry],
    config: &HarpConfig,
) -> Result<Vec<CompareRow>> {
    strategies
        .iter()
        .map(|&s| {
            let run = run_strategy(s, scenario, chunks, history, config, None)?;
            Ok(CompareRow {
                strategy: s,
                throughput: run.report.throughput(),
                duration: run.report.duration(),
                params: run.report.params.iter().map(|p| p.1).collect(),
            })
        })
        .collect()
}

pub fn format_compare(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:>10} {:>10}  params", "strategy", "gbps", "seconds");
    for r in rows {
        let params: Vec<String> = r.params.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(
            out,
            "{:<8} {:>10.3} {:>10.1}  {}",
            r.strategy.name(),
            r.throughput / 1e9,
            r.duration,
            params.join(" ")
        );
    }
    out
}

/// Parameter values the oracle tries on each axis.
pub const ORACLE_LEVELS: [u32; 10] = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub throughput: f64,
    pub duration: f64,
    pub params: Vec<ParamTriple>,
}

/// Best single-chunk throughput over `grid`, simulated without probing.
pub fn best_on_grid(scenario: &SimScenario, chunk: &Chunk, grid: &[ParamTriple]) -> Result<(ParamTriple, f64)> {
    let mut best: Option<(ParamTriple, f64)> = None;
    for &p in grid {
        let thr = simulate_transfer(&[(chunk.clone(), p)], scenario, 0.0)?.aggregate_throughput;
        if best.is_none_or(|b| thr > b.1) {
            best = Some((p, thr));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty oracle grid".into()))
}

pub fn oracle_grid() -> Vec<ParamTriple> {
    let mut grid = Vec::with_capacity(ORACLE_LEVELS.len().pow(3));
    for cc in ORACLE_LEVELS {
        for p in ORACLE_LEVELS {
            for pp in ORACLE_LEVELS {
                grid.push(ParamTriple { cc, p, pp });
            }
        }
    }
    grid
}

/// Hindsight reference: every chunk with its best grid triple, found by
/// exhaustive simulation, run one after another with no probing cost.
pub fn grid_oracle(scenario: &SimScenario, chunks: &[Chunk], grid: &[ParamTriple]) -> Result<OracleResult> {
    let mut plan = Vec::with_capacity(chunks.len());
    for c in chunks {
        let (p, _) = best_on_grid(scenario, c, grid)?;
        plan.push((c.clone(), p));
    }
    let mut ex = SimExecutor::new(scenario.clone(), 0.0)?;
    let start = ex.now();
    let r = execute_sequential(&mut ex, &plan)?;
    let bytes: f64 = chunks.iter().map(|c| c.total_size as f64).sum();
    let duration = r.end - start;
    Ok(OracleResult {
        throughput: if duration > 0.0 { bytes * 8.0 / duration } else { 0.0 },
        duration,
        params: plan.into_iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ChunkType, MB};

    #[test]
    fn presets() {
        assert_eq!(traffic_preset("light").unwrap(), 0);
        assert_eq!(traffic_preset("Heavy").unwrap(), 48);
        assert!(traffic_preset("storm").is_err());
    }

    #[test]
    fn manifest_partitions_by_class() {
        let net = SimScenario::wan_default().network;
        let text = "# dataset\na/1 1048576\nb c/2 1048576\n\nbig 2147483648\n";
        let chunks = parse_manifest(text, &net).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].chunk_type, ChunkType::Tiny);
        assert_eq!(chunks[0].files[1].path, "b c/2");
        assert_eq!(chunks[1].total_size, 2048 * MB);
        match parse_manifest("ok 10\nbroken\n", &net) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_manifest("x -4\n", &net).is_err());
        assert!(parse_manifest("\n", &net).is_err());
    }

    #[test]
    fn online_needs_the_tuner() {
        let s = SimScenario::wan_default();
        let c = Chunk::uniform(ChunkType::Large, "f", 1, 4096 * MB).unwrap();
        let r = run_strategy(Strategy::Go, &s, &[c], &[], &HarpConfig::default(), Some(&OnlineConfig::default()));
        assert!(r.is_err());
    }
}
