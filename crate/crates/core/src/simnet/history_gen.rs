use super::scenario::SimScenario;
use super::simulate_transfer;
use crate::error::{Error, Result};
use crate::types::{Chunk, HistoryEntry, ParamTriple};

/// Labels and clock for synthetic history.
#[derive(Debug, Clone)]
pub struct HistoryGenOptions {
    pub source: String,
    pub destination: String,
    /// Timestamp of the first sweep, seconds since the epoch.
    pub start_epoch: i64,
    /// Spacing between consecutive sweeps.
    pub session_spacing: i64,
    /// Spacing between runs inside one sweep.
    pub entry_spacing: i64,
    pub seed: u64,
    pub session_prefix: String,
}

impl Default for HistoryGenOptions {
    fn default() -> Self {
        Self {
            source: "src".into(),
            destination: "dst".into(),
            start_epoch: 1_600_000_000,
            session_spacing: 6 * 3600,
            entry_spacing: 5,
            seed: 0,
            session_prefix: "sweep".into(),
        }
    }
}

/// Every power of two from 1 to 32 on each axis: 216 triples.
pub fn default_param_grid() -> Vec<ParamTriple> {
    const LEVELS: [u32; 6] = [1, 2, 4, 8, 16, 32];
    let mut grid = Vec::with_capacity(216);
    for cc in LEVELS {
        for p in LEVELS {
            for pp in LEVELS {
                grid.push(ParamTriple { cc, p, pp });
            }
        }
    }
    grid
}

/// Sweeps `param_grid` over every scenario and dataset, `repeats` times,
/// measuring each run with the simulator.
pub fn generate_history(
    scenarios: &[SimScenario],
    datasets: &[Chunk],
    param_grid: &[ParamTriple],
    repeats: usize,
    options: &HistoryGenOptions,
) -> Result<Vec<HistoryEntry>> {
    generate_history_with(scenarios, datasets, param_grid, repeats, options, |scenario, chunk, params| {
        let r = simulate_transfer(&[(chunk.clone(), params)], scenario, 0.0)?;
        Ok(r.aggregate_throughput)
    })
}

/// Same sweep as [`generate_history`] with a caller-supplied measurement.
///
/// `measure` receives the scenario with its seed already varied per run.
pub fn generate_history_with<F>(
    scenarios: &[SimScenario],
    datasets: &[Chunk],
    param_grid: &[ParamTriple],
    repeats: usize,
    options: &HistoryGenOptions,
    mut measure: F,
) -> Result<Vec<HistoryEntry>>
where
    F: FnMut(&SimScenario, &Chunk, ParamTriple) -> Result<f64>,
{
    if param_grid.is_empty() {
        return Err(Error::InvalidInput("parameter grid is empty".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(scenarios.len() * datasets.len() * param_grid.len() * repeats);
    let mut session = 0i64;
    for repeat in 0..repeats {
        for (si, scenario) in scenarios.iter().enumerate() {
            for (di, dataset) in datasets.iter().enumerate() {
                let session_id = format!("{}-{si}-{di}-{repeat}", options.session_prefix);
                let session_start = options.start_epoch + session * options.session_spacing;
                for (k, &params) in param_grid.iter().enumerate() {
                    let mut run = scenario.clone();
                    run.seed = mix_seed(&[options.seed, scenario.seed, si as u64, di as u64, repeat as u64, k as u64]);
                    let throughput = measure(&run, dataset, params)?;
                    let entry = HistoryEntry {
                        source: options.source.clone(),
                        destination: options.destination.clone(),
                        network: scenario.network,
                        chunk_type: dataset.chunk_type,
                        avg_file_size: dataset.avg_file_size,
                        file_count: dataset.file_count() as u64,
                        params,
                        throughput,
                        collected_at: session_start + k as i64 * options.entry_spacing,
                        session_id: session_id.clone(),
                    };
                    entry.validate()?;
                    out.push(entry);
                }
                session += 1;
            }
        }
    }
    Ok(out)
}

/// SplitMix64 over a list of words.
pub(crate) fn mix_seed(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ChunkType, MB};
    use std::collections::HashSet;

    #[test]
    fn grid_has_216_distinct_triples() {
        let g = default_param_grid();
        assert_eq!(g.len(), 216);
        assert_eq!(g.iter().collect::<HashSet<_>>().len(), 216);
    }

    #[test]
    fn counts_and_sessions() {
        let chunk = |t| Chunk::uniform(t, "d", 10, 10 * MB).unwrap();
        let scenarios: Vec<SimScenario> = [0, 16, 48]
            .iter()
            .map(|&bg| SimScenario::wan_default().with_constant_traffic(bg))
            .collect();
        let datasets: Vec<Chunk> = ChunkType::ALL.iter().map(|&t| chunk(t)).collect();
        let grid = default_param_grid();
        let opts = HistoryGenOptions::default();
        let entries = generate_history_with(&scenarios, &datasets, &grid, 5, &opts, |_, _, p| {
            Ok(p.cc as f64 * 1e6)
        })
        .unwrap();
        // Brute-force enumeration of the sweep space.
        let mut expected = 0;
        for _ in 0..scenarios.len() {
            for _ in 0..datasets.len() {
                for _ in 0..grid.len() {
                    for _ in 0..5 {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(entries.len(), expected);
        assert_eq!(entries.len(), 12_960);
        let sessions: HashSet<&str> = entries.iter().map(|e| e.session_id.as_str()).collect();
        assert_eq!(sessions.len(), 3 * 4 * 5);
    }

    #[test]
    fn single_sweep_is_one_session() {
        let chunk = Chunk::uniform(ChunkType::Medium, "d", 4, 100 * MB).unwrap();
        let entries = generate_history(
            &[SimScenario::wan_default()],
            &[chunk],
            &default_param_grid(),
            1,
            &HistoryGenOptions::default(),
        )
        .unwrap();
        assert_eq!(entries.len(), 216);
        let sessions: HashSet<&str> = entries.iter().map(|e| e.session_id.as_str()).collect();
        assert_eq!(sessions.len(), 1);
        assert!(entries.iter().all(|e| e.throughput > 0.0));
    }

    #[test]
    fn rejects_degenerate_sweeps() {
        let chunk = Chunk::uniform(ChunkType::Medium, "d", 4, 100 * MB).unwrap();
        let s = [SimScenario::wan_default()];
        let opts = HistoryGenOptions::default();
        assert!(generate_history(&s, &[chunk.clone()], &default_param_grid(), 0, &opts).is_err());
        assert!(generate_history(&s, &[chunk], &[], 1, &opts).is_err());
    }
}
