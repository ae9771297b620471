//! Reference strategies the tuner is compared against.

use std::fmt;
use std::str::FromStr;

use super::{execute_plan, execute_sequential, heuristic_params, ceil_tolerant, clamp_param, RunReport};
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::types::{Chunk, NetworkProfile, ParamBounds, ParamTriple, MB};

/// Concurrency cap a user would hand to SC and ProMC.
pub const DEFAULT_USER_MAX_CC: u32 = 10;

/// Seconds each PCP probe runs.
pub const PCP_PROBE_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Harp,
    Go,
    Sc,
    ProMc,
    Pcp,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Harp, Strategy::Go, Strategy::Sc, Strategy::ProMc, Strategy::Pcp];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Harp => "harp",
            Strategy::Go => "go",
            Strategy::Sc => "sc",
            Strategy::ProMc => "promc",
            Strategy::Pcp => "pcp",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy {s:?}")))
    }
}

/// Fixed table by average file size: below 50 MiB, up to 250 MiB, above.
pub fn go_params(chunk: &Chunk) -> ParamTriple {
    let avg = chunk.avg_file_size;
    if avg < 50.0 * MB as f64 {
        ParamTriple { cc: 2, p: 2, pp: 8 }
    } else if avg <= 250.0 * MB as f64 {
        ParamTriple { cc: 2, p: 2, pp: 2 }
    } else {
        ParamTriple { cc: 2, p: 4, pp: 1 }
    }
}

/// Heuristic parameters with concurrency `ceil(total / BDP)` under the user cap.
fn sc_params(chunk: &Chunk, network: &NetworkProfile, max_cc: u32) -> ParamTriple {
    let h = heuristic_params(chunk, network, &ParamBounds::default());
    let cc = clamp_param(ceil_tolerant(chunk.total_size as f64 / network.bdp()), max_cc);
    ParamTriple { cc, ..h }
}

fn promc_plan(chunks: &[Chunk], network: &NetworkProfile, max_cc: u32) -> Vec<(Chunk, ParamTriple)> {
    let total: f64 = chunks.iter().map(|c| c.total_size as f64).sum();
    chunks
        .iter()
        .map(|c| {
            let h = heuristic_params(c, network, &ParamBounds::default());
            let share = max_cc as f64 * c.total_size as f64 / total;
            let cc = ((share + 1e-9).floor() as u32).max(1);
            (c.clone(), ParamTriple { cc, ..h })
        })
        .collect()
}

fn probe<E: Executor>(ex: &mut E, chunk: &Chunk, params: ParamTriple, seconds: f64) -> Result<(f64, Option<Chunk>)> {
    let id = ex.start(chunk, params)?;
    ex.wait_for(id, seconds)?;
    let stats = ex.poll_interval(id)?;
    let rest = if stats.finished { None } else { ex.stop(id)? };
    Ok((stats.throughput_bps(), rest))
}

/// Doubles concurrency, then parallelism, then pipelining from 1 while the
/// probe throughput keeps rising. Every probe moves real data.
///
/// Returns the chosen parameters and whatever is left of the chunk.
pub fn pcp_sweep<E: Executor>(
    ex: &mut E,
    chunk: &Chunk,
    bounds: &ParamBounds,
    probe_seconds: f64,
) -> Result<(ParamTriple, Option<Chunk>)> {
    let mut best = ParamTriple { cc: 1, p: 1, pp: 1 };
    let (mut best_thr, mut rest) = probe(ex, chunk, best, probe_seconds)?;
    let limits = bounds.as_array();
    for axis in 0..3 {
        loop {
            let Some(chunk) = rest.clone() else {
                return Ok((best, None));
            };
            let mut next = best.as_array();
            if next[axis] >= limits[axis] {
                break;
            }
            next[axis] = (next[axis] * 2).min(limits[axis]);
            let cand = ParamTriple {
                cc: next[0],
                p: next[1],
                pp: next[2],
            };
            let (thr, r) = probe(ex, &chunk, cand, probe_seconds)?;
            rest = r;
            if thr > best_thr {
                best = cand;
                best_thr = thr;
            } else {
                break;
            }
        }
    }
    Ok((best, rest))
}

/// Runs a non-learning strategy over `chunks` from the executor's current time.
pub fn run_baseline<E: Executor>(
    ex: &mut E,
    strategy: Strategy,
    chunks: &[Chunk],
    network: &NetworkProfile,
) -> Result<RunReport> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("no chunks".into()));
    }
    let start = ex.now();
    let bytes: f64 = chunks.iter().map(|c| c.total_size as f64).sum();
    let mut end = start;
    let params: Vec<_> = match strategy {
        Strategy::Go => {
            let plan: Vec<_> = chunks.iter().map(|c| (c.clone(), go_params(c))).collect();
            end = execute_sequential(ex, &plan)?.end;
            plan.into_iter().map(|(c, p)| (c.chunk_type, p)).collect()
        }
        Strategy::Sc => {
            let plan: Vec<_> = chunks
                .iter()
                .map(|c| (c.clone(), sc_params(c, network, DEFAULT_USER_MAX_CC)))
                .collect();
            end = execute_sequential(ex, &plan)?.end;
            plan.into_iter().map(|(c, p)| (c.chunk_type, p)).collect()
        }
        Strategy::ProMc => {
            let plan = promc_plan(chunks, network, DEFAULT_USER_MAX_CC);
            end = execute_plan(ex, &plan)?.end;
            plan.into_iter().map(|(c, p)| (c.chunk_type, p)).collect()
        }
        Strategy::Pcp => {
            let mut chosen = Vec::with_capacity(chunks.len());
            for c in chunks {
                let (p, rest) = pcp_sweep(ex, c, &ParamBounds::default(), PCP_PROBE_SECONDS)?;
                end = match rest {
                    Some(rest) => execute_sequential(ex, &[(rest, p)])?.end,
                    None => ex.now(),
                };
                chosen.push((c.chunk_type, p));
            }
            chosen
        }
        Strategy::Harp => {
            return Err(Error::InvalidInput("the tuner needs history; use Harp::run".into()));
        }
    };
    Ok(RunReport {
        bytes,
        start,
        end,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ChunkType;

    #[test]
    fn go_table() {
        let c = |size| Chunk::uniform(ChunkType::Medium, "f", 2, size).unwrap();
        assert_eq!(go_params(&c(MB)), ParamTriple::new(2, 2, 8).unwrap());
        assert_eq!(go_params(&c(100 * MB)), ParamTriple::new(2, 2, 2).unwrap());
        assert_eq!(go_params(&c(1000 * MB)), ParamTriple::new(2, 4, 1).unwrap());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("nope".parse::<Strategy>().is_err());
    }
}
