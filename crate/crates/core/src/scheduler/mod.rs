//! Chunk scheduling: heuristic parameters, channel allocation, execution.

mod baselines;
mod cost;
mod harp;
mod sampling;

pub use baselines::{go_params, pcp_sweep, run_baseline, Strategy, DEFAULT_USER_MAX_CC};
pub use cost::{cost_min_chunk_size, cost_table, COST_TABLE_ROWS};
pub use harp::{ChunkModels, ChunkReport, Harp, HarpConfig, HarpReport};
pub use sampling::{adaptive_sample, SampleResult, SamplingConfig};

use crate::error::{Error, Result};
use crate::executor::{Executor, TransferId};
use crate::optimizer::OptimizerResult;
use crate::types::{Chunk, ChunkType, NetworkProfile, ParamBounds, ParamTriple};

/// Concurrency used by the heuristic when nothing better is known.
pub const CC_DEFAULT: u32 = 4;

/// `ceil` that ignores float residue just above an integer.
fn ceil_tolerant(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

fn clamp_param(x: f64, max: u32) -> u32 {
    if !x.is_finite() {
        return max;
    }
    x.clamp(1.0, max as f64) as u32
}

/// Pipelining from BDP over average file size, parallelism from BDP over the
/// buffer, concurrency `min(files, 4)`.
pub fn heuristic_params(chunk: &Chunk, network: &NetworkProfile, bounds: &ParamBounds) -> ParamTriple {
    let bdp = network.bdp();
    ParamTriple {
        cc: clamp_param(chunk.file_count().min(CC_DEFAULT as usize) as f64, bounds.cc_max),
        p: clamp_param(ceil_tolerant(bdp / network.buffer_bytes), bounds.p_max),
        pp: clamp_param(ceil_tolerant(bdp / chunk.avg_file_size), bounds.pp_max),
    }
}

/// Final per-chunk parameters and the allocation inputs behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub params: Vec<ParamTriple>,
    pub weights: Vec<f64>,
    pub unit_throughputs: Vec<f64>,
    pub max_cc: u32,
    /// Sum of unit throughputs.
    pub total_throughput: f64,
}

/// Splits `max cc_est` channels among chunks in proportion to
/// `size * TT / UT`, at least one each. Parallelism and pipelining pass through.
pub fn build_plan(sizes: &[f64], results: &[(ParamTriple, f64)]) -> Result<TransferPlan> {
    if sizes.is_empty() || sizes.len() != results.len() {
        return Err(Error::InvalidInput(format!(
            "{} chunk sizes for {} optimizer results",
            sizes.len(),
            results.len()
        )));
    }
    if let Some((i, _)) = results.iter().enumerate().find(|(_, r)| !(r.1.is_finite() && r.1 > 0.0)) {
        return Err(Error::InvalidInput(format!("chunk {i} has non-positive unit throughput")));
    }
    let total_throughput: f64 = results.iter().map(|r| r.1).sum();
    let max_cc = results.iter().map(|r| r.0.cc).max().unwrap_or(1).max(1);
    let weights: Vec<f64> = sizes
        .iter()
        .zip(results)
        .map(|(s, r)| s * total_throughput / r.1)
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let params = results
        .iter()
        .zip(&weights)
        .map(|(r, w)| {
            let share = max_cc as f64 * w / total_weight;
            let cc = ((share + 1e-9).floor() as u32).max(1);
            ParamTriple { cc, ..r.0 }
        })
        .collect();
    Ok(TransferPlan {
        params,
        weights,
        unit_throughputs: results.iter().map(|r| r.1).collect(),
        max_cc,
        total_throughput,
    })
}

/// Convenience over optimizer results.
pub fn build_plan_from(sizes: &[f64], results: &[OptimizerResult]) -> Result<TransferPlan> {
    let pairs: Vec<(ParamTriple, f64)> = results.iter().map(|r| (r.params, r.unit_throughput)).collect();
    build_plan(sizes, &pairs)
}

/// Outcome of one strategy over a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub bytes: f64,
    pub start: f64,
    pub end: f64,
    /// Parameters each chunk ran with, in chunk order.
    pub params: Vec<(ChunkType, ParamTriple)>,
}

impl RunReport {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Dataset bytes over wall time, sampling and probing included.
    pub fn throughput(&self) -> f64 {
        let d = self.duration();
        if d > 0.0 {
            self.bytes * 8.0 / d
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkRun {
    pub params: ParamTriple,
    pub bytes: f64,
    pub started: f64,
    pub ended: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub chunks: Vec<ChunkRun>,
    pub bytes: f64,
    /// Length of the union of the chunks' active intervals.
    pub active_time: f64,
    pub start: f64,
    pub end: f64,
}

impl ExecutionReport {
    pub fn aggregate_throughput(&self) -> f64 {
        if self.active_time > 0.0 {
            self.bytes * 8.0 / self.active_time
        } else {
            0.0
        }
    }
}

fn union_length(mut spans: Vec<(f64, f64)>) -> f64 {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, e) in spans {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

fn collect_runs<E: Executor>(ex: &E, ids: &[(TransferId, ParamTriple)], start: f64) -> Result<ExecutionReport> {
    let mut chunks = Vec::with_capacity(ids.len());
    for (i, &(id, params)) in ids.iter().enumerate() {
        let s = ex.summary(id).map_err(|e| Error::Executor {
            chunk: i,
            message: e.to_string(),
        })?;
        chunks.push(ChunkRun {
            params,
            bytes: s.bytes,
            started: s.started,
            ended: s.ended.unwrap_or(ex.now()),
        });
    }
    let bytes = chunks.iter().map(|c| c.bytes).sum();
    let active_time = union_length(chunks.iter().map(|c| (c.started, c.ended)).collect());
    let end = chunks.iter().map(|c| c.ended).fold(start, f64::max);
    Ok(ExecutionReport {
        chunks,
        bytes,
        active_time,
        start,
        end,
    })
}

fn launch<E: Executor>(ex: &mut E, i: usize, chunk: &Chunk, params: ParamTriple) -> Result<TransferId> {
    ex.start(chunk, params).map_err(|e| Error::Executor {
        chunk: i,
        message: e.to_string(),
    })
}

/// Starts every chunk at once and waits for all of them.
pub fn execute_plan<E: Executor>(ex: &mut E, chunks: &[(Chunk, ParamTriple)]) -> Result<ExecutionReport> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("empty plan".into()));
    }
    let start = ex.now();
    let mut ids = Vec::with_capacity(chunks.len());
    for (i, (c, p)) in chunks.iter().enumerate() {
        ids.push((launch(ex, i, c, *p)?, *p));
    }
    ex.wait_all()?;
    collect_runs(ex, &ids, start)
}

/// Runs chunks one after another.
pub fn execute_sequential<E: Executor>(ex: &mut E, chunks: &[(Chunk, ParamTriple)]) -> Result<ExecutionReport> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("empty plan".into()));
    }
    let start = ex.now();
    let mut ids = Vec::with_capacity(chunks.len());
    for (i, (c, p)) in chunks.iter().enumerate() {
        ids.push((launch(ex, i, c, *p)?, *p));
        ex.wait_all()?;
    }
    collect_runs(ex, &ids, start)
}
