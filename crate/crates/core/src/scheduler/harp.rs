//! The full tuner: sample each chunk, model it from similar history, optimize,
//! allocate channels and run the rest of every chunk concurrently.

use super::{adaptive_sample, build_plan, execute_plan, execute_sequential, heuristic_params, RunReport, SamplingConfig, TransferPlan};
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::modeling::{fit_groups, ThroughputModel};
use crate::optimizer::{optimize, OptimizerRequest, OptimizerResult, Relaxation};
use crate::similarity::{filter_similar, group_by_session, Query, DEFAULT_MIN_ENTRIES};
use crate::types::{Chunk, ChunkType, HistoryEntry, NetworkProfile, ParamBounds, ParamTriple};

#[derive(Debug, Clone, PartialEq)]
pub struct HarpConfig {
    pub sampling: SamplingConfig,
    /// Seconds spent by the last optimizer call, not hidden behind sampling.
    pub optimizer_latency: f64,
    pub min_entries: usize,
    pub split_seed: u64,
    pub relaxation: Relaxation,
    pub bounds: ParamBounds,
}

impl Default for HarpConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            optimizer_latency: 3.0,
            min_entries: DEFAULT_MIN_ENTRIES,
            split_seed: 0,
            relaxation: Relaxation::default(),
            bounds: ParamBounds::default(),
        }
    }
}

/// Models fitted for one chunk and how they were selected.
#[derive(Debug, Clone, Default)]
pub struct ChunkModels {
    pub models: Vec<ThroughputModel>,
    /// Entries that passed the similarity filter.
    pub similar: usize,
    pub threshold: Option<f64>,
    /// The filter could not find `min_entries` similar entries.
    pub warning: bool,
    pub groups: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct ChunkReport {
    pub chunk_type: ChunkType,
    pub heuristic: ParamTriple,
    pub sample_throughput: f64,
    pub sample_elapsed: f64,
    pub sample_converged: bool,
    pub models: ChunkModels,
    /// `None` when no model survived and the heuristic was kept.
    pub optimizer: Option<OptimizerResult>,
    /// Parameters the remainder ran with, if anything remained.
    pub final_params: Option<ParamTriple>,
}

#[derive(Debug, Clone)]
pub struct HarpReport {
    pub run: RunReport,
    pub chunks: Vec<ChunkReport>,
    pub plan: Option<TransferPlan>,
}

pub struct Harp<'a> {
    history: &'a [HistoryEntry],
    pub config: HarpConfig,
}

impl<'a> Harp<'a> {
    pub fn new(history: &'a [HistoryEntry], config: HarpConfig) -> Self {
        Self { history, config }
    }

    pub fn history(&self) -> &'a [HistoryEntry] {
        self.history
    }

    /// Filters history by similarity to the chunk, groups by session and fits.
    pub fn models_for(&self, chunk: &Chunk, network: &NetworkProfile) -> Result<ChunkModels> {
        if self.history.is_empty() {
            return Ok(ChunkModels {
                warning: true,
                ..ChunkModels::default()
            });
        }
        let query = Query {
            network: *network,
            chunk_type: chunk.chunk_type,
            avg_file_size: chunk.avg_file_size,
            file_count: chunk.file_count() as u64,
        };
        let filtered = filter_similar(self.history, &query, self.config.min_entries)?;
        let entries: Vec<HistoryEntry> = filtered.entries.into_iter().map(|(e, _)| e).collect();
        let groups = group_by_session(&entries);
        let report = fit_groups(&groups, self.config.split_seed)?;
        Ok(ChunkModels {
            similar: entries.len(),
            threshold: filtered.threshold,
            warning: filtered.warning,
            groups: groups.len(),
            rejected: report.rejected.len(),
            models: report.models,
        })
    }

    /// Runs the optimizer for one probe; `None` without models.
    pub fn decide(&self, models: &ChunkModels, probe: ParamTriple, throughput: f64) -> Result<Option<OptimizerResult>> {
        if models.models.is_empty() {
            return Ok(None);
        }
        let req = OptimizerRequest {
            probe_params: probe,
            probe_throughput: throughput,
            models: models.models.clone(),
            bounds: self.config.bounds,
            relaxation: self.config.relaxation,
        };
        optimize(&req).map(Some)
    }

    /// Samples one chunk with heuristic parameters and runs the optimizer on
    /// the result. Returns the report and, if anything is left, the remainder
    /// with its parameters and unit throughput.
    fn sample_and_decide<E: Executor>(
        &self,
        ex: &mut E,
        chunk: &Chunk,
        network: &NetworkProfile,
    ) -> Result<(ChunkReport, Option<(Chunk, ParamTriple, f64)>)> {
        let heuristic = heuristic_params(chunk, network, &self.config.bounds);
        let sample = adaptive_sample(ex, chunk, heuristic, &self.config.sampling)?;
        let models = self.models_for(chunk, network)?;
        let optimizer = if sample.throughput > 0.0 {
            self.decide(&models, heuristic, sample.throughput)?
        } else {
            None
        };
        let rest = sample.remainder.clone().map(|rest| {
            let (params, unit) = match &optimizer {
                Some(r) => (r.params, r.unit_throughput),
                None => (heuristic, (sample.throughput / heuristic.cc as f64).max(1.0)),
            };
            (rest, params, unit)
        });
        let report = ChunkReport {
            chunk_type: chunk.chunk_type,
            heuristic,
            sample_throughput: sample.throughput,
            sample_elapsed: sample.elapsed,
            sample_converged: sample.converged,
            models,
            optimizer,
            final_params: None,
        };
        Ok((report, rest))
    }

    fn finish(&self, start: f64, end: f64, chunks: &[Chunk], reports: Vec<ChunkReport>, plan: Option<TransferPlan>) -> HarpReport {
        let params = reports
            .iter()
            .map(|r| (r.chunk_type, r.final_params.unwrap_or(r.heuristic)))
            .collect();
        HarpReport {
            run: RunReport {
                bytes: chunks.iter().map(|c| c.total_size as f64).sum(),
                start,
                end,
                params,
            },
            chunks: reports,
            plan,
        }
    }

    /// Transfers `chunks` end to end from the executor's current time.
    ///
    /// Chunks are sampled one at a time with heuristic parameters; each
    /// optimizer call overlaps the next chunk's sample, so only the last one
    /// adds latency. The undelivered remainders then run concurrently.
    pub fn run<E: Executor>(&self, ex: &mut E, chunks: &[Chunk], network: &NetworkProfile) -> Result<HarpReport> {
        if chunks.is_empty() {
            return Err(Error::InvalidInput("no chunks".into()));
        }
        let start = ex.now();
        let mut reports = Vec::with_capacity(chunks.len());
        let mut pending: Vec<(usize, Chunk, ParamTriple, f64)> = Vec::new();
        for chunk in chunks {
            let (report, rest) = self.sample_and_decide(ex, chunk, network)?;
            if let Some((rest, params, unit)) = rest {
                pending.push((reports.len(), rest, params, unit));
            }
            reports.push(report);
        }
        if pending.is_empty() {
            // Every chunk finished while sampling.
            let end = ex.now();
            return Ok(self.finish(start, end, chunks, reports, None));
        }
        if reports.iter().any(|r| r.optimizer.is_some()) {
            ex.wait(self.config.optimizer_latency)?;
        }
        let sizes: Vec<f64> = pending.iter().map(|p| p.1.total_size as f64).collect();
        let results: Vec<(ParamTriple, f64)> = pending.iter().map(|p| (p.2, p.3)).collect();
        let plan = build_plan(&sizes, &results)?;
        let work: Vec<(Chunk, ParamTriple)> = pending
            .iter()
            .zip(&plan.params)
            .map(|(p, &params)| (p.1.clone(), params))
            .collect();
        for (p, &params) in pending.iter().zip(&plan.params) {
            reports[p.0].final_params = Some(params);
        }
        let end = execute_plan(ex, &work)?.end;
        Ok(self.finish(start, end, chunks, reports, Some(plan)))
    }

    /// One chunk at a time: sample, wait for the optimizer, send the rest
    /// with the optimizer's own parameters, then move to the next chunk.
    pub fn run_sequential<E: Executor>(
        &self,
        ex: &mut E,
        chunks: &[Chunk],
        network: &NetworkProfile,
    ) -> Result<HarpReport> {
        if chunks.is_empty() {
            return Err(Error::InvalidInput("no chunks".into()));
        }
        let start = ex.now();
        let mut end = start;
        let mut reports = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            let (mut report, rest) = self.sample_and_decide(ex, chunk, network)?;
            if let Some((rest, params, _)) = rest {
                if report.optimizer.is_some() {
                    ex.wait(self.config.optimizer_latency)?;
                }
                report.final_params = Some(params);
                end = execute_sequential(ex, &[(rest, params)])?.end;
            } else {
                end = ex.now();
            }
            reports.push(report);
        }
        Ok(self.finish(start, end, chunks, reports, None))
    }
}
