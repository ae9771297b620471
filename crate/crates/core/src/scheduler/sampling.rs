use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::types::{Chunk, ParamTriple};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Relative change between consecutive intervals that counts as converged.
    pub convergence_pct: f64,
    pub monitor_interval: f64,
    pub max_sample_time: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            convergence_pct: 0.05,
            monitor_interval: 3.0,
            max_sample_time: 30.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_pct > 0.0 && self.convergence_pct < 1.0) {
            return Err(Error::InvalidInput(format!(
                "convergence_pct must be in (0, 1), got {}",
                self.convergence_pct
            )));
        }
        if !(self.monitor_interval > 0.0 && self.max_sample_time >= self.monitor_interval) {
            return Err(Error::InvalidInput("sampling interval must be positive and fit in the time cap".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SampleResult {
    pub throughput: f64,
    pub elapsed: f64,
    pub bytes: f64,
    pub converged: bool,
    /// The whole chunk finished while sampling.
    pub exhausted: bool,
    /// Undelivered part of the chunk, to be sent with tuned parameters.
    pub remainder: Option<Chunk>,
    /// Throughput of every completed interval.
    pub intervals: Vec<f64>,
}

/// Transfers `chunk` until two consecutive monitor intervals agree within
/// `convergence_pct`, then stops and reports their mean.
pub fn adaptive_sample<E: Executor>(
    ex: &mut E,
    chunk: &Chunk,
    params: ParamTriple,
    config: &SamplingConfig,
) -> Result<SampleResult> {
    config.validate()?;
    let id = ex.start(chunk, params)?;
    let t0 = ex.now();
    let mut intervals: Vec<f64> = Vec::new();
    loop {
        ex.wait_for(id, config.monitor_interval)?;
        let stats = ex.poll_interval(id)?;
        let elapsed = ex.now() - t0;
        if stats.finished {
            let s = ex.summary(id)?;
            let span = s.ended.unwrap_or(ex.now()) - s.started;
            let throughput = if span > 0.0 { s.bytes * 8.0 / span } else { 0.0 };
            return Ok(SampleResult {
                throughput,
                elapsed: span,
                bytes: s.bytes,
                converged: false,
                exhausted: true,
                remainder: None,
                intervals,
            });
        }
        let thr = stats.throughput_bps();
        let prev = intervals.last().copied();
        intervals.push(thr);
        let converged = prev.is_some_and(|p| (thr - p).abs() <= config.convergence_pct * p);
        if converged || elapsed >= config.max_sample_time - 1e-9 {
            let throughput = prev.map_or(thr, |p| 0.5 * (p + thr));
            let remainder = ex.stop(id)?;
            let bytes = ex.summary(id)?.bytes;
            return Ok(SampleResult {
                throughput,
                elapsed,
                bytes,
                converged,
                exhausted: false,
                remainder,
                intervals,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{SimExecutor, SimScenario};
    use crate::types::{ChunkType, GB, MB};

    #[test]
    fn steady_link_converges_on_second_interval() {
        let mut s = SimScenario::wan_default().with_noise(0.0);
        s.slow_start_tau = 0.0;
        let mut ex = SimExecutor::new(s, 0.0).unwrap();
        let chunk = Chunk::uniform(ChunkType::Large, "f", 100, GB).unwrap();
        let r = adaptive_sample(&mut ex, &chunk, ParamTriple::new(4, 1, 1).unwrap(), &SamplingConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.elapsed - 6.0).abs() < 1e-9, "{}", r.elapsed);
        let rest = r.remainder.unwrap();
        assert!((rest.total_size as f64 + r.bytes - chunk.total_size as f64).abs() < 200.0);
    }

    #[test]
    fn tiny_chunk_is_exhausted() {
        let mut ex = SimExecutor::new(SimScenario::wan_default(), 0.0).unwrap();
        let chunk = Chunk::uniform(ChunkType::Tiny, "f", 3, MB).unwrap();
        let r = adaptive_sample(&mut ex, &chunk, ParamTriple::new(3, 1, 1).unwrap(), &SamplingConfig::default()).unwrap();
        assert!(r.exhausted && !r.converged);
        assert!(r.remainder.is_none());
        assert!(r.throughput > 0.0);
    }

    #[test]
    fn endless_ramp_hits_cap() {
        let mut s = SimScenario::wan_default().with_noise(0.0);
        s.slow_start_tau = 200.0;
        let mut ex = SimExecutor::new(s, 0.0).unwrap();
        let chunk = Chunk::uniform(ChunkType::Large, "f", 100, GB).unwrap();
        let r = adaptive_sample(&mut ex, &chunk, ParamTriple::new(1, 1, 1).unwrap(), &SamplingConfig::default()).unwrap();
        assert!(!r.converged);
        assert!((r.elapsed - 30.0).abs() < 1e-9);
    }
}
