//! The boundary between orchestration and whatever moves the bytes.

use crate::error::Result;
use crate::types::{Chunk, ParamTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransferId(pub usize);

/// Bytes moved by one transfer since the previous interval mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStats {
    pub bytes: f64,
    /// Seconds the transfer was running inside the interval.
    pub active_time: f64,
    pub finished: bool,
}

impl IntervalStats {
    pub fn throughput_bps(&self) -> f64 {
        if self.active_time > 0.0 {
            self.bytes * 8.0 / self.active_time
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSummary {
    pub bytes: f64,
    pub started: f64,
    /// Completion or stop time; `None` while running.
    pub ended: Option<f64>,
}

/// Something that can run chunk transfers and report progress over time.
///
/// The simulator implements this; a real transfer client would too.
pub trait Executor {
    fn now(&self) -> f64;

    fn start(&mut self, chunk: &Chunk, params: ParamTriple) -> Result<TransferId>;

    /// Lets `seconds` pass, whether or not anything is running.
    fn wait(&mut self, seconds: f64) -> Result<()>;

    /// Lets up to `seconds` pass, returning early once `id` is no longer running.
    fn wait_for(&mut self, id: TransferId, seconds: f64) -> Result<()>;

    /// Blocks until every started transfer has finished or been stopped.
    fn wait_all(&mut self) -> Result<()>;

    /// Progress since the previous poll of the same transfer.
    fn poll_interval(&mut self, id: TransferId) -> Result<IntervalStats>;

    /// Halts a transfer and hands back whatever was not delivered.
    fn stop(&mut self, id: TransferId) -> Result<Option<Chunk>>;

    /// Changes parameters mid-transfer; returns the connection cost in seconds.
    fn reconfigure(&mut self, id: TransferId, params: ParamTriple) -> Result<f64>;

    fn is_active(&self, id: TransferId) -> bool;

    fn summary(&self, id: TransferId) -> Result<TransferSummary>;

    /// Number of foreground flows currently open.
    fn active_flows(&self) -> u32;
}
