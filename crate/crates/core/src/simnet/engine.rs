//! Fixed-tick transfer simulator.
//!
//! Every tick the engine works out which channels hold a file, splits the
//! link among their flows plus the background flows, applies the per-flow
//! window limit, the slow-start ramp, the storage ceiling and the pipelining
//! penalty, then lets each channel spend the tick on command latency and
//! payload bytes. Files are pulled from a per-transfer queue as channels free
//! up, so completion times inside a tick are exact.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::penalty::pipelining_imbalance_penalty;
use super::scenario::SimScenario;
use crate::error::{Error, Result};
use crate::executor::{IntervalStats, TransferId, TransferSummary};
use crate::types::{Chunk, ChunkType, FileInfo, ParamTriple};

/// Simulated seconds per tick.
pub const TICK: f64 = 0.1;

/// Transfers still running after this much simulated time are reported as stuck.
const MAX_SIM_SECONDS: f64 = 2.0e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelinePoint {
    /// End of the tick, seconds.
    pub t: f64,
    pub throughput_bps: f64,
    pub flows: u32,
}

#[derive(Debug, Clone)]
struct PendingFile {
    path: String,
    remaining: f64,
}

#[derive(Debug, Clone)]
struct Channel {
    /// Connection usable from this time; also the origin of its slow-start ramp.
    ready_at: f64,
    current: Option<PendingFile>,
    control_wait: f64,
}

impl Channel {
    fn new(ready_at: f64) -> Self {
        Self {
            ready_at,
            current: None,
            control_wait: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Transfer {
    chunk_type: ChunkType,
    params: ParamTriple,
    file_count: u64,
    queue: VecDeque<PendingFile>,
    channels: Vec<Channel>,
    total_bytes: f64,
    delivered: f64,
    started: f64,
    finished_at: Option<f64>,
    stopped: bool,
    penalty: f64,
    mark_bytes: f64,
    mark_time: f64,
}

impl Transfer {
    fn is_active(&self) -> bool {
        self.finished_at.is_none() && !self.stopped
    }

    fn drained(&self) -> bool {
        self.queue.is_empty() && self.channels.iter().all(|c| c.current.is_none())
    }
}

pub struct Engine {
    scenario: SimScenario,
    rng: ChaCha8Rng,
    origin: f64,
    ticks: u64,
    transfers: Vec<Transfer>,
    timeline: Vec<TimelinePoint>,
    // scratch buffer reused across ticks
    rates: Vec<f64>,
}

impl Engine {
    pub fn new(scenario: SimScenario, start: f64) -> Result<Self> {
        scenario.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        Ok(Self {
            scenario,
            rng,
            origin: start,
            ticks: 0,
            transfers: Vec::new(),
            timeline: Vec::new(),
            rates: Vec::new(),
        })
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    pub fn now(&self) -> f64 {
        self.origin + self.ticks as f64 * TICK
    }

    pub fn timeline(&self) -> &[TimelinePoint] {
        &self.timeline
    }

    pub fn take_timeline(&mut self) -> Vec<TimelinePoint> {
        std::mem::take(&mut self.timeline)
    }

    pub fn launch(&mut self, chunk: &Chunk, params: ParamTriple) -> Result<TransferId> {
        if chunk.files.is_empty() {
            return Err(Error::InvalidInput("cannot launch an empty chunk".into()));
        }
        if params.cc == 0 || params.p == 0 || params.pp == 0 {
            return Err(Error::InvalidInput(format!("params {params} must be positive")));
        }
        let now = self.now();
        let queue: VecDeque<PendingFile> = chunk
            .files
            .iter()
            .map(|f| PendingFile {
                path: f.path.clone(),
                remaining: f.size as f64,
            })
            .collect();
        let total_bytes = queue.iter().map(|f| f.remaining).sum();
        let file_count = queue.len() as u64;
        self.transfers.push(Transfer {
            chunk_type: chunk.chunk_type,
            params,
            file_count,
            queue,
            channels: (0..params.cc).map(|_| Channel::new(now)).collect(),
            total_bytes,
            delivered: 0.0,
            started: now,
            finished_at: None,
            stopped: false,
            penalty: pipelining_imbalance_penalty(params.cc, params.pp, file_count),
            mark_bytes: 0.0,
            mark_time: now,
        });
        Ok(TransferId(self.transfers.len() - 1))
    }

    fn transfer(&self, id: TransferId) -> Result<&Transfer> {
        self.transfers
            .get(id.0)
            .ok_or_else(|| Error::InvalidInput(format!("unknown transfer {}", id.0)))
    }

    fn transfer_mut(&mut self, id: TransferId) -> Result<&mut Transfer> {
        self.transfers
            .get_mut(id.0)
            .ok_or_else(|| Error::InvalidInput(format!("unknown transfer {}", id.0)))
    }

    pub fn is_active(&self, id: TransferId) -> bool {
        self.transfers.get(id.0).is_some_and(Transfer::is_active)
    }

    pub fn any_active(&self) -> bool {
        self.transfers.iter().any(Transfer::is_active)
    }

    /// Open foreground flows: channels times streams over running transfers.
    pub fn active_flows(&self) -> u32 {
        self.transfers
            .iter()
            .filter(|t| t.is_active())
            .map(|t| t.channels.len() as u32 * t.params.p)
            .sum()
    }

    pub fn params(&self, id: TransferId) -> Result<ParamTriple> {
        Ok(self.transfer(id)?.params)
    }

    pub fn summary(&self, id: TransferId) -> Result<TransferSummary> {
        let tr = self.transfer(id)?;
        Ok(TransferSummary {
            bytes: tr.delivered,
            started: tr.started,
            ended: tr.finished_at,
        })
    }

    /// Bytes and active time since the last call (or since launch).
    pub fn take_interval(&mut self, id: TransferId) -> Result<IntervalStats> {
        let now = self.now();
        let tr = self.transfer_mut(id)?;
        let end = tr.finished_at.unwrap_or(now);
        let stats = IntervalStats {
            bytes: tr.delivered - tr.mark_bytes,
            active_time: (end - tr.mark_time).max(0.0),
            finished: tr.finished_at.is_some(),
        };
        tr.mark_bytes = tr.delivered;
        tr.mark_time = end.min(now);
        Ok(stats)
    }

    /// Halts a transfer and returns the untransferred part, if any.
    pub fn stop(&mut self, id: TransferId) -> Result<Option<Chunk>> {
        let now = self.now();
        let tr = self.transfer_mut(id)?;
        if tr.finished_at.is_none() {
            tr.finished_at = Some(now);
        }
        tr.stopped = true;
        let mut rest: Vec<FileInfo> = Vec::new();
        for ch in &mut tr.channels {
            if let Some(f) = ch.current.take() {
                rest.push(remainder_file(f));
            }
        }
        rest.extend(tr.queue.drain(..).map(remainder_file));
        if rest.is_empty() {
            return Ok(None);
        }
        Chunk::new(tr.chunk_type, rest).map(Some)
    }

    /// Switches a running transfer to new parameters and returns the
    /// connection-setup cost in channel-seconds.
    ///
    /// Pipelining changes are free. New channels wait `conn_setup` before
    /// carrying data; a parallelism change re-establishes every kept channel.
    /// Dropped channels hand their partial file back to the queue.
    pub fn reconfigure(&mut self, id: TransferId, params: ParamTriple) -> Result<f64> {
        let now = self.now();
        let setup = self.scenario.conn_setup;
        let tr = self.transfer_mut(id)?;
        if !tr.is_active() {
            return Ok(0.0);
        }
        let old = tr.params;
        let mut cost = 0.0;
        if params.cc < old.cc {
            for mut ch in tr.channels.drain(params.cc as usize..) {
                if let Some(f) = ch.current.take() {
                    tr.queue.push_front(f);
                }
            }
        }
        if params.p != old.p {
            for ch in &mut tr.channels {
                ch.ready_at = now + setup;
                cost += setup;
            }
        }
        while tr.channels.len() < params.cc as usize {
            tr.channels.push(Channel::new(now + setup));
            cost += setup;
        }
        tr.params = params;
        tr.penalty = pipelining_imbalance_penalty(params.cc, params.pp, tr.file_count);
        Ok(cost)
    }

    /// Runs whole ticks until at least `duration` seconds have elapsed.
    pub fn advance(&mut self, duration: f64) {
        let n = (duration / TICK - 1e-9).ceil().max(0.0) as u64;
        for _ in 0..n {
            self.step();
        }
    }

    /// Runs until no transfer is active.
    pub fn run_to_completion(&mut self) -> Result<()> {
        let limit = self.now() + MAX_SIM_SECONDS;
        while self.any_active() {
            if self.now() > limit {
                return Err(Error::InvalidScenario("transfer made no progress".into()));
            }
            self.step();
        }
        Ok(())
    }

    fn draw_noise(&mut self) -> f64 {
        let sigma = self.scenario.noise_sigma;
        if sigma <= 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (sigma * z - 0.5 * sigma * sigma).exp()
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let t0 = self.now();
        let t1 = t0 + TICK;
        let noise = self.draw_noise();
        let net = self.scenario.network;
        let bg = self.scenario.bg_flows_at(t0);
        let ctrl = self.scenario.control_latency();
        let tau = self.scenario.slow_start_tau;

        // Idle, connected channels pick up their next file.
        for tr in self.transfers.iter_mut().filter(|t| t.is_active()) {
            let pp = tr.params.pp as f64;
            for ch in tr.channels.iter_mut() {
                if ch.current.is_none() && ch.ready_at < t1 {
                    if let Some(f) = tr.queue.pop_front() {
                        ch.current = Some(f);
                        ch.control_wait = ctrl / pp;
                    }
                }
            }
        }

        let mut flows = 0u32;
        let mut ops = 0u32;
        for tr in self.transfers.iter().filter(|t| t.is_active()) {
            for ch in &tr.channels {
                if ch.current.is_some() && ch.ready_at < t1 {
                    flows += tr.params.p;
                    ops += 1;
                }
            }
        }

        let mut tick_bytes = 0.0;
        if flows > 0 {
            let share = net.bandwidth_bps / (flows + bg) as f64;
            let base = net.window_limit_bps().min(share);
            self.rates.clear();
            let mut demand = 0.0;
            for tr in self.transfers.iter().filter(|t| t.is_active()) {
                for ch in &tr.channels {
                    let r = if ch.current.is_some() && ch.ready_at < t1 {
                        let from = t0.max(ch.ready_at);
                        let ramp = ramp_average(from - ch.ready_at, t1 - ch.ready_at, tau);
                        tr.params.p as f64 * share.min(base * ramp * noise)
                    } else {
                        0.0
                    };
                    demand += r;
                    self.rates.push(r);
                }
            }
            let cap = self.scenario.fs_profile.capacity(ops) * 8.0;
            let scale = if demand > cap { cap / demand } else { 1.0 };

            let mut k = 0;
            for tr in self.transfers.iter_mut().filter(|t| t.is_active()) {
                let pp = tr.params.pp as f64;
                let mut last_done: Option<f64> = None;
                for ch in tr.channels.iter_mut() {
                    let rate = self.rates[k] * scale * tr.penalty / 8.0;
                    k += 1;
                    if ch.current.is_none() || ch.ready_at >= t1 {
                        continue;
                    }
                    let from = t0.max(ch.ready_at);
                    let (bytes, done) = run_channel(ch, &mut tr.queue, rate, from, t1, ctrl / pp);
                    tr.delivered += bytes;
                    tick_bytes += bytes;
                    if let Some(d) = done {
                        last_done = Some(last_done.map_or(d, |x: f64| x.max(d)));
                    }
                }
                if tr.drained() {
                    tr.finished_at = Some(last_done.unwrap_or(t0));
                    // Float residue from repeated subtraction.
                    tr.delivered = tr.delivered.min(tr.total_bytes);
                }
            }
        } else {
            // Nothing is moving: channels may still be connecting.
            for tr in self.transfers.iter_mut().filter(|t| t.is_active()) {
                if tr.drained() {
                    tr.finished_at = Some(t0);
                }
            }
        }

        self.timeline.push(TimelinePoint {
            t: t1,
            throughput_bps: tick_bytes * 8.0 / TICK,
            flows,
        });
        self.ticks += 1;
    }
}

fn remainder_file(f: PendingFile) -> FileInfo {
    FileInfo {
        path: f.path,
        size: f.remaining.ceil().max(1.0) as u64,
    }
}

/// Mean of `1 - exp(-s/tau)` over `s in [a, b]`.
fn ramp_average(a: f64, b: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    let width = b - a;
    if width <= 0.0 {
        return 1.0 - (-a / tau).exp();
    }
    1.0 - tau * ((-a / tau).exp() - (-b / tau).exp()) / width
}

/// Spends `[from, until)` on one channel. Returns bytes moved and the time the
/// channel's last file completed, if it ran out of work inside the window.
fn run_channel(
    ch: &mut Channel,
    queue: &mut VecDeque<PendingFile>,
    rate: f64,
    from: f64,
    until: f64,
    control_delay: f64,
) -> (f64, Option<f64>) {
    let mut t = from;
    let mut moved = 0.0;
    loop {
        if ch.control_wait > 0.0 {
            let w = ch.control_wait.min(until - t);
            ch.control_wait -= w;
            t += w;
            if ch.control_wait > 0.0 {
                return (moved, None);
            }
        }
        let Some(file) = ch.current.as_mut() else {
            match queue.pop_front() {
                Some(next) => {
                    ch.current = Some(next);
                    ch.control_wait = control_delay;
                    continue;
                }
                None => return (moved, Some(t)),
            }
        };
        if rate <= 0.0 || t >= until {
            return (moved, None);
        }
        let capacity = rate * (until - t);
        if capacity >= file.remaining {
            t += file.remaining / rate;
            moved += file.remaining;
            ch.current = None;
        } else {
            file.remaining -= capacity;
            moved += capacity;
            return (moved, None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::scenario::FsProfile;
    use crate::types::{NetworkProfile, MB};

    fn ideal() -> SimScenario {
        let mut s = SimScenario::new(NetworkProfile::new(8e9, 0.0, 64.0 * MB as f64).unwrap());
        s.noise_sigma = 0.0;
        s.slow_start_tau = 0.0;
        s.fs_profile = FsProfile::unlimited();
        s
    }

    #[test]
    fn ramp_average_limits() {
        assert_eq!(ramp_average(0.0, 1.0, 0.0), 1.0);
        let r = ramp_average(0.0, 100.0, 1.0);
        assert!((r - 0.99).abs() < 1e-3);
        assert!(ramp_average(0.0, 0.1, 2.0) < 0.05);
    }

    #[test]
    fn single_file_exact_finish() {
        let mut e = Engine::new(ideal(), 0.0).unwrap();
        // 1e9 bytes at 1e9 B/s.
        let chunk = Chunk::uniform(ChunkType::Large, "f", 1, 1_000_000_000).unwrap();
        let id = e.launch(&chunk, ParamTriple::new(1, 1, 1).unwrap()).unwrap();
        e.run_to_completion().unwrap();
        let s = e.summary(id).unwrap();
        assert!((s.ended.unwrap() - 1.0).abs() < 1e-9);
        assert!((s.bytes - 1e9).abs() < 1e-3);
    }

    #[test]
    fn stop_returns_remainder() {
        let mut e = Engine::new(ideal(), 0.0).unwrap();
        let chunk = Chunk::uniform(ChunkType::Large, "f", 4, 1_000_000_000).unwrap();
        let id = e.launch(&chunk, ParamTriple::new(2, 1, 1).unwrap()).unwrap();
        e.advance(0.5);
        let rest = e.stop(id).unwrap().unwrap();
        let done = e.summary(id).unwrap().bytes;
        let left = rest.total_size as f64;
        assert!((done + left - 4e9).abs() <= rest.file_count() as f64);
        assert_eq!(rest.file_count(), 4);
        assert!(!e.is_active(id));
    }

    #[test]
    fn reconfigure_costs() {
        let mut s = ideal();
        s.conn_setup = 2.0;
        let mut e = Engine::new(s, 0.0).unwrap();
        let chunk = Chunk::uniform(ChunkType::Tiny, "f", 100, 10_000_000).unwrap();
        let id = e.launch(&chunk, ParamTriple::new(4, 2, 4).unwrap()).unwrap();
        e.advance(0.2);
        assert_eq!(e.reconfigure(id, ParamTriple::new(4, 2, 16).unwrap()).unwrap(), 0.0);
        assert_eq!(e.reconfigure(id, ParamTriple::new(6, 2, 16).unwrap()).unwrap(), 4.0);
        assert_eq!(e.reconfigure(id, ParamTriple::new(3, 2, 16).unwrap()).unwrap(), 0.0);
        assert_eq!(e.reconfigure(id, ParamTriple::new(3, 4, 16).unwrap()).unwrap(), 6.0);
        e.run_to_completion().unwrap();
        assert!((e.summary(id).unwrap().bytes - 1e9).abs() < 1e-3);
    }
}
