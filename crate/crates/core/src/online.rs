//! Online tuning: re-optimize a running transfer every monitor interval and
//! change parameters only when the suggestions agree for `k` intervals.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::executor::{Executor, TransferId};
use crate::scheduler::{heuristic_params, ChunkModels, Harp, RunReport};
use crate::types::{Chunk, NetworkProfile, ParamTriple};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub k: usize,
    /// Smallest median change worth reconnecting for, concurrency and parallelism only.
    pub min_diff: u32,
    pub monitor_interval: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            k: 4,
            min_diff: 2,
            monitor_interval: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Update(ParamTriple),
}

/// Suggestion history for one transfer.
#[derive(Debug, Clone)]
pub struct OnlineState {
    k: usize,
    min_diff: u32,
    ring: VecDeque<ParamTriple>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl OnlineState {
    pub fn new(k: usize, min_diff: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
        }
        Ok(Self {
            k,
            min_diff,
            ring: VecDeque::with_capacity(k),
        })
    }

    pub fn suggestions(&self) -> impl Iterator<Item = &ParamTriple> {
        self.ring.iter()
    }

    /// Records a suggestion and decides whether to act on the ring.
    ///
    /// A parameter changes when all `k` suggestions sit on the same side of
    /// the current value and, for concurrency and parallelism, their median
    /// distance is at least `min_diff`. The new value is the median suggestion.
    /// The ring starts over after every update.
    pub fn push(&mut self, current: ParamTriple, suggestion: ParamTriple) -> Decision {
        if self.ring.len() == self.k {
            self.ring.pop_front();
        }
        self.ring.push_back(suggestion);
        if self.ring.len() < self.k {
            return Decision::Keep;
        }
        let cur = current.as_array();
        let mut next = cur;
        for axis in 0..3 {
            let diffs: Vec<i64> = self.ring.iter().map(|s| s.as_array()[axis] as i64 - cur[axis] as i64).collect();
            let same_sign = diffs.iter().all(|&d| d > 0) || diffs.iter().all(|&d| d < 0);
            if !same_sign {
                continue;
            }
            let magnitude = median(diffs.iter().map(|d| d.unsigned_abs() as f64).collect());
            if axis < 2 && magnitude < self.min_diff as f64 {
                continue;
            }
            let target = median(self.ring.iter().map(|s| s.as_array()[axis] as f64).collect());
            next[axis] = ((target + 0.5).floor() as u32).max(1);
        }
        if next == cur {
            return Decision::Keep;
        }
        self.ring.clear();
        Decision::Update(ParamTriple {
            cc: next[0],
            p: next[1],
            pp: next[2],
        })
    }

    /// Asks `optimizer` for a suggestion from the last interval and applies
    /// the consistency rules. An optimizer failure leaves the ring untouched.
    pub fn on_interval<F>(&mut self, observed: f64, current: ParamTriple, optimizer: F) -> Decision
    where
        F: FnOnce(ParamTriple, f64) -> Result<ParamTriple>,
    {
        if !(observed.is_finite() && observed > 0.0) {
            return Decision::Keep;
        }
        match optimizer(current, observed) {
            Ok(s) => self.push(current, s),
            Err(_) => Decision::Keep,
        }
    }
}

/// Switches a running transfer to `new`; returns the connection cost in seconds.
pub fn apply_update<E: Executor>(ex: &mut E, id: TransferId, old: ParamTriple, new: ParamTriple) -> Result<f64> {
    if old == new {
        return Ok(0.0);
    }
    ex.reconfigure(id, new)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub interval: usize,
    pub t: f64,
    pub chunk: usize,
    pub observed: f64,
    pub suggested: Option<ParamTriple>,
    pub updated: bool,
    pub params: ParamTriple,
    pub flows: u32,
}

pub fn write_decision_log<W: Write>(rows: &[DecisionRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "interval,t_s,chunk,observed_bps,suggested,action,cc,p,pp,flows")?;
    for r in rows {
        let suggested = r.suggested.map(|s| format!("{}-{}-{}", s.cc, s.p, s.pp)).unwrap_or_default();
        writeln!(
            out,
            "{},{:.1},{},{:.3},{},{},{},{},{},{}",
            r.interval,
            r.t,
            r.chunk,
            r.observed,
            suggested,
            if r.updated { "update" } else { "keep" },
            r.params.cc,
            r.params.p,
            r.params.pp,
            r.flows
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct OnlineReport {
    pub run: RunReport,
    pub log: Vec<DecisionRow>,
    /// Connection cost paid by all updates, seconds.
    pub transition_cost: f64,
}

struct Live {
    id: TransferId,
    params: ParamTriple,
    state: OnlineState,
    models: ChunkModels,
    /// Optimizer answer waiting for the next interval boundary.
    pending: Option<ParamTriple>,
}

/// Runs every chunk concurrently from heuristic parameters and tunes them online.
///
/// Each boundary first applies the consistency rules to the suggestion made
/// one interval earlier, then asks the optimizer about the interval just
/// finished. A suggestion therefore acts one interval after its observation.
pub fn run_online<E: Executor>(
    harp: &Harp<'_>,
    ex: &mut E,
    chunks: &[Chunk],
    network: &NetworkProfile,
    config: &OnlineConfig,
) -> Result<OnlineReport> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("no chunks".into()));
    }
    let start = ex.now();
    let bytes: f64 = chunks.iter().map(|c| c.total_size as f64).sum();
    let mut live: Vec<Live> = Vec::with_capacity(chunks.len());
    for c in chunks {
        let params = heuristic_params(c, network, &harp.config.bounds);
        let models = harp.models_for(c, network)?;
        let id = ex.start(c, params)?;
        live.push(Live {
            id,
            params,
            state: OnlineState::new(config.k, config.min_diff)?,
            models,
            pending: None,
        });
    }
    let mut log = Vec::new();
    let mut transition_cost = 0.0;
    let mut interval = 0;
    while live.iter().any(|l| ex.is_active(l.id)) {
        let until = ex.now() + config.monitor_interval;
        while ex.now() < until - 1e-9 {
            let Some(id) = live.iter().map(|l| l.id).find(|&id| ex.is_active(id)) else {
                break;
            };
            ex.wait_for(id, until - ex.now())?;
        }
        interval += 1;
        for (chunk, l) in live.iter_mut().enumerate() {
            let stats = ex.poll_interval(l.id)?;
            if stats.finished || !ex.is_active(l.id) {
                continue;
            }
            // The suggestion computed at the previous boundary lands now.
            let decision = match l.pending.take() {
                Some(s) => l.state.push(l.params, s),
                None => Decision::Keep,
            };
            let updated = if let Decision::Update(new) = decision {
                transition_cost += apply_update(ex, l.id, l.params, new)?;
                l.params = new;
                true
            } else {
                false
            };
            let observed = stats.throughput_bps();
            if observed.is_finite() && observed > 0.0 {
                if let Ok(Some(r)) = harp.decide(&l.models, l.params, observed) {
                    l.pending = Some(r.params);
                }
            }
            log.push(DecisionRow {
                interval,
                t: ex.now(),
                chunk,
                observed,
                suggested: l.pending,
                updated,
                params: l.params,
                flows: ex.active_flows(),
            });
        }
    }
    let mut end = start;
    let mut params = Vec::with_capacity(live.len());
    for (c, l) in chunks.iter().zip(&live) {
        let s = ex.summary(l.id)?;
        end = end.max(s.ended.unwrap_or(ex.now()));
        params.push((c.chunk_type, l.params));
    }
    Ok(OnlineReport {
        run: RunReport {
            bytes,
            start,
            end,
            params,
        },
        log,
        transition_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(v: u32) -> ParamTriple {
        ParamTriple { cc: v, p: 2, pp: 4 }
    }

    fn feed(state: &mut OnlineState, current: ParamTriple, seq: &[u32]) -> Decision {
        let mut last = Decision::Keep;
        for &v in seq {
            last = state.push(current, cc(v));
        }
        last
    }

    #[test]
    fn small_change_is_ignored() {
        let mut s = OnlineState::new(4, 2).unwrap();
        assert_eq!(feed(&mut s, cc(4), &[5, 5, 5, 5]), Decision::Keep);
    }

    #[test]
    fn consistent_large_change_applies() {
        let mut s = OnlineState::new(4, 2).unwrap();
        assert_eq!(feed(&mut s, cc(4), &[8, 9, 8]), Decision::Keep);
        assert_eq!(s.push(cc(4), cc(8)), Decision::Update(cc(8)));
        assert_eq!(s.suggestions().count(), 0);
    }

    #[test]
    fn alternating_is_ignored() {
        let mut s = OnlineState::new(4, 2).unwrap();
        assert_eq!(feed(&mut s, cc(4), &[8, 3, 8, 3]), Decision::Keep);
    }

    #[test]
    fn pipelining_needs_only_consistency() {
        let mut s = OnlineState::new(4, 2).unwrap();
        let cur = cc(4);
        let mut last = Decision::Keep;
        for _ in 0..4 {
            last = s.push(cur, ParamTriple { pp: 5, ..cur });
        }
        assert_eq!(last, Decision::Update(ParamTriple { pp: 5, ..cur }));
    }

    #[test]
    fn optimizer_failure_keeps_ring() {
        let mut s = OnlineState::new(2, 2).unwrap();
        s.push(cc(4), cc(10));
        let d = s.on_interval(1e9, cc(4), |_, _| Err(Error::Optimizer("down".into())));
        assert_eq!(d, Decision::Keep);
        assert_eq!(s.suggestions().count(), 1);
        assert!(OnlineState::new(1, 2).is_err());
    }
}
