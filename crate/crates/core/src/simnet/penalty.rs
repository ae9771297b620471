//! Throughput loss from pre-assigning pipelined files to channels.
//!
//! With several channels and a pipelining depth above one, files are handed
//! to channels in batches before any channel has finished; channels that draw
//! larger files fall behind while others idle. The loss is largest at moderate
//! depths (batches are big enough to skew but too small to average out) and
//! eases slightly at very deep pipelines where nearly the whole queue is dealt
//! out at once. Calibrated so that 32 channels over 1000 files lose ~17% at
//! depth 8 and ~10% at depths 16 and 32.

/// Lowest factor the penalty can produce.
pub const PENALTY_FLOOR: f64 = 0.8;

/// Severity by pipelining depth, knots at log2(pp) = 0..=5.
const DEPTH_SEVERITY: [f64; 6] = [0.0, 0.30, 0.65, 1.0, 0.5906, 0.5977];

/// Loss at full severity with 32 channels.
const MAX_LOSS_AT_32: f64 = 0.1712;

fn depth_severity(pp: u32) -> f64 {
    let x = (pp.max(1) as f64).log2();
    let last = DEPTH_SEVERITY.len() - 1;
    if x >= last as f64 {
        return DEPTH_SEVERITY[last];
    }
    let i = x.floor() as usize;
    let frac = x - i as f64;
    DEPTH_SEVERITY[i] + (DEPTH_SEVERITY[i + 1] - DEPTH_SEVERITY[i]) * frac
}

/// Multiplicative throughput factor in `[0.8, 1]`.
pub fn pipelining_imbalance_penalty(cc: u32, pp: u32, file_count: u64) -> f64 {
    if cc <= 1 || pp <= 1 {
        return 1.0;
    }
    let spread = MAX_LOSS_AT_32 * ((cc as f64).log2() / 5.0).min(1.0);
    // Imbalance needs a queue to deal from: no effect with one file per channel.
    let queued = file_count.saturating_sub(cc as u64) as f64;
    let crowding = (queued / (4.0 * cc as f64)).min(1.0);
    (1.0 - spread * depth_severity(pp) * crowding).max(PENALTY_FLOOR)
}
