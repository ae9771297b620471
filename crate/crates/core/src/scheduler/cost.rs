/// Smallest dataset, in units of `Thr0 * seconds`, for which sampling plus
/// optimization finishes no later than transferring at the baseline rate.
///
/// Sampling runs `sample_time` seconds at `(1 - slowdown) Thr0`, the rest moves
/// at `(1 + speedup) Thr0`, and `c` seconds go to the last optimizer call.
pub fn cost_min_chunk_size(speedup: f64, slowdown: f64, sample_time: f64, c: f64) -> f64 {
    ((sample_time + c) * (1.0 + speedup) - sample_time * (1.0 - slowdown)) / speedup
}

/// `(speedup, slowdown)` rows of the reference table.
pub const COST_TABLE_ROWS: [(f64, f64); 9] = [
    (0.10, 0.50),
    (0.10, 0.30),
    (0.10, 0.10),
    (0.30, 0.50),
    (0.30, 0.30),
    (0.30, 0.10),
    (0.50, 0.50),
    (0.50, 0.30),
    (0.50, 0.10),
];

/// `(speedup, slowdown, size)` for every table row.
pub fn cost_table(sample_time: f64, c: f64) -> Vec<(f64, f64, f64)> {
    COST_TABLE_ROWS
        .iter()
        .map(|&(s, d)| (s, d, cost_min_chunk_size(s, d, sample_time, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn break_even_holds() {
        // t0 = D/Thr0 must equal (D - 15 ThrS)/ThrH + 15 + c at the returned D.
        for &(s, d) in &COST_TABLE_ROWS {
            for c in [0.0, 3.0] {
                let x = cost_min_chunk_size(s, d, 15.0, c);
                let t_h = (x - 15.0 * (1.0 - d)) / (1.0 + s) + 15.0 + c;
                assert!((x - t_h).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn latency_raises_the_bar() {
        assert!(cost_min_chunk_size(0.3, 0.3, 15.0, 3.0) > cost_min_chunk_size(0.3, 0.3, 15.0, 0.0));
    }
}
