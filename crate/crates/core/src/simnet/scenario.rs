use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{NetworkProfile, MB};

/// Storage throughput ceiling as a function of concurrent I/O operations.
///
/// Points are `(ops, bytes_per_second)`, linearly interpolated. Below the
/// first point the curve runs through the origin; beyond the last it is
/// flat. An empty profile means storage never limits the transfer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FsProfile {
    points: Vec<(u32, f64)>,
}

impl FsProfile {
    pub fn unlimited() -> Self {
        Self { points: Vec::new() }
    }

    pub fn new(mut points: Vec<(u32, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidScenario(format!("duplicate fs_profile point at {} ops", w[0].0)));
            }
        }
        for &(n, v) in &points {
            if n == 0 || !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidScenario(format!("bad fs_profile point ({n}, {v})")));
            }
        }
        Ok(Self { points })
    }

    pub fn is_unlimited(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(u32, f64)] {
        &self.points
    }

    /// Ceiling in bytes per second at `ops` concurrent operations.
    pub fn capacity(&self, ops: u32) -> f64 {
        let Some(&(n0, v0)) = self.points.first() else {
            return f64::INFINITY;
        };
        let x = ops as f64;
        if ops <= n0 {
            return v0 * x / n0 as f64;
        }
        for w in self.points.windows(2) {
            let ((xa, ya), (xb, yb)) = ((w[0].0 as f64, w[0].1), (w[1].0 as f64, w[1].1));
            if x <= xb {
                return ya + (yb - ya) * (x - xa) / (xb - xa);
            }
        }
        self.points.last().unwrap().1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficInterval {
    pub start: f64,
    pub end: f64,
    pub bg_flows: u32,
}

/// Everything the simulator needs to know about the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub network: NetworkProfile,
    pub fs_profile: FsProfile,
    /// Sorted, non-overlapping background-load intervals. Time outside
    /// every interval has no background flows.
    pub traffic: Vec<TrafficInterval>,
    /// Seconds per unpipelined file command; `None` means one RTT.
    pub control_latency: Option<f64>,
    pub slow_start_tau: f64,
    pub noise_sigma: f64,
    /// Seconds to establish one data connection (charged on reconfiguration).
    pub conn_setup: f64,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(network: NetworkProfile) -> Self {
        Self {
            network,
            fs_profile: FsProfile::unlimited(),
            traffic: Vec::new(),
            control_latency: None,
            slow_start_tau: 1.0,
            noise_sigma: 0.05,
            conn_setup: 2.0,
            seed: 0,
        }
    }

    /// A 10 Gbps, 40 ms wide-area path with a 32 MiB TCP buffer and a
    /// parallel file system that saturates around 1200 MiB/s.
    pub fn wan_default() -> Self {
        let network = NetworkProfile::new(10e9, 0.040, 32.0 * MB as f64).expect("valid constants");
        let mib = MB as f64;
        let fs = FsProfile::new(vec![
            (1, 160.0 * mib),
            (4, 560.0 * mib),
            (8, 950.0 * mib),
            (16, 1200.0 * mib),
            (40, 1200.0 * mib),
            (64, 1050.0 * mib),
            (128, 800.0 * mib),
        ])
        .expect("valid constants");
        Self {
            fs_profile: fs,
            ..Self::new(network)
        }
    }

    pub fn with_constant_traffic(mut self, bg_flows: u32) -> Self {
        self.traffic = if bg_flows == 0 {
            Vec::new()
        } else {
            vec![TrafficInterval {
                start: 0.0,
                end: f64::INFINITY,
                bg_flows,
            }]
        };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.network
            .validate()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        if !(0.0..=0.3).contains(&self.noise_sigma) {
            return Err(Error::InvalidScenario(format!(
                "noise_sigma must be in [0, 0.3], got {}",
                self.noise_sigma
            )));
        }
        if !(self.slow_start_tau.is_finite() && self.slow_start_tau >= 0.0) {
            return Err(Error::InvalidScenario("slow_start_tau must be non-negative".into()));
        }
        if !(self.conn_setup.is_finite() && self.conn_setup >= 0.0) {
            return Err(Error::InvalidScenario("conn_setup must be non-negative".into()));
        }
        if let Some(l) = self.control_latency {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidScenario("control_latency must be non-negative".into()));
            }
        }
        let mut prev_end = f64::NEG_INFINITY;
        for iv in &self.traffic {
            if iv.end <= iv.start || iv.start.is_nan() {
                return Err(Error::InvalidScenario(format!(
                    "traffic interval [{}, {}) is empty",
                    iv.start, iv.end
                )));
            }
            if iv.start < prev_end {
                return Err(Error::InvalidScenario(
                    "traffic intervals must be sorted and non-overlapping".into(),
                ));
            }
            prev_end = iv.end;
        }
        Ok(())
    }

    pub fn bg_flows_at(&self, t: f64) -> u32 {
        self.traffic
            .iter()
            .find(|iv| iv.start <= t && t < iv.end)
            .map_or(0, |iv| iv.bg_flows)
    }

    pub fn control_latency(&self) -> f64 {
        self.control_latency.unwrap_or(self.network.rtt_s)
    }
}
