//! Per-run measurement containers.

use crate::sim::LinkCounters;

/// Counters for one flow over a whole run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowMetrics {
    /// Segments delivered in order to the sink application.
    pub delivered_segments: u64,
    pub delivered_bytes: u64,
    /// Segments delivered per one-second bin; length = floor(duration).
    pub bins: Vec<u64>,
    pub tcp_retransmissions: u64,
    pub tcp_timeouts: u64,
    pub nc_blocks_retransmitted: u64,
    pub nc_fillers: u64,
    pub nc_stale_acks: u64,
    /// Segments the sink TCP saw more than once.
    pub duplicate_arrivals: u64,
    pub handshake_failed: bool,
    /// Bounded transfers: source reached Done (FIN acknowledged).
    pub completed: bool,
    /// MSS the source settled on after the handshake.
    pub negotiated_mss: u16,
    /// Sink-side application byte stream; only filled when the scenario
    /// captures streams.
    pub sink_stream: Vec<u8>,
    /// Wire positions (2^8 mu + nu) of the coding layer's data segments in
    /// emission order, retransmissions included.
    pub nc_positions: Vec<u64>,
}

impl FlowMetrics {
    pub fn record_delivery(&mut self, now_s: f64, segments: u64, bytes: u64) {
        self.delivered_segments += segments;
        self.delivered_bytes += bytes;
        let bin = now_s as usize;
        if bin >= self.bins.len() {
            self.bins.resize(bin + 1, 0);
        }
        self.bins[bin] += segments;
    }

    /// Mean delivered segments per second over [from_s, to_s).
    pub fn mean_throughput(&self, from_s: usize, to_s: usize) -> f64 {
        if to_s <= from_s {
            return 0.0;
        }
        let sum: u64 = self
            .bins
            .iter()
            .skip(from_s)
            .take(to_s - from_s)
            .sum();
        sum as f64 / (to_s - from_s) as f64
    }
}

/// Everything measured in one simulation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub seed: u64,
    pub duration_s: f64,
    /// FNV-1a digest of the canonical scenario text; identifies the run
    /// configuration.
    pub config_digest: u64,
    pub flows: Vec<FlowMetrics>,
    pub links: Vec<(String, LinkCounters)>,
}

impl RunMetrics {
    /// Steady-state throughput: mean over the second half of the run.
    pub fn steady_state_throughput(&self, flow: usize) -> f64 {
        let half = (self.duration_s / 2.0) as usize;
        self.flows[flow].mean_throughput(half, self.duration_s as usize)
    }
}

/// FNV-1a 64-bit, used for configuration digests.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}
