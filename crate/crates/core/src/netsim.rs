//! Discrete-event model of multi-client collaborative inference.
//!
//! Per request: client compute, compression, transmission through the
//! shared uplink (FIFO at `link_rate` bits/s), then a FIFO queue into the
//! pooled servers with deterministic service 1/`server_rate`. Arrivals are
//! Poisson per client; everything is deterministic in the config seed.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("SLA of {sla_s}s is below the single-request latency of {floor_s}s")]
    SlaInfeasible { sla_s: f64, floor_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueDiscipline {
    Fifo,
}

/// Simulation parameters. Rates are per second; sizes in their named units.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_clients: usize,
    /// Uplink capacity in bits/second. Transmissions share it FIFO.
    pub link_rate: f64,
    pub n_servers: usize,
    /// Requests/second each pooled server completes.
    pub server_rate: f64,
    pub client_compute_s: f64,
    pub compress_s: f64,
    pub tokens_per_request: usize,
    pub hidden_size: usize,
    pub bytes_per_value: usize,
    pub compression_ratio: f64,
    /// Poisson request rate per client.
    pub request_rate: f64,
    pub sim_duration: f64,
    pub seed: u64,
    pub queue_discipline: QueueDiscipline,
}

/// Fraction of `sim_duration` excluded from statistics as warm-up.
pub const WARMUP_FRACTION: f64 = 0.1;

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("link_rate", self.link_rate),
            ("server_rate", self.server_rate),
            ("request_rate", self.request_rate),
            ("sim_duration", self.sim_duration),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(SimError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("client_compute_s", self.client_compute_s),
            ("compress_s", self.compress_s),
        ];
        for (name, v) in non_negative {
            if v < 0.0 || !v.is_finite() {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        if self.n_clients == 0 || self.n_servers == 0 {
            return Err(SimError::InvalidConfig("client and server counts must be positive".into()));
        }
        if self.tokens_per_request == 0 || self.hidden_size == 0 || self.bytes_per_value == 0 {
            return Err(SimError::InvalidConfig("payload dimensions must be positive".into()));
        }
        if self.compression_ratio.is_nan() || self.compression_ratio < 1.0 {
            return Err(SimError::InvalidConfig("compression_ratio must be >= 1".into()));
        }
        Ok(())
    }

    /// Transmission time of one compressed request through the uplink.
    pub fn transmit_s(&self) -> f64 {
        payload_bytes(self.tokens_per_request, self.hidden_size, self.compression_ratio) as f64
            * 8.0
            / self.link_rate
    }

    /// Latency of an isolated request: compute, compress, transmit, serve.
    pub fn single_request_latency(&self) -> f64 {
        self.client_compute_s + self.compress_s + self.transmit_s() + 1.0 / self.server_rate
    }

    /// Offered server load: total request rate over pooled capacity.
    pub fn offered_server_utilization(&self) -> f64 {
        self.n_clients as f64 * self.request_rate / (self.n_servers as f64 * self.server_rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mean_response_s: f64,
    pub p95_response_s: f64,
    pub server_utilization: f64,
    pub completed: usize,
    pub dropped: usize,
    /// Time-averaged number of requests in flight over the measurement
    /// window; used for the Little's-law consistency check.
    pub mean_in_flight: f64,
    pub mean_compute_s: f64,
    pub mean_transmit_s: f64,
    pub mean_queue_s: f64,
    pub mean_serve_s: f64,
}

/// Bytes on the wire for one activation payload at the given ratio.
pub fn payload_bytes(tokens: usize, hidden: usize, ratio: f64) -> u64 {
    let raw = tokens as u64 * hidden as u64 * 4;
    (raw as f64 / ratio).ceil() as u64
}

/// Runs the event-driven simulation to completion of all arrivals.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;

    // Poisson arrivals, one independent stream per client.
    let mut arrivals: Vec<f64> = Vec::new();
    for client in 0..cfg.n_clients {
        let mut rng = SplitMix64::stream(cfg.seed, client as u64);
        let mut t = rng.next_exponential(cfg.request_rate);
        while t < cfg.sim_duration {
            arrivals.push(t);
            t += rng.next_exponential(cfg.request_rate);
        }
    }
    arrivals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let transmit = cfg.transmit_s();
    let service = 1.0 / cfg.server_rate;
    let client_stage = cfg.client_compute_s + cfg.compress_s;
    let warmup = WARMUP_FRACTION * cfg.sim_duration;

    // Requests become ready for the uplink in arrival order (the client
    // stage is a constant offset), so both shared resources can be walked
    // in one pass.
    let mut link_free = 0.0f64;
    let mut servers: BinaryHeap<Reverse<OrderedF64>> = (0..cfg.n_servers)
        .map(|_| Reverse(OrderedF64(0.0)))
        .collect();

    let mut measured: Vec<f64> = Vec::new();
    let mut sum_queue = 0.0f64;
    let mut in_flight_area = 0.0f64;
    let window = cfg.sim_duration - warmup;
    let completed_total = arrivals.len();

    for &arrival in &arrivals {
        let ready = arrival + client_stage;
        let net_start = ready.max(link_free);
        let net_done = net_start + transmit;
        link_free = net_done;

        let Reverse(OrderedF64(server_free)) = servers.pop().expect("server pool non-empty");
        let serve_start = net_done.max(server_free);
        let done = serve_start + service;
        servers.push(Reverse(OrderedF64(done)));

        // Overlap of [arrival, done] with the measurement window.
        let overlap = done.min(cfg.sim_duration) - arrival.max(warmup);
        if overlap > 0.0 {
            in_flight_area += overlap;
        }

        if arrival >= warmup {
            measured.push(done - arrival);
            sum_queue += (net_start - ready) + (serve_start - net_done);
        }
    }

    if measured.is_empty() {
        return Err(SimError::InvalidConfig(
            "no requests completed after warm-up; extend sim_duration or raise request_rate".into(),
        ));
    }

    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    let mut sorted = measured.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = sorted[((sorted.len() as f64 * 0.95).ceil() as usize - 1).min(sorted.len() - 1)];

    Ok(SimResult {
        mean_response_s: mean,
        p95_response_s: p95,
        server_utilization: cfg.offered_server_utilization(),
        completed: completed_total,
        dropped: 0,
        mean_in_flight: in_flight_area / window,
        mean_compute_s: client_stage,
        mean_transmit_s: transmit,
        mean_queue_s: sum_queue / measured.len() as f64,
        mean_serve_s: service,
    })
}

#[derive(PartialEq)]
struct OrderedF64(f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).expect("finite event times")
    }
}

/// Largest client count whose mean response stays within the SLA.
/// Doubling search for an upper bound, then binary search; every probe
/// reuses the config seed.
pub fn capacity_search(cfg: &SimConfig, sla_s: f64) -> Result<usize, SimError> {
    cfg.validate()?;
    let floor = cfg.single_request_latency();
    if sla_s <= floor {
        return Err(SimError::SlaInfeasible { sla_s, floor_s: floor });
    }

    let mean_at = |n: usize| -> Result<f64, SimError> {
        let mut probe = cfg.clone();
        probe.n_clients = n;
        Ok(simulate(&probe)?.mean_response_s)
    };

    if mean_at(1)? > sla_s {
        return Err(SimError::SlaInfeasible { sla_s, floor_s: floor });
    }

    const CLIENT_CAP: usize = 1 << 20;
    let mut lo = 1usize;
    let mut hi = 2usize;
    loop {
        if mean_at(hi)? > sla_s {
            break;
        }
        lo = hi;
        if hi >= CLIENT_CAP {
            return Ok(hi);
        }
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mean_at(mid)? <= sla_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Parses the flat `key = value` config format. Lines starting with `#`
/// and blank lines are ignored; keys match the SimConfig field names.
pub fn parse_sim_config(text: &str) -> Result<SimConfig, SimError> {
    let mut cfg = SimConfig {
        n_clients: 1,
        link_rate: 1e9,
        n_servers: 1,
        server_rate: 10.0,
        client_compute_s: 0.0,
        compress_s: 0.0,
        tokens_per_request: 512,
        hidden_size: 2048,
        bytes_per_value: 4,
        compression_ratio: 1.0,
        request_rate: 1.0,
        sim_duration: 100.0,
        seed: 0,
        queue_discipline: QueueDiscipline::Fifo,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| {
                SimError::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
        let bad = |e: String| SimError::InvalidConfig(format!("line {}: {e}", lineno + 1));
        let as_f64 = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
        let as_usize = || value.parse::<usize>().map_err(|e| bad(e.to_string()));
        match key {
            "n_clients" => cfg.n_clients = as_usize()?,
            "link_rate" => cfg.link_rate = as_f64()?,
            "n_servers" => cfg.n_servers = as_usize()?,
            "server_rate" => cfg.server_rate = as_f64()?,
            "client_compute_s" => cfg.client_compute_s = as_f64()?,
            "compress_s" => cfg.compress_s = as_f64()?,
            "tokens_per_request" => cfg.tokens_per_request = as_usize()?,
            "hidden_size" => cfg.hidden_size = as_usize()?,
            "bytes_per_value" => cfg.bytes_per_value = as_usize()?,
            "compression_ratio" => cfg.compression_ratio = as_f64()?,
            "request_rate" => cfg.request_rate = as_f64()?,
            "sim_duration" => cfg.sim_duration = as_f64()?,
            "seed" => cfg.seed = value.parse::<u64>().map_err(|e| bad(e.to_string()))?,
            "queue_discipline" => match value {
                "fifo" | "FIFO" => cfg.queue_discipline = QueueDiscipline::Fifo,
                other => return Err(bad(format!("unknown queue discipline {other:?}"))),
            },
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One results row: `n_clients,link_gbps,ratio,mean_s,p95_s,utilization`.
pub fn result_csv_row(cfg: &SimConfig, result: &SimResult) -> String {
    format!(
        "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
        cfg.n_clients,
        cfg.link_rate / 1e9,
        cfg.compression_ratio,
        result.mean_response_s,
        result.p95_response_s,
        result.server_utilization,
    )
}
