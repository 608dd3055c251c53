//! Throughput, fairness, access delay and per-packet device energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no measured frames")]
    NoFrames,
    #[error("energy needs at least one transmission attempt")]
    NoAttempts,
}

/// Device power and timing figures (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    pub slot_duration_s: f64,
    pub packet_size_bytes: f64,
    pub ack_size_bytes: f64,
    pub data_rate_bps: f64,
    pub tx_power_w: f64,
    pub rx_current_a: f64,
    pub idle_current_a: f64,
    pub voltage_v: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            slot_duration_s: 0.020,
            packet_size_bytes: 128.0,
            ack_size_bytes: 16.0,
            data_rate_bps: 60_000.0,
            tx_power_w: 0.200,
            rx_current_a: 0.035,
            idle_current_a: 2.7e-6,
            voltage_v: 3.7,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("energy.slot_duration_s", self.slot_duration_s),
            ("energy.packet_size_bytes", self.packet_size_bytes),
            ("energy.ack_size_bytes", self.ack_size_bytes),
            ("energy.data_rate_bps", self.data_rate_bps),
            ("energy.tx_power_w", self.tx_power_w),
            ("energy.rx_current_a", self.rx_current_a),
            ("energy.voltage_v", self.voltage_v),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(name, "must be positive"));
            }
        }
        if !(self.idle_current_a >= 0.0 && self.idle_current_a.is_finite()) {
            return Err(ConfigError::new("energy.idle_current_a", "must be non-negative"));
        }
        Ok(())
    }

    pub fn tx_time_s(&self) -> f64 {
        self.packet_size_bytes * 8.0 / self.data_rate_bps
    }

    pub fn rx_time_s(&self) -> f64 {
        self.ack_size_bytes * 8.0 / self.data_rate_bps
    }

    pub fn rx_power_w(&self) -> f64 {
        self.rx_current_a * self.voltage_v
    }

    pub fn idle_power_w(&self) -> f64 {
        self.idle_current_a * self.voltage_v
    }
}

/// `P_tx T_tx N_tot + P_rx T_rx + P_idle T_slot L N_idle`, in millijoules.
pub fn energy_per_success(params: &EnergyParams, n_tot: u64, n_idle: u64, slots: usize) -> Result<f64, MetricsError> {
    if n_tot == 0 {
        return Err(MetricsError::NoAttempts);
    }
    Ok(energy_mj(params, n_tot as f64, n_idle as f64, slots))
}

/// The same formula for (possibly averaged) real-valued counts. The formula
/// is affine in both counts, so evaluating it at the mean counts yields the mean energy.
pub fn energy_mj(params: &EnergyParams, n_tot: f64, n_idle: f64, slots: usize) -> f64 {
    let joules = params.tx_power_w * params.tx_time_s() * n_tot
        + params.rx_power_w() * params.rx_time_s()
        + params.idle_power_w() * params.slot_duration_s * slots as f64 * n_idle;
    joules * 1e3
}

/// `(sum x)^2 / (C sum x^2)`; all-zero input is treated as perfectly equal (1).
pub fn jain_fairness(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        1.0
    } else {
        sum * sum / (values.len() as f64 * sq)
    }
}

/// One acknowledged packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRecord {
    pub device: usize,
    pub cluster: usize,
    /// Frames counted by the configured delay origin, at least 1.
    pub delay_frames: u64,
    /// Transmissions of this packet including the successful one.
    pub attempts: u64,
    /// Frames the packet spent deferred at the head of the queue.
    pub idle_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsAccumulator {
    pub frames: u64,
    pub successes: Vec<u64>,
    pub acked: Vec<u64>,
    pub delay_sum: Vec<u64>,
    pub attempts_sum: Vec<u64>,
    pub idle_sum: Vec<u64>,
    pub device_attempts: Vec<u64>,
    pub device_idle: Vec<u64>,
    /// Largest system success count seen in a single frame.
    pub max_frame_successes: u64,
    batch_len: u64,
    batch_sum: u64,
    batch_frames: u64,
    pub batch_means: Vec<f64>,
}

impl MetricsAccumulator {
    /// `batch_len` frames per batch for the batch-means standard error.
    pub fn new(clusters: usize, devices: usize, batch_len: u64) -> Self {
        Self {
            frames: 0,
            successes: vec![0; clusters],
            acked: vec![0; clusters],
            delay_sum: vec![0; clusters],
            attempts_sum: vec![0; clusters],
            idle_sum: vec![0; clusters],
            device_attempts: vec![0; devices],
            device_idle: vec![0; devices],
            max_frame_successes: 0,
            batch_len: batch_len.max(1),
            batch_sum: 0,
            batch_frames: 0,
            batch_means: Vec::new(),
        }
    }

    pub fn clusters(&self) -> usize {
        self.successes.len()
    }

    pub fn record_frame(&mut self, per_cluster_successes: &[u64]) {
        self.frames += 1;
        let mut total = 0;
        for (acc, &s) in self.successes.iter_mut().zip(per_cluster_successes) {
            *acc += s;
            total += s;
        }
        self.max_frame_successes = self.max_frame_successes.max(total);
        self.batch_sum += total;
        self.batch_frames += 1;
        if self.batch_frames == self.batch_len {
            self.batch_means.push(self.batch_sum as f64 / self.batch_len as f64);
            self.batch_sum = 0;
            self.batch_frames = 0;
        }
    }

    pub fn record_ack(&mut self, ack: &AckRecord) {
        let c = ack.cluster;
        self.acked[c] += 1;
        self.delay_sum[c] += ack.delay_frames;
        self.attempts_sum[c] += ack.attempts;
        self.idle_sum[c] += ack.idle_frames;
    }

    pub fn record_attempt(&mut self, device: usize) {
        self.device_attempts[device] += 1;
    }

    pub fn record_idle(&mut self, device: usize) {
        self.device_idle[device] += 1;
    }

    /// Combines two accumulators over disjoint frames or runs.
    pub fn merge(&mut self, other: &MetricsAccumulator) {
        fn add(a: &mut [u64], b: &[u64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.frames += other.frames;
        add(&mut self.successes, &other.successes);
        add(&mut self.acked, &other.acked);
        add(&mut self.delay_sum, &other.delay_sum);
        add(&mut self.attempts_sum, &other.attempts_sum);
        add(&mut self.idle_sum, &other.idle_sum);
        add(&mut self.device_attempts, &other.device_attempts);
        add(&mut self.device_idle, &other.device_idle);
        self.max_frame_successes = self.max_frame_successes.max(other.max_frame_successes);
        self.batch_means.extend_from_slice(&other.batch_means);
    }

    /// Batch-means standard error of the system throughput, if at least two batches exist.
    pub fn system_throughput_stderr(&self) -> Option<f64> {
        let n = self.batch_means.len();
        if n < 2 {
            return None;
        }
        let mean = self.batch_means.iter().sum::<f64>() / n as f64;
        let var = self.batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some((var / n as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    pub per_cluster: Vec<f64>,
    pub system: f64,
}

pub fn throughput(acc: &MetricsAccumulator) -> Result<Throughput, MetricsError> {
    if acc.frames == 0 {
        return Err(MetricsError::NoFrames);
    }
    let per_cluster: Vec<f64> = acc.successes.iter().map(|&s| s as f64 / acc.frames as f64).collect();
    let system = per_cluster.iter().sum();
    Ok(Throughput { per_cluster, system })
}

/// Mean delay per acknowledged packet, per cluster; `None` without acknowledgements.
pub fn access_delay(acc: &MetricsAccumulator) -> Vec<Option<f64>> {
    acc.delay_sum
        .iter()
        .zip(&acc.acked)
        .map(|(&d, &n)| (n > 0).then(|| d as f64 / n as f64))
        .collect()
}

/// Mean energy per acknowledged packet, per cluster, in millijoules.
pub fn mean_energy_mj(acc: &MetricsAccumulator, params: &EnergyParams, slots: usize) -> Vec<Option<f64>> {
    (0..acc.clusters())
        .map(|c| {
            let n = acc.acked[c];
            (n > 0).then(|| {
                let tot = acc.attempts_sum[c] as f64 / n as f64;
                let idle = acc.idle_sum[c] as f64 / n as f64;
                energy_mj(params, tot, idle, slots)
            })
        })
        .collect()
}

/// Summary of a measured window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub frames: u64,
    pub gamma: Vec<f64>,
    pub gamma_s: f64,
    pub jain_hat: f64,
    pub delay: Vec<Option<f64>>,
    pub energy_mj: Vec<Option<f64>>,
    pub mean_attempts: Vec<Option<f64>>,
    pub gamma_s_stderr: Option<f64>,
}

impl MetricsReport {
    pub fn empty(clusters: usize) -> Self {
        Self {
            frames: 0,
            gamma: vec![0.0; clusters],
            gamma_s: 0.0,
            jain_hat: 1.0,
            delay: vec![None; clusters],
            energy_mj: vec![None; clusters],
            mean_attempts: vec![None; clusters],
            gamma_s_stderr: None,
        }
    }

    pub fn from_accumulator(acc: &MetricsAccumulator, params: &EnergyParams, slots: usize) -> Self {
        let Ok(t) = throughput(acc) else {
            return Self::empty(acc.clusters());
        };
        Self {
            frames: acc.frames,
            jain_hat: jain_fairness(&t.per_cluster),
            gamma_s: t.system,
            gamma: t.per_cluster,
            delay: access_delay(acc),
            energy_mj: mean_energy_mj(acc, params, slots),
            mean_attempts: acc
                .attempts_sum
                .iter()
                .zip(&acc.acked)
                .map(|(&a, &n)| (n > 0).then(|| a as f64 / n as f64))
                .collect(),
            gamma_s_stderr: acc.system_throughput_stderr(),
        }
    }
}
