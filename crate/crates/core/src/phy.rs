//! Uplink channel sampling and per-slot SIC detection.
//!
//! The base station sits at the origin, `bs_height_m` above ground. A
//! cluster center lies on the positive x axis at `center_distance_m`;
//! devices sit at planar offsets from that center.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::ConfigError;
use crate::rng::SimRng;
use crate::slot_hash::DeviceId;

/// Whether shadow fading is redrawn for every transmission or fixed per device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowCoherence {
    #[default]
    PerTransmission,
    PerDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    pub tx_power_mw: f64,
    pub sinr_threshold_db: f64,
    pub shadow_std_db: f64,
    pub receiver_sensitivity_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub antenna_count: usize,
    pub bs_height_m: f64,
    pub shadow_coherence: ShadowCoherence,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            tx_power_mw: 200.0,
            sinr_threshold_db: 10.0,
            shadow_std_db: 8.0,
            receiver_sensitivity_dbm: -104.0,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 180_000.0,
            antenna_count: 1,
            bs_height_m: 30.0,
            shadow_coherence: ShadowCoherence::PerTransmission,
        }
    }
}

pub(crate) fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl PhyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tx_power_mw > 0.0 && self.tx_power_mw.is_finite()) {
            return Err(ConfigError::new("phy.tx_power_mw", "must be positive"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(ConfigError::new("phy.bandwidth_hz", "must be positive"));
        }
        if self.antenna_count == 0 {
            return Err(ConfigError::new("phy.antenna_count", "must be at least 1"));
        }
        if !self.sinr_threshold_db.is_finite() {
            return Err(ConfigError::new("phy.sinr_threshold_db", "must be finite"));
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            return Err(ConfigError::new("phy.shadow_std_db", "must be non-negative"));
        }
        if !self.receiver_sensitivity_dbm.is_finite() {
            return Err(ConfigError::new("phy.receiver_sensitivity_dbm", "must be finite"));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(ConfigError::new("phy.noise_psd_dbm_hz", "must be finite"));
        }
        if !(self.bs_height_m >= 0.0 && self.bs_height_m.is_finite()) {
            return Err(ConfigError::new("phy.bs_height_m", "must be non-negative"));
        }
        Ok(())
    }

    /// Noise power over the configured bandwidth, in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }

    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm())
    }

    pub fn sensitivity_mw(&self) -> f64 {
        dbm_to_mw(self.receiver_sensitivity_dbm)
    }

    pub fn sinr_threshold_linear(&self) -> f64 {
        10f64.powf(self.sinr_threshold_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry {
    pub center_distance_m: f64,
    pub radius_m: f64,
    pub device_count: usize,
}

impl ClusterGeometry {
    pub fn new(center_distance_m: f64, radius_m: f64, device_count: usize) -> Result<Self, ConfigError> {
        let g = Self {
            center_distance_m,
            radius_m,
            device_count,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.radius_m >= 0.0 && self.radius_m.is_finite()) {
            return Err(ConfigError::new("network.radius_m", "must be non-negative"));
        }
        if !(self.center_distance_m > self.radius_m && self.center_distance_m.is_finite()) {
            return Err(ConfigError::new(
                "network.distances_m",
                "cluster center distance must exceed the cluster radius",
            ));
        }
        if self.device_count == 0 {
            return Err(ConfigError::new("network.devices", "each cluster needs at least one device"));
        }
        Ok(())
    }

    /// Uniform position in the cluster disc.
    pub fn sample_offset(&self, rng: &mut SimRng) -> PlanarOffset {
        let r = self.radius_m * rng.random::<f64>().sqrt();
        let angle = 2.0 * PI * rng.random::<f64>();
        PlanarOffset {
            x: r * angle.cos(),
            y: r * angle.sin(),
        }
    }
}

/// Planar offset from the cluster center; negative `x` points toward the BS.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarOffset {
    pub x: f64,
    pub y: f64,
}

impl PlanarOffset {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// 3D distance between the BS antenna and a device, in meters.
pub fn device_distance(geometry: &ClusterGeometry, offset: PlanarOffset, bs_height_m: f64) -> f64 {
    debug_assert!(offset.norm() <= geometry.radius_m + 1e-9);
    let horizontal = (geometry.center_distance_m + offset.x).hypot(offset.y);
    horizontal.hypot(bs_height_m)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("distance must be positive, got {0} m")]
pub struct NonPositiveDistance(pub f64);

/// `128 + 37.6 log10(d_km)` in dB.
pub fn path_loss_db(distance_m: f64) -> Result<f64, NonPositiveDistance> {
    if distance_m.is_nan() || distance_m <= 0.0 {
        return Err(NonPositiveDistance(distance_m));
    }
    Ok(128.0 + 37.6 * (distance_m / 1000.0).log10())
}

/// Received power for explicit shadowing (dB) and small-scale gain.
pub fn received_power_mw(tx_power_mw: f64, path_loss_db: f64, shadow_db: f64, fading_gain: f64) -> f64 {
    tx_power_mw * 10f64.powf(-(path_loss_db + shadow_db) / 10.0) * fading_gain
}

/// Sum of `|h_m|^2` over `antennas` i.i.d. CN(0, 1) coefficients.
pub fn sample_fading_gain(antennas: usize, rng: &mut SimRng) -> f64 {
    (0..antennas).map(|_| rng.sample::<f64, _>(Exp1)).sum()
}

pub fn sample_shadow_db(std_db: f64, rng: &mut SimRng) -> f64 {
    if std_db == 0.0 {
        0.0
    } else {
        std_db * rng.sample::<f64, _>(StandardNormal)
    }
}

/// One channel realization: fresh shadowing and fading.
pub fn sample_received_power(phy: &PhyConfig, distance_m: f64, rng: &mut SimRng) -> Result<f64, NonPositiveDistance> {
    let pl = path_loss_db(distance_m)?;
    let shadow = sample_shadow_db(phy.shadow_std_db, rng);
    let fading = sample_fading_gain(phy.antenna_count, rng);
    Ok(received_power_mw(phy.tx_power_mw, pl, shadow, fading))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionSignal {
    pub device_id: DeviceId,
    pub cluster: usize,
    pub received_power_mw: f64,
}

/// SIC outcome. `decoded` is in decode order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    pub decoded: Vec<DeviceId>,
    pub failed: Vec<DeviceId>,
}

/// Linear-domain detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicParams {
    pub noise_mw: f64,
    pub threshold_linear: f64,
    /// Decoding floor; `None` disables it.
    pub sensitivity_mw: Option<f64>,
}

impl From<&PhyConfig> for SicParams {
    fn from(phy: &PhyConfig) -> Self {
        Self {
            noise_mw: phy.noise_power_mw(),
            threshold_linear: phy.sinr_threshold_linear(),
            sensitivity_mw: Some(phy.sensitivity_mw()),
        }
    }
}

pub fn sic_detect(signals: &[TransmissionSignal], phy: &PhyConfig) -> DetectionResult {
    sic_detect_with(signals, &SicParams::from(phy))
}

/// Decode strongest-first; stop at the first signal that fails SINR or sensitivity.
/// Equal powers are ordered by ascending device id.
pub fn sic_detect_with(signals: &[TransmissionSignal], params: &SicParams) -> DetectionResult {
    let mut order: Vec<&TransmissionSignal> = signals.iter().collect();
    order.sort_by(|a, b| {
        b.received_power_mw
            .total_cmp(&a.received_power_mw)
            .then(a.device_id.cmp(&b.device_id))
    });

    let mut result = DetectionResult::default();
    // Suffix sums give the residual interference after perfect cancellation.
    let mut residual = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        residual[k] = residual[k + 1] + order[k].received_power_mw;
    }
    let mut k = 0;
    while k < order.len() {
        let p = order[k].received_power_mw;
        let sinr = p / (residual[k + 1] + params.noise_mw);
        let audible = params.sensitivity_mw.is_none_or(|floor| p >= floor);
        if sinr >= params.threshold_linear && audible {
            result.decoded.push(order[k].device_id);
            k += 1;
        } else {
            break;
        }
    }
    result.failed.extend(order[k..].iter().map(|s| s.device_id));
    result
}

/// Monte-Carlo joint distribution of per-cluster successes in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub n1: usize,
    pub n2: usize,
    pub samples: usize,
    /// `joint[u1][u2]` = empirical P(u1 C1 successes, u2 C2 successes).
    pub joint: Vec<Vec<f64>>,
}

impl OutcomeTable {
    /// P(u successes) for `cluster` (0 or 1), padded to length `width`.
    pub fn marginal(&self, cluster: usize, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width.max(self.n1.max(self.n2) + 1)];
        for (u1, row) in self.joint.iter().enumerate() {
            for (u2, &p) in row.iter().enumerate() {
                out[if cluster == 0 { u1 } else { u2 }] += p;
            }
        }
        out.truncate(width.max(1));
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.joint.iter().flatten().sum()
    }
}

/// Places `n1` devices in C1 and `n2` in C2 afresh for every sample, draws
/// their channels and runs SIC.
pub fn outcome_distribution(
    n1: usize,
    n2: usize,
    phy: &PhyConfig,
    geometry: &[ClusterGeometry; 2],
    samples: usize,
    rng: &mut SimRng,
) -> OutcomeTable {
    let samples = samples.max(1);
    let params = SicParams::from(phy);
    let mut counts = vec![vec![0u64; n2 + 1]; n1 + 1];
    let mut signals = Vec::with_capacity(n1 + n2);
    for _ in 0..samples {
        signals.clear();
        for (cluster, &n) in [n1, n2].iter().enumerate() {
            let geom = &geometry[cluster];
            for _ in 0..n {
                let offset = geom.sample_offset(rng);
                let d = device_distance(geom, offset, phy.bs_height_m);
                let p = sample_received_power(phy, d, rng).expect("distance is positive");
                signals.push(TransmissionSignal {
                    device_id: DeviceId(signals.len() as u64),
                    cluster,
                    received_power_mw: p,
                });
            }
        }
        let det = sic_detect_with(&signals, &params);
        let mut u = [0usize; 2];
        for id in det.decoded {
            u[signals[id.0 as usize].cluster] += 1;
        }
        counts[u[0]][u[1]] += 1;
    }
    let joint = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / samples as f64).collect())
        .collect();
    OutcomeTable { n1, n2, samples, joint }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub bandwidth_hz: f64,
    /// Lone-C1 success rate under the calibrated bandwidth, on the calibration sample.
    pub achieved: f64,
    /// True when the sensitivity floor alone keeps the rate below the target.
    pub sensitivity_limited: bool,
}

/// Chooses the noise bandwidth so that a lone C1 transmission succeeds with
/// probability `target`.
///
/// A lone transmission decodes iff `p >= max(threshold * noise, sensitivity)`,
/// which is monotone in the bandwidth, so the bandwidth follows directly from
/// the `(1 - target)` quantile of sampled received powers.
pub fn calibrate_bandwidth(
    phy: &PhyConfig,
    geometry: &ClusterGeometry,
    target: f64,
    samples: usize,
    rng: &mut SimRng,
) -> Calibration {
    let samples = samples.max(1);
    let mut powers: Vec<f64> = (0..samples)
        .map(|_| {
            let d = device_distance(geometry, geometry.sample_offset(rng), phy.bs_height_m);
            sample_received_power(phy, d, rng).expect("distance is positive")
        })
        .collect();
    powers.sort_by(f64::total_cmp);

    let sensitivity = phy.sensitivity_mw();
    let threshold = phy.sinr_threshold_linear();
    let psd_mw = dbm_to_mw(phy.noise_psd_dbm_hz);
    let rate_at = |bw: f64| {
        let floor = (threshold * psd_mw * bw).max(sensitivity);
        let failing = powers.partition_point(|&p| p < floor);
        (samples - failing) as f64 / samples as f64
    };

    let fail_index = (((1.0 - target.clamp(0.0, 1.0)) * samples as f64).round() as usize).min(samples - 1);
    let quantile = powers[fail_index];
    if quantile <= sensitivity {
        // Noise cannot raise the rate; keep noise below the sensitivity floor.
        let bw = phy.bandwidth_hz.min(sensitivity / (threshold * psd_mw));
        return Calibration {
            bandwidth_hz: bw,
            achieved: rate_at(bw),
            sensitivity_limited: true,
        };
    }
    let bw = quantile / (threshold * psd_mw);
    Calibration {
        bandwidth_hz: bw,
        achieved: rate_at(bw),
        sensitivity_limited: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;

    fn c1() -> ClusterGeometry {
        ClusterGeometry::new(450.0, 25.0, 8).unwrap()
    }

    fn c2() -> ClusterGeometry {
        ClusterGeometry::new(900.0, 25.0, 8).unwrap()
    }

    fn sig(id: u64, p: f64) -> TransmissionSignal {
        TransmissionSignal {
            device_id: DeviceId(id),
            cluster: 0,
            received_power_mw: p,
        }
    }

    #[test]
    fn distances() {
        let d = device_distance(&c1(), PlanarOffset::default(), 30.0);
        assert!((d - (450f64 * 450.0 + 900.0).sqrt()).abs() < 1e-12);
        assert!((d - 451.0).abs() < 0.01);
        assert_eq!(device_distance(&c2(), PlanarOffset::default(), 0.0), 900.0);
        let toward = device_distance(&c1(), PlanarOffset { x: -25.0, y: 0.0 }, 30.0);
        assert!((toward - 426.0575).abs() < 1e-3);
    }

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss_db(1000.0).unwrap(), 128.0);
        assert!((path_loss_db(450.0).unwrap() - 114.9607).abs() < 1e-3);
        assert!((path_loss_db(900.0).unwrap() - 126.2795).abs() < 1e-3);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-3.0).is_err());
    }

    #[test]
    fn received_power_deterministic_part() {
        let p = received_power_mw(200.0, path_loss_db(1000.0).unwrap(), 0.0, 1.0);
        assert!((p - 200.0 * 10f64.powf(-12.8)).abs() < 1e-24);
        assert!((p - 3.17e-11).abs() < 0.01e-11);
    }

    #[test]
    fn fading_mean_matches_antenna_count() {
        for m in [1usize, 2] {
            let phy = PhyConfig {
                shadow_std_db: 0.0,
                antenna_count: m,
                ..PhyConfig::default()
            };
            let mut rng = substream(1, Domain::Channel, m as u64);
            let n = 1_000_000;
            let mean: f64 = (0..n).map(|_| sample_received_power(&phy, 1000.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
            let expected = 200.0 * 10f64.powf(-12.8) * m as f64;
            assert!((mean / expected - 1.0).abs() < 0.01, "M={m}: {mean} vs {expected}");
        }
    }

    #[test]
    fn power_decreases_with_distance_in_expectation() {
        let phy = PhyConfig::default();
        let mut last = f64::INFINITY;
        for d in [100.0, 500.0, 1000.0, 5000.0, 50_000.0] {
            let mut rng = substream(9, Domain::Channel, 0);
            let mean: f64 = (0..20_000).map(|_| sample_received_power(&phy, d, &mut rng).unwrap()).sum::<f64>() / 20_000.0;
            assert!(mean < last);
            last = mean;
        }
    }

    #[test]
    fn sic_examples() {
        let params = SicParams {
            noise_mw: 0.1,
            threshold_linear: 10.0,
            sensitivity_mw: None,
        };
        assert_eq!(sic_detect_with(&[], &params), DetectionResult::default());

        let r = sic_detect_with(&[sig(2, 1.0), sig(1, 100.0)], &params);
        assert_eq!(r.decoded, vec![DeviceId(1), DeviceId(2)]);
        assert!(r.failed.is_empty());

        let r = sic_detect_with(&[sig(1, 10.0), sig(2, 9.0)], &params);
        assert!(r.decoded.is_empty());
        assert_eq!(r.failed, vec![DeviceId(1), DeviceId(2)]);
    }

    #[test]
    fn sensitivity_blocks_decoding_but_not_interference() {
        let params = SicParams {
            noise_mw: 1e-6,
            threshold_linear: 10.0,
            sensitivity_mw: Some(0.5),
        };
        // The weak one is below the floor; it still interferes with nothing above it here.
        let r = sic_detect_with(&[sig(1, 100.0), sig(2, 0.4)], &params);
        assert_eq!(r.decoded, vec![DeviceId(1)]);
        assert_eq!(r.failed, vec![DeviceId(2)]);
        // Sub-floor interferers still count: 5 / 0.6 < 10.
        let r = sic_detect_with(&[sig(1, 5.0), sig(2, 0.3), sig(3, 0.3)], &params);
        assert!(r.decoded.is_empty());
    }

    #[test]
    fn ties_broken_by_id() {
        let params = SicParams {
            noise_mw: 0.0,
            threshold_linear: 0.5,
            sensitivity_mw: None,
        };
        let r = sic_detect_with(&[sig(5, 1.0), sig(3, 1.0)], &params);
        assert_eq!(r.decoded, vec![DeviceId(3), DeviceId(5)]);
    }

    #[test]
    fn empty_slot_distribution() {
        let mut rng = substream(1, Domain::PhySampling, 0);
        let t = outcome_distribution(0, 0, &PhyConfig::default(), &[c1(), c2()], 100, &mut rng);
        assert_eq!(t.joint, vec![vec![1.0]]);
    }

    #[test]
    fn lone_c1_beats_lone_c2() {
        let phy = PhyConfig::default();
        let mut rng = substream(2, Domain::PhySampling, 0);
        let one = outcome_distribution(1, 0, &phy, &[c1(), c2()], 100_000, &mut rng).marginal(0, 4)[1];
        let two = outcome_distribution(0, 1, &phy, &[c1(), c2()], 100_000, &mut rng).marginal(1, 4)[1];
        assert!(one > two, "{one} <= {two}");
    }

    #[test]
    fn calibration_hits_target_when_noise_limited() {
        // With a very low floor the rate is set by noise alone.
        let phy = PhyConfig {
            receiver_sensitivity_dbm: -200.0,
            ..PhyConfig::default()
        };
        let mut rng = substream(3, Domain::PhySampling, 0);
        let cal = calibrate_bandwidth(&phy, &c1(), 0.837, 50_000, &mut rng);
        assert!(!cal.sensitivity_limited);
        assert!((cal.achieved - 0.837).abs() < 1e-3);

        let calibrated = PhyConfig {
            bandwidth_hz: cal.bandwidth_hz,
            ..phy
        };
        let mut rng = substream(4, Domain::PhySampling, 0);
        let rate = outcome_distribution(1, 0, &calibrated, &[c1(), c2()], 50_000, &mut rng).marginal(0, 4)[1];
        assert!((rate - 0.837).abs() < 0.01, "{rate}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = PhyConfig {
            tx_power_mw: 0.0,
            ..PhyConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "phy.tx_power_mw");
        let bad = PhyConfig {
            antenna_count: 0,
            ..PhyConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(ClusterGeometry::new(20.0, 25.0, 1).is_err());
        assert!(ClusterGeometry::new(450.0, 25.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn sic_partitions_and_orders(powers in prop::collection::vec(1e-6f64..10.0, 0..8), noise in 1e-4f64..1.0) {
            let signals: Vec<_> = powers.iter().enumerate().map(|(i, &p)| sig(i as u64, p)).collect();
            let params = SicParams { noise_mw: noise, threshold_linear: 2.0, sensitivity_mw: None };
            let r = sic_detect_with(&signals, &params);
            prop_assert_eq!(r.decoded.len() + r.failed.len(), signals.len());
            let mut all: Vec<_> = r.decoded.iter().chain(r.failed.iter()).map(|d| d.0).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..signals.len() as u64).collect::<Vec<_>>());
            let decoded_powers: Vec<f64> = r.decoded.iter().map(|d| powers[d.0 as usize]).collect();
            for w in decoded_powers.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            prop_assert_eq!(r.clone(), sic_detect_with(&signals, &params));
        }
    }
}
