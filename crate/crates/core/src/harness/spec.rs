//! TOML experiment description.
//!
//! Every section is optional and every key has a default, so an empty file
//! describes `{4;8+8}`, Scheme A, R1, physical detection, λ = 0.1..1.0.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::agent::{PgHyper, RewardKind};
use crate::bench::{default_access_grid, BenchmarkGrid, SeedSearch};
use crate::error::ConfigError;
use crate::metrics::EnergyParams;
use crate::phy::{ClusterGeometry, PhyConfig};
use crate::rng::{derive_seed, Domain};
use crate::sim::{DelayOrigin, DetectionMode, LambdaSwitch, Scheme, SimConfig, TableOverflow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub slots: usize,
    /// Devices per cluster, nearest cluster first.
    pub devices: Vec<usize>,
    pub distances_m: Vec<f64>,
    pub radius_m: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            slots: 4,
            devices: vec![8, 8],
            distances_m: vec![450.0, 900.0],
            radius_m: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub lambda: Vec<f64>,
    /// Frame at which the arrival rate jumps to `switch_lambda`.
    pub switch_frame: Option<u64>,
    pub switch_lambda: Option<f64>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            lambda: (1..=10).map(|k| k as f64 / 10.0).collect(),
            switch_frame: None,
            switch_lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccessSection {
    pub scheme: Scheme,
    pub reward: RewardKind,
    pub update_interval: u64,
    pub detection: DetectionMode,
    pub table_overflow: TableOverflow,
    pub delay_origin: DelayOrigin,
}

impl Default for AccessSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::A,
            reward: RewardKind::R1,
            update_interval: 1,
            detection: DetectionMode::Physical,
            table_overflow: TableOverflow::Error,
            delay_origin: DelayOrigin::HeadOfLine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub frames: u64,
    pub seed: u64,
    pub replications: usize,
    pub warmup_fraction: f64,
    /// Convergence window in frames.
    pub window: u64,
    pub freeze_agent: bool,
    /// Policy snapshot to start from instead of a cold start.
    pub warm_start: Option<String>,
    /// Directory that receives one policy snapshot per run.
    pub policy_out: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            frames: 2_000_000,
            seed: 1,
            replications: 1,
            warmup_fraction: 0.5,
            window: 10_000,
            freeze_agent: false,
            warm_start: None,
            policy_out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub grid_step: f64,
    pub eval_frames: u64,
    pub warmup_fraction: f64,
    pub seed_search: SeedSearch,
    pub max_points: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let g = BenchmarkGrid::default();
        Self {
            grid_step: 0.05,
            eval_frames: g.eval_frames,
            warmup_fraction: g.warmup_fraction,
            seed_search: g.seed_search,
            max_points: g.max_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyTableSection {
    pub n_max: usize,
    pub samples: usize,
}

impl Default for PhyTableSection {
    fn default() -> Self {
        Self {
            n_max: 3,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    /// Target lone-C1 success probability.
    pub target: f64,
    pub samples: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            target: 0.837,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub network: NetworkSection,
    pub traffic: TrafficSection,
    pub access: AccessSection,
    pub agent: PgHyper,
    pub phy: PhyConfig,
    pub energy: EnergyParams,
    pub run: RunSection,
    pub benchmark: BenchmarkSection,
    pub phy_table: PhyTableSection,
    pub calibrate: CalibrateSection,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical TOML form; the spec hash is taken over this text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.network;
        if n.devices.is_empty() {
            return Err(ConfigError::new("network.devices", "at least one cluster is required"));
        }
        if n.distances_m.len() != n.devices.len() {
            return Err(ConfigError::new(
                "network.distances_m",
                format!("expected {} entries to match network.devices", n.devices.len()),
            ));
        }
        if self.traffic.lambda.is_empty() {
            return Err(ConfigError::new("traffic.lambda", "at least one value is required"));
        }
        if self.traffic.lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(ConfigError::new("traffic.lambda", "values must lie in [0, 1]"));
        }
        if self.traffic.switch_frame.is_some() != self.traffic.switch_lambda.is_some() {
            return Err(ConfigError::new(
                "traffic.switch_lambda",
                "switch_frame and switch_lambda must be given together",
            ));
        }
        if self.run.replications == 0 {
            return Err(ConfigError::new("run.replications", "must be at least 1"));
        }
        if self.run.window == 0 {
            return Err(ConfigError::new("run.window", "must be at least 1"));
        }
        let b = &self.benchmark;
        let steps = 0.9 / b.grid_step;
        if !(b.grid_step > 0.0 && b.grid_step <= 0.9 && (steps - steps.round()).abs() < 1e-9) {
            return Err(ConfigError::new("benchmark.grid_step", "must divide 0.9 evenly"));
        }
        if b.eval_frames == 0 {
            return Err(ConfigError::new("benchmark.eval_frames", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&b.warmup_fraction) {
            return Err(ConfigError::new("benchmark.warmup_fraction", "must lie in [0, 1)"));
        }
        if self.phy_table.samples < 10_000 {
            return Err(ConfigError::new("phy_table.samples", "must be at least 10000"));
        }
        if !(0.0..=1.0).contains(&self.calibrate.target) {
            return Err(ConfigError::new("calibrate.target", "must lie in [0, 1]"));
        }
        if self.calibrate.samples == 0 {
            return Err(ConfigError::new("calibrate.samples", "must be at least 1"));
        }
        // Everything that only the simulator checks.
        self.sim_config(self.traffic.lambda[0], self.run.seed)?.validate()
    }

    pub fn geometries(&self) -> Vec<ClusterGeometry> {
        let n = &self.network;
        n.devices
            .iter()
            .zip(&n.distances_m)
            .map(|(&count, &d)| ClusterGeometry {
                center_distance_m: d,
                radius_m: n.radius_m,
                device_count: count,
            })
            .collect()
    }

    /// Master seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        derive_seed(self.run.seed, Domain::Replication, r as u64)
    }

    pub fn replication_seeds(&self) -> Vec<u64> {
        (0..self.run.replications).map(|r| self.replication_seed(r)).collect()
    }

    /// λ values in ascending order.
    pub fn sorted_lambdas(&self) -> Vec<f64> {
        let mut l = self.traffic.lambda.clone();
        l.sort_by(f64::total_cmp);
        l
    }

    pub fn sim_config(&self, lambda: f64, master_seed: u64) -> Result<SimConfig, ConfigError> {
        for g in self.geometries() {
            g.validate()?;
        }
        Ok(SimConfig {
            slot_count: self.network.slots,
            clusters: self.geometries(),
            lambda,
            lambda_switch: match (self.traffic.switch_frame, self.traffic.switch_lambda) {
                (Some(frame), Some(lambda)) => Some(LambdaSwitch { frame, lambda }),
                _ => None,
            },
            scheme: self.access.scheme,
            reward_kind: self.access.reward,
            update_interval: self.access.update_interval,
            frames: self.run.frames,
            master_seed,
            detection: self.access.detection,
            table_overflow: self.access.table_overflow,
            delay_origin: self.access.delay_origin,
            warmup_fraction: self.run.warmup_fraction,
            trace_window: None,
            phy: self.phy.clone(),
            hyper: self.agent.clone(),
            energy: self.energy.clone(),
            initial_policy: None,
            frozen_agent: self.run.freeze_agent,
        })
    }

    pub fn benchmark_grid(&self) -> BenchmarkGrid {
        let b = &self.benchmark;
        BenchmarkGrid {
            access_probs: default_access_grid(b.grid_step),
            eval_frames: b.eval_frames,
            warmup_fraction: b.warmup_fraction,
            seed_search: b.seed_search,
            max_points: b.max_points,
        }
    }
}

/// Maps a TOML error to the `section.key` it points at.
fn toml_error(text: &str, err: &toml::de::Error) -> ConfigError {
    let message = err.message().trim().to_string();
    if let Some(name) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    {
        let section = err.span().map(|s| section_at(text, s.start)).unwrap_or_default();
        return ConfigError::new(join_key(&section, name), message);
    }
    let field = match err.span() {
        Some(span) => {
            let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
            let line = &text[line_start..];
            let line = line.lines().next().unwrap_or("");
            let section = section_at(text, span.start);
            match line.split_once('=') {
                Some((key, _)) => join_key(&section, key.trim()),
                None => line.trim().trim_matches(|c| c == '[' || c == ']').to_string(),
            }
        }
        None => String::from("config"),
    };
    ConfigError::new(field, message)
}

fn section_at(text: &str, offset: usize) -> String {
    text[..offset]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
        .unwrap_or_default()
}

fn join_key(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_network() {
        let spec = ExperimentSpec::from_toml("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.traffic.lambda.len(), 10);
        let cfg = spec.sim_config(0.5, 9).unwrap();
        assert_eq!(cfg.total_devices(), 16);
        assert_eq!(cfg.slot_count, 4);
    }

    #[test]
    fn canonical_form_round_trips() {
        let spec = ExperimentSpec::from_toml("[access]\nscheme = \"B\"\ndetection = \"table\"\n").unwrap();
        assert_eq!(spec.access.scheme, Scheme::B);
        assert_eq!(ExperimentSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = ExperimentSpec::from_toml("[run]\nframes = 10\nbogus = 1\n").unwrap_err();
        assert_eq!(err.field, "run.bogus");
    }

    #[test]
    fn bad_type_names_the_field() {
        let err = ExperimentSpec::from_toml("[phy]\ntx_power_mw = \"loud\"\n").unwrap_err();
        assert_eq!(err.field, "phy.tx_power_mw");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let cases = [
            ("[traffic]\nlambda = [0.5, 1.5]\n", "traffic.lambda"),
            ("[run]\nreplications = 0\n", "run.replications"),
            ("[network]\nslots = 0\n", "network.slots"),
            ("[network]\ndevices = [8]\n", "network.distances_m"),
            ("[agent]\nsigma = -1.0\n", "agent.sigma"),
            ("[access]\ndetection = \"table\"\n[network]\ndevices = [4]\ndistances_m = [450.0]\n", "access.detection"),
            ("[benchmark]\ngrid_step = 0.07\n", "benchmark.grid_step"),
        ];
        for (text, field) in cases {
            assert_eq!(ExperimentSpec::from_toml(text).unwrap_err().field, field, "{text}");
        }
    }

    #[test]
    fn replication_seeds_are_distinct() {
        let spec = ExperimentSpec {
            run: RunSection {
                replications: 5,
                ..RunSection::default()
            },
            ..ExperimentSpec::default()
        };
        let seeds = spec.replication_seeds();
        let unique: std::collections::HashSet<_> = seeds.iter().collect();
        assert_eq!(unique.len(), 5);
    }
}
