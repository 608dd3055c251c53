//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the plain functions underneath are what the tests exercise.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use noma_access::agent::RewardKind;
use noma_access::detection_table;
use noma_access::phy::{outcome_distribution, ClusterGeometry, PhyConfig};
use noma_access::rng::{substream, Domain};
use noma_access::sim::{run_experiment, DetectionMode, Scheme, SimConfig, TableOverflow};
use noma_access::slot_hash::{collision_count, hash_slot, DeviceId, HashSeed};

/// Longest run the page may request, to keep the tab responsive.
const MAX_FRAMES: u32 = 500_000;

#[derive(Serialize)]
pub struct DetectionRow {
    pub n1: usize,
    pub n2: usize,
    pub simulated: [Vec<f64>; 2],
    /// Published probabilities when the row is tabulated.
    pub tabulated: Option<[Vec<f64>; 2]>,
}

pub fn detection_row(n1: usize, n2: usize, samples: usize, seed: u64) -> Result<DetectionRow, String> {
    if n1 > 6 || n2 > 6 {
        return Err("at most 6 devices per cluster".into());
    }
    let geometry = [
        ClusterGeometry::new(450.0, 25.0, 8).map_err(|e| e.to_string())?,
        ClusterGeometry::new(900.0, 25.0, 8).map_err(|e| e.to_string())?,
    ];
    let mut rng = substream(seed, Domain::PhySampling, 0);
    let t = outcome_distribution(n1, n2, &PhyConfig::default(), &geometry, samples.clamp(1, 200_000), &mut rng);
    let width = n1.max(n2) + 1;
    let tabulated = match (detection_table::marginal(n1, n2, 0), detection_table::marginal(n1, n2, 1)) {
        (Some(a), Some(b)) => Some([a[..width.min(4)].to_vec(), b[..width.min(4)].to_vec()]),
        _ => None,
    };
    Ok(DetectionRow {
        n1,
        n2,
        simulated: [t.marginal(0, width), t.marginal(1, width)],
        tabulated,
    })
}

#[derive(Serialize)]
pub struct HashMapping {
    pub slots: Vec<usize>,
    pub collisions: usize,
}

pub fn hash_map(seed: u64, devices: u64, slots: usize) -> Result<HashMapping, String> {
    if devices > 256 {
        return Err("at most 256 devices".into());
    }
    let ids: Vec<DeviceId> = (0..devices).map(DeviceId).collect();
    let mapped = ids
        .iter()
        .map(|&id| hash_slot(HashSeed(seed), id, slots))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(HashMapping {
        collisions: collision_count(HashSeed(seed), &ids, slots).map_err(|e| e.to_string())?,
        slots: mapped,
    })
}

#[derive(Serialize)]
pub struct RunSummary {
    pub gamma_s: f64,
    pub gamma: Vec<f64>,
    pub jain_hat: f64,
    pub delay: Vec<Option<f64>>,
    pub energy_mj: Vec<Option<f64>>,
    pub trace_window: u64,
    pub trace: Vec<f64>,
    pub access_c1: Vec<f64>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "A" => Ok(Scheme::A),
        "B" => Ok(Scheme::B),
        "B_both_SCF" => Ok(Scheme::BBothScf),
        "WAC" => Ok(Scheme::Wac),
        _ => Err(format!("unknown scheme `{s}`")),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_run(
    scheme: &str,
    reward: &str,
    lambda: f64,
    frames: u32,
    slots: usize,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<RunSummary, String> {
    if frames > MAX_FRAMES {
        return Err(format!("at most {MAX_FRAMES} frames in the browser"));
    }
    let reward_kind = match reward {
        "r1" => RewardKind::R1,
        "r2" => RewardKind::R2,
        _ => return Err(format!("unknown reward `{reward}`")),
    };
    let window = (frames as u64 / 100).max(1);
    let cfg = SimConfig {
        scheme: parse_scheme(scheme)?,
        reward_kind,
        lambda,
        frames: frames as u64,
        master_seed: seed,
        detection: DetectionMode::Table,
        table_overflow: TableOverflow::Clamp,
        trace_window: Some(window),
        ..SimConfig::two_cluster(slots, n1, n2)
    };
    let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let access_c1 = r
        .policy
        .as_ref()
        .map(|p| p.theta[0].iter().map(|&t| noma_access::agent::access_from_log(t)).collect())
        .unwrap_or_default();
    Ok(RunSummary {
        gamma_s: r.report.gamma_s,
        gamma: r.report.gamma,
        jain_hat: r.report.jain_hat,
        delay: r.report.delay,
        energy_mj: r.report.energy_mj,
        trace_window: window,
        trace: r.trace,
        access_c1,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsError::new(&e))
}

/// Simulated and tabulated success-count probabilities for one slot.
#[wasm_bindgen]
pub fn phy_table_row(n1: usize, n2: usize, samples: usize, seed: u32) -> Result<String, JsError> {
    to_json(detection_row(n1, n2, samples, seed as u64))
}

/// Slot of each device id `0..devices` under a hash seed given as decimal text.
#[wasm_bindgen]
pub fn hash_mapping(seed: &str, devices: u32, slots: usize) -> Result<String, JsError> {
    let seed = seed.trim().parse::<u64>().map_err(|_| JsError::new("seed must be an unsigned integer"))?;
    to_json(hash_map(seed, devices as u64, slots))
}

/// Runs the simulator under table detection and reports metrics plus a trace.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn run_simulation(
    scheme: &str,
    reward: &str,
    lambda: f64,
    frames: u32,
    slots: usize,
    n1: usize,
    n2: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_json(simulate_run(scheme, reward, lambda, frames, slots, n1, n2, seed as u64))
}
