//! Base-station actor-critic agent.
//!
//! Per cluster the agent keeps a log-normal access-probability policy with
//! one mean per state (`theta`), and for SCF clusters a soft-max seed policy
//! with one row of `q` preferences per state (`phi`). A tabular state value
//! (`omega`) supplies the TD error that drives every update. The state is
//! the number of successes observed in the preceding frame.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::error::ConfigError;
use crate::rng::SimRng;
use crate::slot_hash::HashSeed;

/// Lower edge of the access-probability range.
pub const MIN_ACCESS: f64 = 0.1;

/// Log-domain samples are clipped here so the transform stays strictly inside (0.1, 1).
const LOG_CLIP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgHyper {
    pub sigma: f64,
    pub epsilon: f64,
    pub alpha_theta: f64,
    pub alpha_phi: f64,
    pub alpha_omega: f64,
    pub candidate_seeds: usize,
}

impl Default for PgHyper {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            epsilon: 0.5,
            alpha_theta: 0.001,
            alpha_phi: 0.01,
            alpha_omega: 0.001,
            candidate_seeds: 10,
        }
    }
}

impl PgHyper {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ConfigError::new("agent.sigma", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(ConfigError::new("agent.epsilon", "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("agent.alpha_theta", self.alpha_theta),
            ("agent.alpha_phi", self.alpha_phi),
            ("agent.alpha_omega", self.alpha_omega),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::new(name, "must be a non-negative finite step"));
            }
        }
        if self.candidate_seeds == 0 {
            return Err(ConfigError::new("agent.candidate_seeds", "must be at least 1"));
        }
        Ok(())
    }
}

/// Total successes seen in the preceding frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct AgentState(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// Total successes.
    R1,
    /// Total successes times the instantaneous Jain index.
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedChoice {
    pub index: usize,
    pub seed: HashSeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionBundle {
    pub access_probs: Vec<f64>,
    /// `Some` for clusters in SCF mode.
    pub seeds: Vec<Option<SeedChoice>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("access probability {0} is outside (0.1, 1)")]
    AccessOutOfRange(f64),
    #[error("cluster {0} has no seed policy")]
    NotScf(usize),
    #[error("seed index {index} out of range for {q} candidates")]
    SeedIndex { index: usize, q: usize },
    #[error("state {state} out of range for {n} states")]
    State { state: usize, n: usize },
    #[error("cluster {0} out of range")]
    Cluster(usize),
}

/// Policy and value parameters plus the hyper-parameters they are used with.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub hyper: PgHyper,
    pub n_states: usize,
    /// `theta[cluster][state]`.
    pub theta: Vec<Vec<f64>>,
    /// `phi[cluster]` is a row-major `n_states x q` matrix for SCF clusters.
    pub phi: Vec<Option<Vec<f64>>>,
    pub omega: Vec<f64>,
}

impl PolicyState {
    /// All-zero parameters. `scf[i]` marks clusters that get a seed policy.
    pub fn cold_start(hyper: PgHyper, n_states: usize, scf: &[bool]) -> Self {
        let q = hyper.candidate_seeds;
        Self {
            theta: vec![vec![0.0; n_states]; scf.len()],
            phi: scf.iter().map(|&on| on.then(|| vec![0.0; n_states * q])).collect(),
            omega: vec![0.0; n_states],
            n_states,
            hyper,
        }
    }

    pub fn clusters(&self) -> usize {
        self.theta.len()
    }

    pub fn q(&self) -> usize {
        self.hyper.candidate_seeds
    }

    fn check_state(&self, s: AgentState) -> Result<(), AgentError> {
        if s.0 >= self.n_states {
            return Err(AgentError::State {
                state: s.0,
                n: self.n_states,
            });
        }
        Ok(())
    }

    fn check_cluster(&self, cluster: usize) -> Result<(), AgentError> {
        if cluster >= self.clusters() {
            return Err(AgentError::Cluster(cluster));
        }
        Ok(())
    }

    /// Preference row `phi[cluster][s, ..]`.
    pub fn seed_row(&self, cluster: usize, s: AgentState) -> Result<&[f64], AgentError> {
        self.check_cluster(cluster)?;
        self.check_state(s)?;
        let q = self.q();
        let phi = self.phi[cluster].as_ref().ok_or(AgentError::NotScf(cluster))?;
        Ok(&phi[s.0 * q..(s.0 + 1) * q])
    }

    pub fn seed_probabilities(&self, cluster: usize, s: AgentState) -> Result<Vec<f64>, AgentError> {
        Ok(softmax(self.seed_row(cluster, s)?))
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().all(|v| v.is_finite())
            && self.theta.iter().flatten().all(|v| v.is_finite())
            && self.phi.iter().flatten().flatten().all(|v| v.is_finite())
    }
}

/// Maps a log-domain sample `log a'` to the access probability `(0.1 + a') / (1 + a')`.
pub fn access_from_log(log_a: f64) -> f64 {
    let x = log_a.clamp(-LOG_CLIP, LOG_CLIP);
    1.0 - (1.0 - MIN_ACCESS) / (1.0 + x.exp())
}

/// Inverse of [`access_from_log`]: `log((a - 0.1) / (1 - a))`.
pub fn log_from_access(a: f64) -> f64 {
    ((a - MIN_ACCESS) / (1.0 - a)).ln()
}

/// Log-density of access probability `a` under mean `theta`, including the Jacobian.
pub fn access_log_density(theta: f64, sigma: f64, a: f64) -> f64 {
    let x = log_from_access(a);
    let z = (x - theta) / sigma;
    let jacobian = (1.0 - MIN_ACCESS) / ((a - MIN_ACCESS) * (1.0 - a));
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln() + jacobian.ln()
}

/// `d/dtheta log pi(a | theta)`.
pub fn access_score(theta: f64, sigma: f64, a: f64) -> f64 {
    (log_from_access(a) - theta) / (sigma * sigma)
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&h| (h - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log tau(j | row)`.
pub fn seed_log_prob(row: &[f64], j: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&h| (h - max).exp()).sum::<f64>().ln();
    row[j] - lse
}

/// Gradient of `log tau(j | row)` with respect to every element of `row`.
pub fn seed_score(row: &[f64], j: usize) -> Vec<f64> {
    softmax(row)
        .into_iter()
        .enumerate()
        .map(|(k, p)| if k == j { 1.0 - p } else { -p })
        .collect()
}

/// Instantaneous Jain index of per-cluster counts; 0 when every count is 0.
pub fn instantaneous_jain(counts: &[u64]) -> f64 {
    let sum: f64 = counts.iter().map(|&c| c as f64).sum();
    let sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    if sq == 0.0 {
        0.0
    } else {
        sum * sum / (counts.len() as f64 * sq)
    }
}

pub fn reward(kind: RewardKind, successes: &[u64]) -> f64 {
    let total: f64 = successes.iter().map(|&c| c as f64).sum();
    match kind {
        RewardKind::R1 => total,
        RewardKind::R2 => total * instantaneous_jain(successes),
    }
}

pub fn sample_access_prob(
    policy: &PolicyState,
    cluster: usize,
    s: AgentState,
    rng: &mut SimRng,
) -> Result<f64, AgentError> {
    policy.check_cluster(cluster)?;
    policy.check_state(s)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(access_from_log(policy.theta[cluster][s.0] + policy.hyper.sigma * z))
}

pub fn sample_seed(policy: &PolicyState, cluster: usize, s: AgentState, rng: &mut SimRng) -> Result<usize, AgentError> {
    let probs = policy.seed_probabilities(cluster, s)?;
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return Ok(j);
        }
    }
    Ok(probs.len() - 1)
}

/// `r + epsilon * omega[s_next] - omega[s]`.
pub fn td_error(policy: &PolicyState, s: AgentState, s_next: AgentState, r: f64) -> Result<f64, AgentError> {
    policy.check_state(s)?;
    policy.check_state(s_next)?;
    Ok(r + policy.hyper.epsilon * policy.omega[s_next.0] - policy.omega[s.0])
}

pub fn update_value(policy: &mut PolicyState, s: AgentState, delta: f64) -> Result<(), AgentError> {
    policy.check_state(s)?;
    policy.omega[s.0] += policy.hyper.alpha_omega * delta;
    Ok(())
}

pub fn update_access_policy(
    policy: &mut PolicyState,
    cluster: usize,
    s: AgentState,
    a: f64,
    delta: f64,
) -> Result<(), AgentError> {
    policy.check_cluster(cluster)?;
    policy.check_state(s)?;
    if !(a > MIN_ACCESS && a < 1.0) {
        return Err(AgentError::AccessOutOfRange(a));
    }
    let theta = policy.theta[cluster][s.0];
    let step = policy.hyper.alpha_theta * delta * access_score(theta, policy.hyper.sigma, a);
    policy.theta[cluster][s.0] = theta + step;
    Ok(())
}

/// Soft-max score-function step on row `s`: `phi += alpha_phi * delta * (1{j = chosen} - tau_j)`.
pub fn update_seed_policy(
    policy: &mut PolicyState,
    cluster: usize,
    s: AgentState,
    chosen: usize,
    delta: f64,
) -> Result<(), AgentError> {
    let q = policy.q();
    if chosen >= q {
        return Err(AgentError::SeedIndex { index: chosen, q });
    }
    let score = seed_score(policy.seed_row(cluster, s)?, chosen);
    let alpha = policy.hyper.alpha_phi;
    let row = &mut policy.phi[cluster].as_mut().expect("checked by seed_row")[s.0 * q..(s.0 + 1) * q];
    for (h, g) in row.iter_mut().zip(score) {
        *h += alpha * delta * g;
    }
    Ok(())
}

/// The learning agent: policy, current state, candidate seeds and its own random stream.
#[derive(Debug, Clone)]
pub struct PgAgent {
    pub policy: PolicyState,
    pub reward_kind: RewardKind,
    state: AgentState,
    candidates: Vec<Vec<HashSeed>>,
    rng: SimRng,
    current: ActionBundle,
    pub frozen: bool,
}

impl PgAgent {
    /// `candidates[i]` is the seed set of cluster `i` (empty for CB clusters).
    pub fn new(policy: PolicyState, reward_kind: RewardKind, candidates: Vec<Vec<HashSeed>>, mut rng: SimRng) -> Self {
        let state = AgentState(0);
        let current = sample_actions(&policy, &candidates, state, &mut rng);
        Self {
            policy,
            reward_kind,
            state,
            candidates,
            rng,
            current,
            frozen: false,
        }
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    /// Actions in force for the current update interval.
    pub fn actions(&self) -> &ActionBundle {
        &self.current
    }

    pub fn candidates(&self) -> &[Vec<HashSeed>] {
        &self.candidates
    }

    /// One update: reward from `interval_successes`, TD error towards
    /// `next_state`, policy and value updates at the current state, state
    /// transition, then fresh actions for the next interval.
    pub fn step(&mut self, interval_successes: &[u64], next_state: AgentState) -> Result<&ActionBundle, AgentError> {
        let next_state = AgentState(next_state.0.min(self.policy.n_states - 1));
        if !self.frozen {
            let s = self.state;
            let r = reward(self.reward_kind, interval_successes);
            let delta = td_error(&self.policy, s, next_state, r)?;
            for cluster in 0..self.policy.clusters() {
                update_access_policy(&mut self.policy, cluster, s, self.current.access_probs[cluster], delta)?;
            }
            for cluster in 0..self.policy.clusters() {
                if let Some(choice) = self.current.seeds[cluster] {
                    update_seed_policy(&mut self.policy, cluster, s, choice.index, delta)?;
                }
            }
            update_value(&mut self.policy, s, delta)?;
        }
        self.state = next_state;
        self.current = sample_actions(&self.policy, &self.candidates, self.state, &mut self.rng);
        Ok(&self.current)
    }
}

fn sample_actions(policy: &PolicyState, candidates: &[Vec<HashSeed>], s: AgentState, rng: &mut SimRng) -> ActionBundle {
    let clusters = policy.clusters();
    let mut access_probs = Vec::with_capacity(clusters);
    let mut seeds = Vec::with_capacity(clusters);
    for (cluster, pool) in candidates.iter().enumerate().take(clusters) {
        access_probs.push(sample_access_prob(policy, cluster, s, rng).expect("state clamped to range"));
        seeds.push(if policy.phi[cluster].is_some() {
            let index = sample_seed(policy, cluster, s, rng).expect("SCF cluster");
            Some(SeedChoice {
                index,
                seed: pool[index],
            })
        } else {
            None
        });
    }
    ActionBundle { access_probs, seeds }
}
