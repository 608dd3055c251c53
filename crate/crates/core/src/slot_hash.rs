//! Semi-contention-free slot selection.
//!
//! A device in SCF mode computes its slot from the seed broadcast to its
//! cluster and its own identifier:
//!
//! ```text
//! slot = mix(seed + id) mod L
//! mix(x): z = x + 0x9E3779B97F4A7C15
//!         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!         z = z ^ (z >> 31)
//! ```
//!
//! All arithmetic is wrapping 64-bit unsigned. Slots are 0-based. The mixer
//! is fixed so that base station and device firmware agree bit-exactly.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

use crate::rng::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HashSeed(pub u64);

/// Network-wide unique device identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId(pub u64);

impl fmt::Display for HashSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("slot count must be at least 1")]
    ZeroSlots,
    #[error("candidate seed count must be at least 1")]
    ZeroCandidates,
}

/// Slot chosen by device `id` under `seed` in a frame of `slot_count` slots.
pub fn hash_slot(seed: HashSeed, id: DeviceId, slot_count: usize) -> Result<usize, HashError> {
    if slot_count == 0 {
        return Err(HashError::ZeroSlots);
    }
    Ok(hash_slot_unchecked(seed, id, slot_count))
}

#[inline]
pub(crate) fn hash_slot_unchecked(seed: HashSeed, id: DeviceId, slot_count: usize) -> usize {
    (splitmix64(seed.0.wrapping_add(id.0)) % slot_count as u64) as usize
}

/// `q` distinct seeds drawn from the SplitMix64 sequence started at `master_seed`.
pub fn candidate_seeds(q: usize, master_seed: u64) -> Result<Vec<HashSeed>, HashError> {
    if q == 0 {
        return Err(HashError::ZeroCandidates);
    }
    let mut seen = HashSet::with_capacity(q);
    let mut seeds = Vec::with_capacity(q);
    let mut step = 0u64;
    while seeds.len() < q {
        let value = splitmix64(master_seed.wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        step += 1;
        if seen.insert(value) {
            seeds.push(HashSeed(value));
        }
    }
    Ok(seeds)
}

/// Number of devices in `ids` whose slot is shared with at least one other device.
pub fn collision_count(seed: HashSeed, ids: &[DeviceId], slot_count: usize) -> Result<usize, HashError> {
    if slot_count == 0 {
        return Err(HashError::ZeroSlots);
    }
    let mut occupancy = vec![0usize; slot_count];
    for &id in ids {
        occupancy[hash_slot_unchecked(seed, id, slot_count)] += 1;
    }
    Ok(occupancy.iter().filter(|&&n| n > 1).sum())
}

/// Index of the candidate with the fewest collisions for `ids`; ties go to the lowest index.
pub fn least_colliding(candidates: &[HashSeed], ids: &[DeviceId], slot_count: usize) -> Result<usize, HashError> {
    if candidates.is_empty() {
        return Err(HashError::ZeroCandidates);
    }
    let mut best = (usize::MAX, 0);
    for (index, &seed) in candidates.iter().enumerate() {
        let collisions = collision_count(seed, ids, slot_count)?;
        if collisions < best.0 {
            best = (collisions, index);
        }
    }
    Ok(best.1)
}
