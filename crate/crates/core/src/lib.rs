//! Clustered-NOMA uplink random access with a learning base station.
//!
//! Devices in distance-separated clusters share `L` slots per frame. The
//! base station broadcasts a per-cluster access probability and, for
//! semi-contention-free clusters, a hash seed that maps device ids to slots.
//! A policy-gradient agent tunes both from per-frame success counts.

pub mod agent;
pub mod bench;
pub mod detection_table;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod phy;
pub mod queue;
pub mod rng;
pub mod sim;
pub mod slot_hash;
pub mod snapshot;

pub use error::{ConfigError, SimError};
