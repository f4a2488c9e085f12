//! Fault-injection adversaries and attack-profile statistics.

mod paired;
mod pbfa;
mod profile;
mod random;
mod stats;

pub use paired::paired_attack;
pub use pbfa::{pbfa, restricted_pbfa, PbfaConfig};
pub use profile::{AttackProfile, BitFlip};
pub use random::random_attack;
pub use stats::{profile_stats, CollisionPoint, ProfileStats, WEIGHT_RANGES};
