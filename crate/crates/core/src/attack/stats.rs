use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::profile::AttackProfile;
use crate::codec::{LayerGrouping, LayerProtection};
use crate::qnn::FlipDirection;

/// Pre-flip weight bins: `[-128,-32)`, `[-32,0)`, `[0,32)`, `[32,127]`.
pub const WEIGHT_RANGES: [&str; 4] = ["(-128,-32)", "(-32,0)", "(0,32)", "(32,127)"];

fn weight_bin(v: i8) -> usize {
    match v {
        i8::MIN..=-33 => 0,
        -32..=-1 => 1,
        0..=31 => 2,
        _ => 3,
    }
}

/// Share of profiles with two or more flips landing in one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionPoint {
    pub group_size: usize,
    pub contiguous: f64,
    pub interleaved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStats {
    pub rounds: usize,
    pub total_flips: usize,
    pub msb_zero_to_one: usize,
    pub msb_one_to_zero: usize,
    pub other_bits: usize,
    /// Counts per [`WEIGHT_RANGES`] bin.
    pub weight_ranges: [usize; 4],
    /// Targeted weights strictly inside (-32, 32).
    pub small_weight_targets: usize,
    pub collisions: Vec<CollisionPoint>,
}

impl ProfileStats {
    pub fn msb_fraction(&self) -> f64 {
        (self.msb_zero_to_one + self.msb_one_to_zero) as f64 / self.total_flips.max(1) as f64
    }
}

fn has_collision(profile: &AttackProfile, groupings: &[LayerGrouping]) -> bool {
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &profile.flips {
        let g = groupings[f.layer].locate(f.flat_index).0;
        let n = seen.entry((f.layer, g)).or_default();
        *n += 1;
        if *n >= 2 {
            return true;
        }
    }
    false
}

/// Bit-position and weight-value tallies over all flips, and for every
/// group size the proportion of profiles with a multi-flip group under
/// contiguous and interleaved (stride `G`, given offset) grouping.
pub fn profile_stats(
    profiles: &[AttackProfile],
    layer_sizes: &[usize],
    group_sizes: &[usize],
    offset: usize,
) -> ProfileStats {
    let mut stats = ProfileStats {
        rounds: profiles.len(),
        total_flips: 0,
        msb_zero_to_one: 0,
        msb_one_to_zero: 0,
        other_bits: 0,
        weight_ranges: [0; 4],
        small_weight_targets: 0,
        collisions: Vec::new(),
    };
    for f in profiles.iter().flat_map(|p| &p.flips) {
        stats.total_flips += 1;
        match (f.bit, f.direction) {
            (7, FlipDirection::ZeroToOne) => stats.msb_zero_to_one += 1,
            (7, FlipDirection::OneToZero) => stats.msb_one_to_zero += 1,
            _ => stats.other_bits += 1,
        }
        stats.weight_ranges[weight_bin(f.pre_flip_weight)] += 1;
        if (-31..=31).contains(&f.pre_flip_weight) {
            stats.small_weight_targets += 1;
        }
    }
    let n = profiles.len().max(1) as f64;
    for &g in group_sizes {
        let contiguous: Vec<LayerGrouping> = layer_sizes
            .iter()
            .map(|&l| LayerGrouping::new(l, &LayerProtection::contiguous(g, 0)))
            .collect();
        let interleaved: Vec<LayerGrouping> = layer_sizes
            .iter()
            .map(|&l| {
                LayerGrouping::new(
                    l,
                    &LayerProtection {
                        offset,
                        ..LayerProtection::new(g, 0)
                    },
                )
            })
            .collect();
        let count = |gs: &[LayerGrouping]| profiles.iter().filter(|p| has_collision(p, gs)).count() as f64 / n;
        stats.collisions.push(CollisionPoint {
            group_size: g,
            contiguous: count(&contiguous),
            interleaved: count(&interleaved),
        });
    }
    stats
}
