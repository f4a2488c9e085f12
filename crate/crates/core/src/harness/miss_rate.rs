use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    checksum, layer_key, mask_group, mask_sign, signature, LayerGrouping, LayerProtection, SignatureWidth,
};
use crate::qnn::flipped;
use crate::seed::{self, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissRateSpec {
    pub layer_size: usize,
    pub group_size: usize,
    pub interleave: bool,
    pub width: SignatureWidth,
    pub flips: usize,
    pub rounds: u64,
    pub master_seed: u64,
}

impl Default for MissRateSpec {
    fn default() -> Self {
        Self {
            layer_size: 512,
            group_size: 32,
            interleave: true,
            width: SignatureWidth::Two,
            flips: 10,
            rounds: 1_000_000,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissRate {
    pub misses: u64,
    pub rounds: u64,
    pub rate: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z * Z;
    let centre = (p + z2 / (2.0 * n_f)) / (1.0 + z2 / n_f);
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / (1.0 + z2 / n_f);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Probability that a round of random MSB flips on one random layer
/// raises no flag at all.
///
/// The layer and key are fixed for the whole run. Each round only
/// re-derives the checksums of the groups it touches.
pub fn miss_rate(spec: &MissRateSpec) -> Result<MissRate> {
    if spec.rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if spec.flips > spec.layer_size {
        return Err(Error::Config(format!(
            "{} flips do not fit in {} weights",
            spec.flips, spec.layer_size
        )));
    }
    let key = layer_key(spec.master_seed, 0);
    let cfg = LayerProtection {
        width: spec.width,
        ..if spec.interleave {
            LayerProtection::new(spec.group_size, key)
        } else {
            LayerProtection::contiguous(spec.group_size, key)
        }
    };
    cfg.validate()?;
    let mut rng = seed::rng(spec.master_seed, streams::MISS_RATE, 0);
    let weights: Vec<i8> = (0..spec.layer_size).map(|_| rng.gen()).collect();
    let grouping = LayerGrouping::new(spec.layer_size, &cfg);
    let sums: Vec<i64> = (0..grouping.group_count())
        .map(|g| {
            let values: Vec<i8> = grouping.slots(g).map(|s| s.map_or(0, |i| weights[i])).collect();
            checksum(&mask_group(&values, key))
        })
        .collect();
    let golden: Vec<_> = sums.iter().map(|&m| signature(m, spec.width)).collect();
    // masked change of each weight's checksum when its MSB flips
    let deltas: Vec<(usize, i64)> = (0..spec.layer_size)
        .map(|i| {
            let (g, pos) = grouping.locate(i);
            (g, i64::from(mask_sign(key, pos)) * (i64::from(flipped(weights[i], 7)) - i64::from(weights[i])))
        })
        .collect();

    let misses = (0..spec.rounds)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = seed::rng(spec.master_seed, streams::MISS_RATE, r + 1);
            let mut touched: Vec<(usize, i64)> = Vec::with_capacity(spec.flips);
            for i in sample(&mut rng, spec.layer_size, spec.flips) {
                let (g, d) = deltas[i];
                match touched.iter_mut().find(|(tg, _)| *tg == g) {
                    Some(t) => t.1 += d,
                    None => touched.push((g, d)),
                }
            }
            touched
                .iter()
                .all(|&(g, d)| signature(sums[g] + d, spec.width) == golden[g])
        })
        .count() as u64;
    let (ci_low, ci_high) = wilson_interval(misses, spec.rounds);
    Ok(MissRate {
        misses,
        rounds: spec.rounds,
        rate: misses as f64 / spec.rounds as f64,
        ci_low,
        ci_high,
    })
}
