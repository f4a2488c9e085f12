use std::collections::HashSet;

use super::profile::{commit, AttackProfile};
use crate::qnn::{flipped, LossProbe, QuantizedModel, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbfaConfig {
    /// Number of flips to commit.
    pub n_bf: usize,
    /// Candidates kept per layer after first-order ranking.
    pub candidates_per_layer: usize,
    /// Bit positions the attacker may touch.
    pub allowed_bits: Vec<u8>,
}

impl PbfaConfig {
    pub fn new(n_bf: usize) -> Self {
        Self {
            n_bf,
            candidates_per_layer: 10,
            allowed_bits: (0..8).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    layer: usize,
    index: usize,
    bit: u8,
    score: f64,
}

/// Progressive bit-flip attack.
///
/// Each step ranks every bit of every weight not yet attacked by the
/// first-order loss change `|dL/dw_int * delta_int|`, keeps the best `k`
/// per layer, measures
/// the exact post-flip loss of each survivor and commits the one with the
/// largest loss (ties: lowest layer, index, bit). Flips persist across
/// steps. If no candidate would raise the loss the attack stops early.
pub fn pbfa(model: &mut QuantizedModel, batch: &Split, cfg: &PbfaConfig) -> Result<AttackProfile> {
    if cfg.allowed_bits.iter().any(|&b| b > 7) {
        return Err(Error::Config("bit positions must be in 0..=7".into()));
    }
    let mut bits = cfg.allowed_bits.clone();
    bits.sort_unstable();
    bits.dedup();
    let budget = if bits.is_empty() { 0 } else { model.total_weights() };
    if cfg.n_bf > budget {
        return Err(Error::Config(format!(
            "{} flips requested but only {budget} attackable weights",
            cfg.n_bf
        )));
    }

    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut profile = AttackProfile::default();
    let mut current = model.loss(&batch.inputs, &batch.labels)?;
    profile.loss_trajectory.push(current);

    for _ in 0..cfg.n_bf {
        let (_, grads) = model.loss_and_grad(&batch.inputs, &batch.labels)?;
        let mut candidates = Vec::new();
        for (layer, g) in grads.weights.iter().enumerate() {
            let scale = model.scale(layer);
            let weights = model.weights(layer);
            let mut ranked: Vec<Candidate> = Vec::with_capacity(weights.len() * bits.len());
            for (index, (&w, &gw)) in weights.iter().zip(g).enumerate() {
                if used.contains(&(layer, index)) {
                    continue;
                }
                for &bit in &bits {
                    let delta = f64::from(flipped(w, bit)) - f64::from(w);
                    ranked.push(Candidate {
                        layer,
                        index,
                        bit,
                        score: (gw * scale * delta).abs(),
                    });
                }
            }
            let k = cfg.candidates_per_layer.min(ranked.len());
            if k == 0 {
                continue;
            }
            ranked.select_nth_unstable_by(k - 1, |a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then((a.index, a.bit).cmp(&(b.index, b.bit)))
            });
            ranked.truncate(k);
            candidates.extend(ranked);
        }
        candidates.sort_by_key(|c| (c.layer, c.index, c.bit));

        let probe = LossProbe::new(model, &batch.inputs, &batch.labels)?;
        let losses: Vec<f64> = candidates
            .iter()
            .map(|c| {
                let w = model.weights(c.layer)[c.index];
                probe.loss_with(model, c.layer, c.index, flipped(w, c.bit))
            })
            .collect();

        let mut best: Option<(usize, f64)> = None;
        for (i, &l) in losses.iter().enumerate() {
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((i, l));
            }
        }
        let Some((i, loss)) = best else { break };
        if loss < current {
            break;
        }
        let c = candidates[i];
        profile.flips.push(commit(model, c.layer, c.index, c.bit)?);
        used.insert((c.layer, c.index));
        current = loss;
        profile.loss_trajectory.push(current);
    }
    Ok(profile)
}

/// PBFA limited to the given bit positions (for example `[6]` to stay off
/// the most significant bit).
pub fn restricted_pbfa(
    model: &mut QuantizedModel,
    batch: &Split,
    n_bf: usize,
    allowed_bits: &[u8],
) -> Result<AttackProfile> {
    let cfg = PbfaConfig {
        allowed_bits: allowed_bits.to_vec(),
        ..PbfaConfig::new(n_bf)
    };
    pbfa(model, batch, &cfg)
}
