use std::collections::HashSet;

use super::pbfa::{pbfa, PbfaConfig};
use super::profile::{commit, AttackProfile};
use crate::qnn::{flipped, FlipDirection, QuantizedModel, Split};
use crate::Result;

/// PBFA followed by one camouflage flip per committed flip.
///
/// The attacker assumes contiguous groups of `assumed_group_size` and, for
/// each PBFA flip, flips the most significant bit of another weight in the
/// same assumed group in the opposite direction, so that an unmasked sum
/// would not move. Among eligible weights the one with the smallest
/// first-order loss impact is chosen (ties: lowest index). Flips with no
/// eligible partner are listed in `skipped_companions`.
pub fn paired_attack(
    model: &mut QuantizedModel,
    batch: &Split,
    cfg: &PbfaConfig,
    assumed_group_size: usize,
) -> Result<AttackProfile> {
    let mut profile = pbfa(model, batch, cfg)?;
    let (_, grads) = model.loss_and_grad(&batch.inputs, &batch.labels)?;
    let mut used: HashSet<(usize, usize)> = profile.flips.iter().map(|f| (f.layer, f.flat_index)).collect();
    let g = assumed_group_size.max(1);

    let primaries = profile.flips.len();
    for p in 0..primaries {
        let primary = profile.flips[p];
        let want = primary.direction.opposite();
        let weights = model.weights(primary.layer);
        let start = primary.flat_index / g * g;
        let end = (start + g).min(weights.len());
        let scale = model.scale(primary.layer);
        let grad = &grads.weights[primary.layer];
        let mut best: Option<(usize, f64)> = None;
        for j in start..end {
            if used.contains(&(primary.layer, j)) || FlipDirection::of(weights[j], 7) != want {
                continue;
            }
            let delta = f64::from(flipped(weights[j], 7)) - f64::from(weights[j]);
            let impact = (grad[j] * scale * delta).abs();
            if best.is_none_or(|(_, b)| impact < b) {
                best = Some((j, impact));
            }
        }
        match best {
            Some((j, _)) => {
                let mut flip = commit(model, primary.layer, j, 7)?;
                flip.companion_of = Some(p);
                profile.flips.push(flip);
                used.insert((primary.layer, j));
            }
            None => profile.skipped_companions.push(p),
        }
    }
    Ok(profile)
}
