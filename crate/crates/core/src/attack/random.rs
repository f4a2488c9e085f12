use rand::Rng;

use super::profile::{commit, AttackProfile};
use crate::qnn::QuantizedModel;
use crate::{Error, Result};

/// Flips `n` distinct `(layer, index, bit)` sites drawn uniformly from the
/// allowed bit positions of every weight.
pub fn random_attack(
    model: &mut QuantizedModel,
    n: usize,
    bit_positions: &[u8],
    rng: &mut impl Rng,
) -> Result<AttackProfile> {
    let mut bits = bit_positions.to_vec();
    bits.sort_unstable();
    bits.dedup();
    if bits.iter().any(|&b| b > 7) {
        return Err(Error::Config("bit positions must be in 0..=7".into()));
    }
    let sizes = model.layer_sizes();
    let total = model.total_weights() * bits.len();
    if n > total {
        return Err(Error::Config(format!("{n} flips requested but only {total} bits")));
    }
    let mut picks = rand::seq::index::sample(rng, total, n).into_vec();
    picks.sort_unstable();
    let mut profile = AttackProfile::default();
    for pick in picks {
        let (mut site, bit) = (pick / bits.len(), bits[pick % bits.len()]);
        let mut layer = 0;
        while site >= sizes[layer] {
            site -= sizes[layer];
            layer += 1;
        }
        profile.flips.push(commit(model, layer, site, bit)?);
    }
    Ok(profile)
}
