use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::qnn::{FlipDirection, QuantizedModel};
use crate::{Error, Result};

/// One committed bit flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitFlip {
    pub layer: usize,
    pub flat_index: usize,
    pub bit: u8,
    pub direction: FlipDirection,
    pub pre_flip_weight: i8,
    /// For camouflage flips, the profile index of the flip they pair with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub companion_of: Option<usize>,
}

impl BitFlip {
    pub fn is_msb(&self) -> bool {
        self.bit == 7
    }

    pub fn site(&self) -> (usize, usize) {
        (self.layer, self.flat_index)
    }
}

/// Ordered record of an attack round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackProfile {
    pub flips: Vec<BitFlip>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub batch_id: String,
    /// Attack-batch loss before the first flip and after each committed
    /// flip (gradient-guided attacks only).
    #[serde(default)]
    pub loss_trajectory: Vec<f64>,
    /// Primary flips for which no camouflage companion could be placed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_companions: Vec<usize>,
}

impl AttackProfile {
    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    /// Flips that are not camouflage companions.
    pub fn primary(&self) -> impl Iterator<Item = &BitFlip> {
        self.flips.iter().filter(|f| f.companion_of.is_none())
    }

    pub fn sites(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.flips.iter().map(BitFlip::site)
    }

    pub fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.flips {
            if !seen.insert((f.layer, f.flat_index, f.bit)) {
                return Err(Error::Config(format!(
                    "duplicate flip of layer {} index {} bit {}",
                    f.layer, f.flat_index, f.bit
                )));
            }
        }
        Ok(())
    }

    /// Re-applies the flips in order to a clean model, checking every
    /// recorded pre-flip value and direction against the model state.
    pub fn replay(&self, model: &mut QuantizedModel) -> Result<()> {
        for (n, f) in self.flips.iter().enumerate() {
            let current = *model
                .layers()
                .get(f.layer)
                .and_then(|l| l.weights.values().get(f.flat_index))
                .ok_or_else(|| Error::OutOfRange(format!("flip {n} addresses layer {} index {}", f.layer, f.flat_index)))?;
            if current != f.pre_flip_weight {
                return Err(Error::Config(format!(
                    "flip {n}: recorded pre-flip weight {} but model holds {current}",
                    f.pre_flip_weight
                )));
            }
            let dir = model.flip_bit(f.layer, f.flat_index, f.bit)?;
            if dir != f.direction {
                return Err(Error::Config(format!("flip {n}: direction mismatch")));
            }
        }
        Ok(())
    }
}

/// Applies one flip to the model and returns its record.
pub(crate) fn commit(model: &mut QuantizedModel, layer: usize, flat_index: usize, bit: u8) -> Result<BitFlip> {
    let pre = model.weights(layer)[flat_index];
    let direction = model.flip_bit(layer, flat_index, bit)?;
    Ok(BitFlip {
        layer,
        flat_index,
        bit,
        direction,
        pre_flip_weight: pre,
        companion_of: None,
    })
}
