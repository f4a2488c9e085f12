use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::checksum::{sign_layer, Signature};
use super::config::ProtectionConfig;
use super::interleave::LayerGrouping;
use crate::qnn::QuantizedModel;
use crate::{Error, Result};

/// Trusted per-group signatures of a clean model, with the configuration
/// that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenSignatureStore {
    pub config: ProtectionConfig,
    pub layer_sizes: Vec<usize>,
    pub signatures: Vec<Vec<Signature>>,
}

impl GoldenSignatureStore {
    /// Signature storage in bits.
    pub fn bit_size(&self) -> usize {
        self.signatures
            .iter()
            .zip(&self.config.layers)
            .map(|(s, c)| s.len() * c.width.bits() as usize)
            .sum()
    }

    pub fn grouping(&self, layer: usize) -> LayerGrouping {
        LayerGrouping::new(self.layer_sizes[layer], &self.config.layers[layer])
    }

    pub fn groupings(&self) -> Vec<LayerGrouping> {
        (0..self.layer_sizes.len()).map(|l| self.grouping(l)).collect()
    }

    fn check_model(&self, model: &QuantizedModel) -> Result<()> {
        let sizes = model.layer_sizes();
        if sizes != self.layer_sizes {
            return Err(Error::ArchitectureMismatch(format!(
                "store covers layer sizes {:?}, model has {:?}",
                self.layer_sizes, sizes
            )));
        }
        Ok(())
    }
}

/// Signs every layer of a trusted model.
pub fn protect(model: &QuantizedModel, config: &ProtectionConfig) -> Result<GoldenSignatureStore> {
    config.validate()?;
    if config.layers.len() != model.layers().len() {
        return Err(Error::Config(format!(
            "configuration covers {} layers, model has {}",
            config.layers.len(),
            model.layers().len()
        )));
    }
    let signatures = config
        .layers
        .iter()
        .enumerate()
        .map(|(i, cfg)| sign_layer(model.weights(i), cfg))
        .collect();
    Ok(GoldenSignatureStore {
        config: config.clone(),
        layer_sizes: model.layer_sizes(),
        signatures,
    })
}

/// Outcome of comparing fresh signatures against the golden store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Flagged group indices, per layer.
    pub flagged: Vec<BTreeSet<usize>>,
    /// Per injected flip, whether its group is flagged (when ground truth
    /// was attributed).
    pub flips: Option<Vec<bool>>,
    pub detected_count: usize,
}

impl DetectionReport {
    pub fn flagged_groups(&self) -> usize {
        self.flagged.iter().map(BTreeSet::len).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.flagged_groups() == 0
    }

    /// Marks each `(layer, flat_index)` site detected iff the group holding
    /// it under `groupings` is flagged.
    pub fn attribute(
        &mut self,
        groupings: &[LayerGrouping],
        sites: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<()> {
        let mut flips = Vec::new();
        for (layer, index) in sites {
            let grouping = groupings.get(layer).ok_or_else(|| {
                Error::OutOfRange(format!("flip in layer {layer}, store has {}", groupings.len()))
            })?;
            if index >= grouping.layer_size() {
                return Err(Error::OutOfRange(format!(
                    "flip at index {index} of a {}-weight layer",
                    grouping.layer_size()
                )));
            }
            flips.push(self.flagged[layer].contains(&grouping.locate(index).0));
        }
        self.detected_count = flips.iter().filter(|&&d| d).count();
        self.flips = Some(flips);
        Ok(())
    }
}

/// Recomputes every signature of `model` and flags groups that differ from
/// the store in any bit.
pub fn detect(model: &QuantizedModel, store: &GoldenSignatureStore) -> Result<DetectionReport> {
    store.check_model(model)?;
    let flagged = store
        .config
        .layers
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            sign_layer(model.weights(i), cfg)
                .iter()
                .zip(&store.signatures[i])
                .enumerate()
                .filter(|(_, (now, golden))| now != golden)
                .map(|(g, _)| g)
                .collect()
        })
        .collect();
    Ok(DetectionReport {
        flagged,
        flips: None,
        detected_count: 0,
    })
}

/// Zeroes every real member of every flagged group, in original weight
/// positions. Returns the number of weights whose value changed.
pub fn recover(
    model: &mut QuantizedModel,
    report: &DetectionReport,
    store: &GoldenSignatureStore,
) -> Result<usize> {
    store.check_model(model)?;
    if report.flagged.len() != store.layer_sizes.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "report covers {} layers, store {}",
            report.flagged.len(),
            store.layer_sizes.len()
        )));
    }
    let mut changed = 0;
    for (layer, groups) in report.flagged.iter().enumerate() {
        if groups.is_empty() {
            continue;
        }
        let grouping = store.grouping(layer);
        let weights = model.weights_mut(layer);
        for &g in groups {
            if g >= grouping.group_count() {
                return Err(Error::OutOfRange(format!("group {g} in layer {layer}")));
            }
            for i in grouping.members(g) {
                if weights[i] != 0 {
                    weights[i] = 0;
                    changed += 1;
                }
            }
        }
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{LayerProtection, SignatureWidth};
    use crate::qnn::{DenseLayer, QuantizedTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_layer(weights: Vec<i8>) -> QuantizedModel {
        let n = weights.len();
        QuantizedModel::new(vec![DenseLayer::new(
            QuantizedTensor::new(weights, vec![1, n], 0.01).unwrap(),
            vec![0.0],
        )
        .unwrap()])
        .unwrap()
    }

    fn random_layer(n: usize, seed: u64) -> QuantizedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        single_layer((0..n).map(|_| rng.gen()).collect())
    }

    fn cfg(layer: LayerProtection) -> ProtectionConfig {
        ProtectionConfig {
            master_seed: None,
            layers: vec![layer],
        }
    }

    #[test]
    fn clean_model_has_no_flags() {
        let m = random_layer(300, 1);
        let store = protect(&m, &cfg(LayerProtection::new(16, 0x1357))).unwrap();
        assert!(detect(&m, &store).unwrap().is_clean());
    }

    #[test]
    fn store_size_accounting() {
        let m = random_layer(300, 1);
        for (g, width) in [(16, SignatureWidth::Two), (7, SignatureWidth::Three)] {
            let layer = LayerProtection {
                width,
                ..LayerProtection::new(g, 1)
            };
            let store = protect(&m, &cfg(layer)).unwrap();
            assert_eq!(store.signatures[0].len(), 300usize.div_ceil(g));
            assert_eq!(store.bit_size(), 300usize.div_ceil(g) * width.bits() as usize);
        }
    }

    #[test]
    fn single_msb_flip_is_always_caught() {
        let clean = random_layer(512, 2);
        for g in [8, 16, 32] {
            for interleave in [false, true] {
                let layer = LayerProtection {
                    interleave,
                    ..LayerProtection::new(g, 0xa5c3)
                };
                let store = protect(&clean, &cfg(layer)).unwrap();
                let grouping = store.grouping(0);
                for i in 0..512 {
                    let mut m = clean.clone();
                    m.flip_bit(0, i, 7).unwrap();
                    let mut report = detect(&m, &store).unwrap();
                    assert_eq!(report.flagged_groups(), 1);
                    assert!(report.flagged[0].contains(&grouping.locate(i).0));
                    report.attribute(&store.groupings(), [(0, i)]).unwrap();
                    assert_eq!(report.detected_count, 1);
                }
            }
        }
    }

    #[test]
    fn cancelling_pair_evades() {
        // Positions 0 and 1 of group 0 with key bits 1 and 1: both kept.
        // 0 -> -128 (-128) and -1 -> 127 (+128) cancel.
        let mut w = vec![0i8; 64];
        w[1] = -1;
        let m = single_layer(w);
        let store = protect(&m, &cfg(LayerProtection::contiguous(8, 0xffff))).unwrap();
        let mut attacked = m.clone();
        attacked.flip_bit(0, 0, 7).unwrap();
        attacked.flip_bit(0, 1, 7).unwrap();
        assert!(detect(&attacked, &store).unwrap().is_clean());
    }

    #[test]
    fn different_keys_give_different_stores() {
        let m = random_layer(512, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = protect(&m, &cfg(LayerProtection::new(16, 0))).unwrap();
        let mut differ = 0;
        for _ in 0..100 {
            let key: u16 = rng.gen_range(1..=u16::MAX);
            let other = protect(&m, &cfg(LayerProtection::new(16, key))).unwrap();
            differ += usize::from(other.signatures != base.signatures);
        }
        assert!(differ >= 99, "only {differ} of 100 keys changed the store");
    }

    #[test]
    fn recover_zeroes_interleaved_group_only() {
        let w: Vec<i8> = (1..=64).collect();
        let m = single_layer(w.clone());
        let layer = LayerProtection {
            offset: 0,
            ..LayerProtection::new(8, 0x00ff)
        };
        let store = protect(&m, &cfg(layer)).unwrap();
        let mut report = detect(&m, &store).unwrap();
        let mut fixed = m.clone();
        assert_eq!(recover(&mut fixed, &report, &store).unwrap(), 0);
        assert_eq!(fixed, m);

        report.flagged[0].insert(0);
        assert_eq!(recover(&mut fixed, &report, &store).unwrap(), 8);
        for (i, (&before, &after)) in w.iter().zip(fixed.weights(0)).enumerate() {
            if i % 8 == 0 {
                assert_eq!(after, 0);
            } else {
                assert_eq!(after, before);
            }
        }
    }

    #[test]
    fn recover_then_resign_is_clean() {
        let clean = random_layer(256, 5);
        let config = cfg(LayerProtection::new(16, 0x0f0f));
        let store = protect(&clean, &config).unwrap();
        let mut m = clean.clone();
        for i in [3, 100, 201] {
            m.flip_bit(0, i, 7).unwrap();
        }
        let report = detect(&m, &store).unwrap();
        assert!(report.flagged_groups() >= 1);
        let before = m.clone();
        let changed = recover(&mut m, &report, &store).unwrap();
        let grouping = store.grouping(0);
        let expected: usize = report.flagged[0]
            .iter()
            .flat_map(|&g| grouping.members(g))
            .filter(|&i| before.weights(0)[i] != 0)
            .count();
        assert_eq!(changed, expected);
        let hamming = before.weights(0).iter().zip(m.weights(0)).filter(|(a, b)| a != b).count();
        assert_eq!(hamming, expected);
        for &g in &report.flagged[0] {
            assert!(grouping.members(g).all(|i| m.weights(0)[i] == 0));
        }
        // Golden signatures for the zeroed groups: all-zero groups sign to (0,0).
        let mut updated = store.clone();
        let fresh = protect(&m, &config).unwrap();
        for &g in &report.flagged[0] {
            updated.signatures[0][g] = fresh.signatures[0][g];
            assert_eq!(updated.signatures[0][g].word(), 0);
        }
        assert!(detect(&m, &updated).unwrap().is_clean());
    }

    #[test]
    fn mismatched_store_rejected() {
        let m = random_layer(64, 1);
        let store = protect(&m, &cfg(LayerProtection::new(8, 1))).unwrap();
        let other = random_layer(65, 1);
        assert!(matches!(detect(&other, &store), Err(Error::ArchitectureMismatch(_))));
    }
}
