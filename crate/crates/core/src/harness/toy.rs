use crate::qnn::{train_tiny, Dataset, GaussianClusters, QuantizedModel, TrainConfig};
use crate::seed::{self, streams};
use crate::Result;

/// A trained model with the data used to attack and score it.
#[derive(Debug, Clone)]
pub struct Target {
    pub model: QuantizedModel,
    pub data: Dataset,
    pub clean_accuracy: f64,
}

impl Target {
    pub fn new(model: QuantizedModel, data: Dataset) -> Result<Self> {
        let clean_accuracy = model.accuracy(&data.test.inputs, &data.test.labels)?;
        Ok(Self {
            model,
            data,
            clean_accuracy,
        })
    }

    pub fn accuracy(&self, model: &QuantizedModel) -> Result<f64> {
        model.accuracy(&self.data.test.inputs, &self.data.test.labels)
    }
}

/// The desk-scale stand-in for the full-size networks: a 64-64-32-10
/// perceptron on shifted Gaussian clusters.
///
/// The positive input shift makes early-layer activations large, so the
/// attacker finds useful flips outside the final layer and the gap between
/// targeted and random flips is wide.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub data: GaussianClusters,
    pub train: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            data: GaussianClusters {
                separation: 0.7,
                shift: 2.0,
                ..GaussianClusters::default()
            },
            train: TrainConfig {
                hidden: vec![64, 32],
                weight_decay: 1e-3,
                ..TrainConfig::default()
            },
        }
    }
}

/// Generates the data and trains the toy model, both from substreams of
/// `master_seed`.
pub fn toy_target(cfg: &ToyConfig, master_seed: u64) -> Result<Target> {
    let data = cfg.data.generate(seed::derive(master_seed, streams::DATA, 0))?;
    let train = TrainConfig {
        seed: seed::derive(master_seed, streams::TRAINING, 0),
        ..cfg.train.clone()
    };
    let trained = train_tiny(&data, &train)?;
    Ok(Target {
        model: trained.model,
        data,
        clean_accuracy: trained.clean_accuracy,
    })
}
