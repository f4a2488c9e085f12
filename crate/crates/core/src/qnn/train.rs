use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::model::{DenseLayer, QuantizedModel, RealLayer, RealNet};
use super::tensor::quantize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Probability of zeroing each hidden activation during training.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            dropout: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: QuantizedModel,
    /// Test accuracy of the quantized model.
    pub clean_accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Trains a dense ReLU classifier in full precision with Adam, then
/// quantizes every weight matrix to 8 bits.
pub fn train_tiny(data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    if data.num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config(format!("dropout must be in [0, 1), got {}", cfg.dropout)));
    }
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Config("train and test splits must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![data.features()];
    widths.extend(&cfg.hidden);
    widths.push(data.num_classes);

    let mut net = RealNet {
        layers: widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let std = (2.0 / n_in as f64).sqrt();
                RealLayer {
                    w: (0..n_in * n_out)
                        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                        .collect(),
                    b: vec![0.0; n_out],
                    n_out,
                    n_in,
                }
            })
            .collect(),
    };
    let mut opt_w: Vec<Adam> = net.layers.iter().map(|l| Adam::new(l.w.len())).collect();
    let mut opt_b: Vec<Adam> = net.layers.iter().map(|l| Adam::new(l.b.len())).collect();

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch = data.train.select(chunk);
            let masks: Option<Vec<Vec<f64>>> = (cfg.dropout > 0.0).then(|| {
                let keep = 1.0 - cfg.dropout;
                net.layers[..net.layers.len() - 1]
                    .iter()
                    .map(|l| {
                        (0..batch.len() * l.n_out)
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect()
                    })
                    .collect()
            });
            let (loss, mut g) = net.loss_and_grad_masked(&batch.inputs, &batch.labels, masks.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1;
            for (li, layer) in net.layers.iter_mut().enumerate() {
                for (gw, w) in g.weights[li].iter_mut().zip(&layer.w) {
                    *gw += cfg.weight_decay * w;
                }
                opt_w[li].step(&mut layer.w, &g.weights[li], cfg.learning_rate);
                opt_b[li].step(&mut layer.b, &g.bias[li], cfg.learning_rate);
            }
        }
        let mean = epoch_loss / batches.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
    }

    let layers = net
        .layers
        .into_iter()
        .map(|l| DenseLayer::new(quantize(&l.w, vec![l.n_out, l.n_in])?, l.b))
        .collect::<Result<Vec<_>>>()?;
    let model = QuantizedModel::new(layers)?;
    let clean_accuracy = model.accuracy(&data.test.inputs, &data.test.labels)?;
    Ok(TrainedModel {
        model,
        clean_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnn::GaussianClusters;

    fn four_clusters() -> Dataset {
        GaussianClusters {
            classes: 4,
            features: 16,
            train_per_class: 100,
            test_per_class: 50,
            separation: 1.0,
            noise: 1.0,
            shift: 0.0,
            smoothing: 1,
        }
        .generate(3)
        .unwrap()
    }

    #[test]
    fn separable_clusters_train_well() {
        let cfg = TrainConfig {
            epochs: 15,
            ..Default::default()
        };
        let t = train_tiny(&four_clusters(), &cfg).unwrap();
        assert!(t.clean_accuracy >= 0.9, "accuracy {}", t.clean_accuracy);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let d = four_clusters();
        let a = train_tiny(&d, &cfg).unwrap();
        let b = train_tiny(&d, &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn random_labels_give_chance_accuracy() {
        let mut d = four_clusters();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for y in d.train.labels.iter_mut().chain(d.test.labels.iter_mut()) {
            *y = rng.gen_range(0..4);
        }
        let t = train_tiny(&d, &TrainConfig { epochs: 10, ..Default::default() }).unwrap();
        assert!((t.clean_accuracy - 0.25).abs() <= 0.10, "accuracy {}", t.clean_accuracy);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let mut d = four_clusters();
        for v in d.train.inputs.data.iter_mut() {
            *v *= 1e300;
        }
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 1e300,
            ..Default::default()
        };
        assert!(matches!(train_tiny(&d, &cfg), Err(Error::Diverged { .. })));
    }
}
