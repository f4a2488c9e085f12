use serde::{Deserialize, Serialize};

use super::tensor::{FlipDirection, QuantizedTensor};
use crate::{Error, Result};

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Shape `[out, in]`, row-major.
    pub weights: QuantizedTensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: QuantizedTensor, bias: Vec<f64>) -> Result<Self> {
        let shape = weights.shape();
        if shape.len() != 2 || shape[0] != bias.len() {
            return Err(Error::Shape(format!(
                "dense weights {:?} do not match bias of length {}",
                shape,
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_width(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_width(&self) -> usize {
        self.weights.shape()[0]
    }
}

/// Per-layer loss gradients, aligned element-for-element with the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// d loss / d dequantized weight.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

/// Feedforward classifier: dense layers with ReLU between them and softmax
/// cross-entropy at the output. Inference runs on dequantized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    layers: Vec<DenseLayer>,
}

impl QuantizedModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_width(),
                    i + 1,
                    pair[1].in_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weights.len()).collect()
    }

    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    pub fn weights(&self, layer: usize) -> &[i8] {
        self.layers[layer].weights.values()
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [i8] {
        self.layers[layer].weights.values_mut()
    }

    pub fn scale(&self, layer: usize) -> f64 {
        self.layers[layer].weights.scale()
    }

    pub fn flip_bit(&mut self, layer: usize, flat_index: usize, bit: u8) -> Result<FlipDirection> {
        let n = self.layers.len();
        self.layers
            .get_mut(layer)
            .ok_or_else(|| Error::OutOfRange(format!("layer {layer} >= {n}")))?
            .weights
            .flip_bit(flat_index, bit)
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols != self.in_width() {
            return Err(Error::Shape(format!(
                "input width {} but first layer expects {}",
                inputs.cols,
                self.in_width()
            )));
        }
        Ok(())
    }

    /// Real-valued view with dequantized weights.
    pub fn dequantized(&self) -> RealNet {
        RealNet {
            layers: self
                .layers
                .iter()
                .map(|l| RealLayer {
                    w: l.weights.dequantize(),
                    b: l.bias.clone(),
                    n_out: l.out_width(),
                    n_in: l.in_width(),
                })
                .collect(),
        }
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        Ok(self.dequantized().forward(inputs))
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(inputs)?;
        Ok((0..logits.rows).map(|r| argmax(logits.row(r))).collect())
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(inputs)?;
        check_labels(&logits, labels)?;
        Ok(mean_cross_entropy(&logits, labels))
    }

    /// Mean cross-entropy and its gradient with respect to every dequantized
    /// weight and bias.
    pub fn loss_and_grad(&self, inputs: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_input(inputs)?;
        if inputs.rows == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        self.dequantized().loss_and_grad(inputs, labels)
    }

    /// Fraction of argmax-correct predictions.
    pub fn accuracy(&self, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::Shape("accuracy over an empty split".into()));
        }
        let preds = self.predict(inputs)?;
        if preds.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Row-major `[n_out, n_in]` weights and per-output biases.
#[derive(Debug, Clone)]
pub struct RealLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_out: usize,
    pub n_in: usize,
}

/// Dense ReLU network in plain real arithmetic; shared by inference on
/// dequantized weights and by full-precision training.
#[derive(Debug, Clone)]
pub struct RealNet {
    pub layers: Vec<RealLayer>,
}

impl RealNet {
    /// Pre-activations of every layer (the last entry is the logits) and
    /// the post-ReLU activations feeding each hidden layer. `masks[l]`
    /// multiplies the ReLU output of hidden layer `l` elementwise.
    fn run(&self, inputs: &Matrix, masks: Option<&[Vec<f64>]>) -> (Vec<Matrix>, Vec<Matrix>) {
        let mut zs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let act = if li == 0 {
                inputs
            } else {
                let z = &zs[li - 1];
                let mut a = Matrix {
                    rows: z.rows,
                    cols: z.cols,
                    data: z.data.iter().map(|v| v.max(0.0)).collect(),
                };
                if let Some(m) = masks {
                    for (v, k) in a.data.iter_mut().zip(&m[li - 1]) {
                        *v *= k;
                    }
                }
                acts.push(a);
                &acts[li - 1]
            };
            let (n_out, n_in) = (layer.n_out, layer.n_in);
            let mut z = Matrix::zeros(act.rows, n_out);
            for r in 0..act.rows {
                let x = act.row(r);
                let zr = &mut z.data[r * n_out..(r + 1) * n_out];
                for (o, zo) in zr.iter_mut().enumerate() {
                    let wr = &layer.w[o * n_in..(o + 1) * n_in];
                    *zo = layer.b[o] + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            zs.push(z);
        }
        (zs, acts)
    }

    pub fn forward(&self, inputs: &Matrix) -> Matrix {
        self.run(inputs, None).0.pop().expect("nonempty model")
    }

    /// Pre-activation of every layer; the last entry is the logits.
    pub fn pre_activations(&self, inputs: &Matrix) -> Vec<Matrix> {
        self.run(inputs, None).0
    }

    pub fn loss(&self, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(inputs);
        check_labels(&logits, labels)?;
        Ok(mean_cross_entropy(&logits, labels))
    }

    pub fn loss_and_grad(&self, inputs: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.loss_and_grad_masked(inputs, labels, None)
    }

    pub fn loss_and_grad_masked(
        &self,
        inputs: &Matrix,
        labels: &[usize],
        masks: Option<&[Vec<f64>]>,
    ) -> Result<(f64, Gradients)> {
        let (zs, acts) = self.run(inputs, masks);
        let logits = zs.last().expect("nonempty model");
        check_labels(logits, labels)?;
        let loss = mean_cross_entropy(logits, labels);

        let n = inputs.rows as f64;
        let k = logits.cols;
        let mut delta = Matrix::zeros(logits.rows, k);
        for r in 0..logits.rows {
            let p = softmax(logits.row(r));
            for c in 0..k {
                let y = if c == labels[r] { 1.0 } else { 0.0 };
                delta.data[r * k + c] = (p[c] - y) / n;
            }
        }

        let mut gw = vec![Vec::new(); self.layers.len()];
        let mut gb = vec![Vec::new(); self.layers.len()];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (n_out, n_in) = (layer.n_out, layer.n_in);
            let prev = if li == 0 { inputs } else { &acts[li - 1] };
            let mut dw = vec![0.0; n_out * n_in];
            let mut db = vec![0.0; n_out];
            for r in 0..delta.rows {
                let x = prev.row(r);
                for o in 0..n_out {
                    let d = delta.data[r * n_out + o];
                    if d == 0.0 {
                        continue;
                    }
                    db[o] += d;
                    for (g, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if li > 0 {
                let z_prev = &zs[li - 1];
                let mut next = Matrix::zeros(delta.rows, n_in);
                for r in 0..delta.rows {
                    let nr = &mut next.data[r * n_in..(r + 1) * n_in];
                    for o in 0..n_out {
                        let d = delta.data[r * n_out + o];
                        if d == 0.0 {
                            continue;
                        }
                        for (acc, wi) in nr.iter_mut().zip(&layer.w[o * n_in..(o + 1) * n_in]) {
                            *acc += d * wi;
                        }
                    }
                    for (i, (acc, z)) in nr.iter_mut().zip(z_prev.row(r)).enumerate() {
                        if *z <= 0.0 {
                            *acc = 0.0;
                        } else if let Some(m) = masks {
                            *acc *= m[li - 1][r * n_in + i];
                        }
                    }
                }
                delta = next;
            }
            gw[li] = dw;
            gb[li] = db;
        }
        Ok((
            loss,
            Gradients {
                weights: gw,
                bias: gb,
            },
        ))
    }
}

/// Cached forward pass over a fixed batch that answers "what would the loss
/// be if this one weight held another value" without a full re-run.
pub struct LossProbe {
    net: RealNet,
    inputs: Matrix,
    labels: Vec<usize>,
    zs: Vec<Matrix>,
    acts: Vec<Matrix>,
    loss: f64,
}

impl LossProbe {
    pub fn new(model: &QuantizedModel, inputs: &Matrix, labels: &[usize]) -> Result<Self> {
        model.check_input(inputs)?;
        let net = model.dequantized();
        let (zs, acts) = net.run(inputs, None);
        check_labels(zs.last().expect("nonempty model"), labels)?;
        let loss = mean_cross_entropy(zs.last().expect("nonempty model"), labels);
        Ok(Self {
            net,
            inputs: inputs.clone(),
            labels: labels.to_vec(),
            zs,
            acts,
            loss,
        })
    }

    /// Loss of the unmodified model.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Loss with weight `index` of `layer` replaced by `new_value`
    /// (an integer, scaled by the layer's dequantization factor).
    pub fn loss_with(&self, model: &QuantizedModel, layer: usize, index: usize, new_value: i8) -> f64 {
        let l = &self.net.layers[layer];
        let (o, i) = (index / l.n_in, index % l.n_in);
        let dw = (f64::from(new_value) - f64::from(model.weights(layer)[index])) * model.scale(layer);
        let input = if layer == 0 { &self.inputs } else { &self.acts[layer - 1] };
        let mut z = self.zs[layer].clone();
        for r in 0..z.rows {
            z.data[r * l.n_out + o] += dw * input.data[r * l.n_in + i];
        }
        for next in &self.net.layers[layer + 1..] {
            let mut nz = Matrix::zeros(z.rows, next.n_out);
            for r in 0..z.rows {
                let x = z.row(r);
                let zr = &mut nz.data[r * next.n_out..(r + 1) * next.n_out];
                for (oo, zo) in zr.iter_mut().enumerate() {
                    let wr = &next.w[oo * next.n_in..(oo + 1) * next.n_in];
                    *zo = next.b[oo] + wr.iter().zip(x).map(|(a, b)| a * b.max(0.0)).sum::<f64>();
                }
            }
            z = nz;
        }
        mean_cross_entropy(&z, &self.labels)
    }
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows {
        return Err(Error::Shape(format!(
            "{} inputs but {} labels",
            logits.rows,
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols) {
        return Err(Error::Shape(format!(
            "label {bad} outside {} classes",
            logits.cols
        )));
    }
    Ok(())
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn mean_cross_entropy(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let z = logits.row(r);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / labels.len() as f64
}
