use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which way a bit moved when it was toggled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlipDirection {
    #[serde(rename = "0->1")]
    ZeroToOne,
    #[serde(rename = "1->0")]
    OneToZero,
}

impl FlipDirection {
    pub fn opposite(self) -> Self {
        match self {
            FlipDirection::ZeroToOne => FlipDirection::OneToZero,
            FlipDirection::OneToZero => FlipDirection::ZeroToOne,
        }
    }

    /// Direction a flip of `bit` would take on `value`.
    pub fn of(value: i8, bit: u8) -> Self {
        if (value as u8 >> bit) & 1 == 0 {
            FlipDirection::ZeroToOne
        } else {
            FlipDirection::OneToZero
        }
    }
}

/// Signed 8-bit tensor with a per-tensor dequantization scale
/// (`real = scale * integer`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    values: Vec<i8>,
    shape: Vec<usize>,
    scale: f64,
}

impl QuantizedTensor {
    pub fn new(values: Vec<i8>, shape: Vec<usize>, scale: f64) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {expected} elements, got {}",
                values.len()
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            values,
            shape,
            scale,
        })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i8] {
        &mut self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| f64::from(v) * self.scale)
            .collect()
    }

    /// Toggles one bit of one element's two's-complement byte.
    pub fn flip_bit(&mut self, flat_index: usize, bit: u8) -> Result<FlipDirection> {
        if bit > 7 {
            return Err(Error::OutOfRange(format!("bit position {bit} > 7")));
        }
        let len = self.values.len();
        let slot = self.values.get_mut(flat_index).ok_or_else(|| {
            Error::OutOfRange(format!("flat index {flat_index} >= {len}"))
        })?;
        let dir = FlipDirection::of(*slot, bit);
        *slot = (*slot as u8 ^ (1u8 << bit)) as i8;
        Ok(dir)
    }
}

/// Value an 8-bit weight takes after toggling `bit`.
pub fn flipped(value: i8, bit: u8) -> i8 {
    (value as u8 ^ (1u8 << bit)) as i8
}

/// Symmetric per-tensor linear quantization to 8 bits.
///
/// `scale = max|w| / 127`, integers are `round(w / scale)` (half away from
/// zero) clamped to `[-128, 127]`. An all-zero tensor gets scale 1.
pub fn quantize(real: &[f64], shape: Vec<usize>) -> Result<QuantizedTensor> {
    if let Some(bad) = real.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("cannot quantize non-finite value {bad}")));
    }
    let max_abs = real.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };
    let values = real
        .iter()
        .map(|&w| (w / scale).round().clamp(-128.0, 127.0) as i8)
        .collect();
    QuantizedTensor::new(values, shape, scale)
}
