use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Circular shift applied on top of the interleave stride.
pub const DEFAULT_OFFSET: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SignatureWidth {
    /// Bits 8 and 7 of the checksum.
    Two,
    /// Bits 8, 7 and 6; also covers flips of the second most significant bit.
    Three,
}

impl SignatureWidth {
    pub fn bits(self) -> u32 {
        match self {
            SignatureWidth::Two => 2,
            SignatureWidth::Three => 3,
        }
    }
}

impl TryFrom<u8> for SignatureWidth {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(SignatureWidth::Two),
            3 => Ok(SignatureWidth::Three),
            _ => Err(format!("signature width must be 2 or 3, got {v}")),
        }
    }
}

impl From<SignatureWidth> for u8 {
    fn from(w: SignatureWidth) -> u8 {
        w.bits() as u8
    }
}

/// Protection parameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerProtection {
    pub group_size: usize,
    pub interleave: bool,
    /// Distance between consecutive members of an interleaved group.
    pub stride: usize,
    pub offset: usize,
    pub key: u16,
    pub width: SignatureWidth,
}

impl LayerProtection {
    /// Interleaved with stride `G` and the default offset.
    pub fn new(group_size: usize, key: u16) -> Self {
        Self {
            group_size,
            interleave: true,
            stride: group_size,
            offset: DEFAULT_OFFSET,
            key,
            width: SignatureWidth::Two,
        }
    }

    pub fn contiguous(group_size: usize, key: u16) -> Self {
        Self {
            interleave: false,
            ..Self::new(group_size, key)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("interleave stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectionConfig {
    /// Seed the per-layer keys were expanded from, when they were.
    pub master_seed: Option<u64>,
    pub layers: Vec<LayerProtection>,
}

impl ProtectionConfig {
    /// Same group size, interleaving and width on every layer; keys are
    /// drawn from the `key` substream of `master_seed`, one per layer.
    pub fn uniform(
        layer_count: usize,
        group_size: usize,
        interleave: bool,
        width: SignatureWidth,
        master_seed: u64,
    ) -> Self {
        let layers = (0..layer_count)
            .map(|i| LayerProtection {
                width,
                interleave,
                ..LayerProtection::new(group_size, layer_key(master_seed, i))
            })
            .collect();
        Self {
            master_seed: Some(master_seed),
            layers,
        }
    }

    pub fn with_offset(mut self, offset: usize) -> Self {
        for l in &mut self.layers {
            l.offset = offset;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.layers.iter().try_for_each(LayerProtection::validate)
    }
}

/// Secret key of layer `index` expanded from `master_seed`.
pub fn layer_key(master_seed: u64, index: usize) -> u16 {
    seed::rng(master_seed, seed::streams::KEY, index as u64).gen()
}
