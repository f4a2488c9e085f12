use serde::{Deserialize, Serialize};

use super::config::SignatureWidth;

/// Layer-by-layer weight counts of an architecture, for storage accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub layers: Vec<(String, usize)>,
}

impl ArchitectureSpec {
    pub fn total_weights(&self) -> usize {
        self.layers.iter().map(|(_, n)| n).sum()
    }

    pub fn group_count(&self, group_size: usize) -> usize {
        self.layers.iter().map(|(_, n)| n.div_ceil(group_size)).sum()
    }
}

/// Signature bits needed for every layer, each padded to whole groups.
pub fn storage_overhead_bits(arch: &ArchitectureSpec, group_size: usize, width: SignatureWidth) -> usize {
    arch.group_count(group_size) * width.bits() as usize
}

/// Kilobytes of 1024 bytes.
pub fn bits_to_kb(bits: usize) -> f64 {
    bits as f64 / 8.0 / 1024.0
}
