use serde::{Deserialize, Serialize};

use super::hamming::secded_overhead;
use crate::codec::{bits_to_kb, storage_overhead_bits, ArchitectureSpec, SignatureWidth};

/// Integrity code whose storage cost is being compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckCode {
    Radar(SignatureWidth),
    /// CRC with the given number of check bits per group.
    Crc(u32),
    /// Hamming code over all `8 * G` bits of a group.
    Hamming,
}

impl CheckCode {
    pub fn name(&self) -> String {
        match self {
            CheckCode::Radar(w) => format!("radar-{}bit", w.bits()),
            CheckCode::Crc(w) => format!("crc-{w}"),
            CheckCode::Hamming => "hamming".into(),
        }
    }

    /// Check bits stored per group of `group_size` 8-bit weights.
    pub fn bits_per_group(&self, group_size: usize) -> usize {
        match self {
            CheckCode::Radar(w) => w.bits() as usize,
            CheckCode::Crc(w) => *w as usize,
            CheckCode::Hamming => secded_overhead(8 * group_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub architecture: String,
    pub code: String,
    pub width: usize,
    pub group_size: usize,
    pub total_bits: usize,
    pub total_kb: f64,
}

/// Check-bit storage of each code over every layer of `arch`, each layer
/// padded to whole groups.
pub fn code_storage_compare(arch: &ArchitectureSpec, group_size: usize, codes: &[CheckCode]) -> Vec<StorageRow> {
    codes
        .iter()
        .map(|code| {
            let width = code.bits_per_group(group_size);
            let total_bits = match code {
                CheckCode::Radar(w) => storage_overhead_bits(arch, group_size, *w),
                _ => arch.group_count(group_size) * width,
            };
            StorageRow {
                architecture: arch.name.clone(),
                code: code.name(),
                width,
                group_size,
                total_bits,
                total_kb: bits_to_kb(total_bits),
            }
        })
        .collect()
}
