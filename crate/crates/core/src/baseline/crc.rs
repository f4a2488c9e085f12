use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::DetectionReport;
use crate::qnn::QuantizedModel;
use crate::{Error, Result};

/// Parameters of a CRC in the usual catalogue form. `poly` omits the
/// leading `x^width` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrcSpec {
    pub name: &'static str,
    pub width: u32,
    pub poly: u64,
    pub init: u64,
    pub refin: bool,
    pub refout: bool,
    pub xorout: u64,
}

impl CrcSpec {
    /// CRC-7/MMC.
    pub const CRC7_MMC: CrcSpec = CrcSpec::plain("CRC-7/MMC", 7, 0x09);
    /// CRC-10/ATM.
    pub const CRC10_ATM: CrcSpec = CrcSpec::plain("CRC-10/ATM", 10, 0x233);
    /// CRC-13/BBC.
    pub const CRC13_BBC: CrcSpec = CrcSpec::plain("CRC-13/BBC", 13, 0x1cf5);
    /// CRC-16/ARC (reflected).
    pub const CRC16_ARC: CrcSpec = CrcSpec {
        name: "CRC-16/ARC",
        width: 16,
        poly: 0x8005,
        init: 0,
        refin: true,
        refout: true,
        xorout: 0,
    };
    /// CRC-32/ISO-HDLC.
    pub const CRC32: CrcSpec = CrcSpec {
        name: "CRC-32/ISO-HDLC",
        width: 32,
        poly: 0x04c1_1db7,
        init: 0xffff_ffff,
        refin: true,
        refout: true,
        xorout: 0xffff_ffff,
    };

    /// Primitive generators (HD = 3 up to `2^width - 1` codeword bits) used
    /// for the weight-group comparison.
    pub const HD3_7: CrcSpec = CrcSpec::plain("CRC-7/x7+x3+1", 7, 0x09);
    pub const HD3_10: CrcSpec = CrcSpec::plain("CRC-10/x10+x3+1", 10, 0x009);
    pub const HD3_13: CrcSpec = CrcSpec::plain("CRC-13/x13+x4+x3+x+1", 13, 0x01b);

    pub const fn plain(name: &'static str, width: u32, poly: u64) -> Self {
        Self {
            name,
            width,
            poly,
            init: 0,
            refin: false,
            refout: false,
            xorout: 0,
        }
    }

    fn mask(&self) -> u64 {
        if self.width == 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }

    /// The HD=3 generator of the given width.
    pub fn hd3(width: u32) -> Option<CrcSpec> {
        match width {
            7 => Some(Self::HD3_7),
            10 => Some(Self::HD3_10),
            13 => Some(Self::HD3_13),
            _ => None,
        }
    }
}

/// Bitwise CRC over a bit stream, most significant bit first.
pub fn crc_bits(bits: impl IntoIterator<Item = bool>, spec: &CrcSpec) -> u64 {
    let top = 1u64 << (spec.width - 1);
    let mask = spec.mask();
    let mut reg = spec.init & mask;
    for bit in bits {
        let feedback = (reg & top != 0) ^ bit;
        reg = (reg << 1) & mask;
        if feedback {
            reg ^= spec.poly;
        }
    }
    reg
}

fn reflect(v: u64, width: u32) -> u64 {
    v.reverse_bits() >> (64 - width)
}

/// CRC of a byte string under `spec`, including input/output reflection
/// and the final xor.
pub fn crc_compute(data: &[u8], spec: &CrcSpec) -> u64 {
    let bits = data.iter().flat_map(|&b| {
        (0..8).map(move |i| if spec.refin { (b >> i) & 1 == 1 } else { (b >> (7 - i)) & 1 == 1 })
    });
    let reg = crc_bits(bits, spec);
    let out = if spec.refout { reflect(reg, spec.width) } else { reg };
    (out ^ spec.xorout) & spec.mask()
}

/// Golden CRCs over contiguous groups of `group_size` weights (8 bits
/// each, zero-padded at the end of a layer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrcStore {
    pub spec: CrcSpec,
    pub group_size: usize,
    pub layer_sizes: Vec<usize>,
    pub checks: Vec<Vec<u64>>,
}

fn layer_crcs(weights: &[i8], group_size: usize, spec: &CrcSpec) -> Vec<u64> {
    weights
        .chunks(group_size)
        .map(|chunk| {
            let mut bytes: Vec<u8> = chunk.iter().map(|&w| w as u8).collect();
            bytes.resize(group_size, 0);
            crc_compute(&bytes, spec)
        })
        .collect()
}

impl CrcStore {
    pub fn protect(model: &QuantizedModel, group_size: usize, spec: CrcSpec) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        Ok(Self {
            spec,
            group_size,
            layer_sizes: model.layer_sizes(),
            checks: (0..model.layers().len())
                .map(|l| layer_crcs(model.weights(l), group_size, &spec))
                .collect(),
        })
    }

    pub fn bit_size(&self) -> usize {
        self.checks.iter().map(Vec::len).sum::<usize>() * self.spec.width as usize
    }

    pub fn groupings(&self) -> Vec<crate::codec::LayerGrouping> {
        self.layer_sizes
            .iter()
            .map(|&n| crate::codec::LayerGrouping::new(n, &crate::codec::LayerProtection::contiguous(self.group_size, 0)))
            .collect()
    }
}

/// Flags every group whose recomputed CRC differs from the golden one.
pub fn detect_with_crc(model: &QuantizedModel, store: &CrcStore) -> Result<DetectionReport> {
    if model.layer_sizes() != store.layer_sizes {
        return Err(Error::ArchitectureMismatch(format!(
            "CRC store covers layer sizes {:?}, model has {:?}",
            store.layer_sizes,
            model.layer_sizes()
        )));
    }
    let flagged = store
        .checks
        .iter()
        .enumerate()
        .map(|(l, golden)| {
            layer_crcs(model.weights(l), store.group_size, &store.spec)
                .iter()
                .zip(golden)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(g, _)| g)
                .collect::<BTreeSet<usize>>()
        })
        .collect();
    Ok(DetectionReport {
        flagged,
        flips: None,
        detected_count: 0,
    })
}
