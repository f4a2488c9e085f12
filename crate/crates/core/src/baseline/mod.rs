//! Generic integrity codes used as storage and detection baselines.

mod compare;
mod crc;
mod hamming;

pub use compare::{code_storage_compare, CheckCode, StorageRow};
pub use crc::{crc_bits, crc_compute, detect_with_crc, CrcSpec, CrcStore};
pub use hamming::{parity, secded_overhead};
