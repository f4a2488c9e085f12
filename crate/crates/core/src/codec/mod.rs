//! Masked, interleaved addition-checksum protection of layer weights.
//!
//! Each layer is padded to a multiple of the group size, permuted by the
//! interleaver, cut into groups of `G`, masked with a 16-bit per-layer key
//! (conditional negation) and summed. Bits 8 and 7 of the sum (plus bit 6 in
//! three-bit mode) form the group signature. Signatures of the clean model
//! make up the golden store; a mismatch flags the group, and recovery zeroes
//! every weight of a flagged group.

mod checksum;
mod config;
mod interleave;
mod overhead;
mod store;

pub use checksum::{checksum, mask_group, mask_sign, sign_layer, signature, Signature};
pub use config::{layer_key, LayerProtection, ProtectionConfig, SignatureWidth, DEFAULT_OFFSET};
pub use interleave::{interleave_indices, padded_len, LayerGrouping};
pub use overhead::{storage_overhead_bits, ArchitectureSpec, bits_to_kb};
pub use store::{detect, protect, recover, DetectionReport, GoldenSignatureStore};
