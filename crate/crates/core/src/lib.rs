//! Run-time detection of adversarial bit-flip attacks on 8-bit quantized
//! network weights, with group-zeroing accuracy recovery.
//!
//! The crate is split into the substrate the attacker and defender share
//! ([`qnn`]), the protection scheme itself ([`codec`]), the adversaries
//! ([`attack`]), generic integrity codes used for comparison ([`baseline`]),
//! and the experiment drivers that tie them together ([`harness`]).

pub mod attack;
pub mod baseline;
pub mod codec;
mod error;
pub mod format;
pub mod harness;
pub mod qnn;
pub mod seed;

pub use error::{Error, Result};
