use serde::{Deserialize, Serialize};

use super::config::{LayerProtection, SignatureWidth};
use super::interleave::LayerGrouping;

/// Sign the key applies to position `t` of a group: key bit `t mod 16`
/// (bit 0 is the least significant) keeps the weight when set and negates
/// it when clear.
#[inline]
pub fn mask_sign(key: u16, t: usize) -> i32 {
    if (key >> (t % 16)) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// Conditionally negated group, widened so that `-(-128)` stays `+128`.
pub fn mask_group(group: &[i8], key: u16) -> Vec<i32> {
    group
        .iter()
        .enumerate()
        .map(|(t, &w)| mask_sign(key, t) * i32::from(w))
        .collect()
}

/// Exact sum of a masked group.
pub fn checksum(masked: &[i32]) -> i64 {
    masked.iter().map(|&v| i64::from(v)).sum()
}

/// Group signature: bits 8 and 7 of the checksum (`S_A`, `S_B`), plus bit 6
/// (`S_C`) in three-bit mode. Bits are read from the two's-complement form,
/// i.e. floor division with a non-negative remainder for negative sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub s_a: bool,
    pub s_b: bool,
    pub s_c: Option<bool>,
}

impl Signature {
    pub fn width(&self) -> SignatureWidth {
        if self.s_c.is_some() {
            SignatureWidth::Three
        } else {
            SignatureWidth::Two
        }
    }

    /// Packed form; the least significant bit is the lowest checksum bit
    /// covered (`S_B` for two bits, `S_C` for three).
    pub fn word(&self) -> u8 {
        let hi = (u8::from(self.s_a) << 1) | u8::from(self.s_b);
        match self.s_c {
            None => hi,
            Some(c) => (hi << 1) | u8::from(c),
        }
    }

    pub fn from_word(word: u8, width: SignatureWidth) -> Self {
        match width {
            SignatureWidth::Two => Signature {
                s_a: word & 0b10 != 0,
                s_b: word & 0b01 != 0,
                s_c: None,
            },
            SignatureWidth::Three => Signature {
                s_a: word & 0b100 != 0,
                s_b: word & 0b010 != 0,
                s_c: Some(word & 0b001 != 0),
            },
        }
    }
}

pub fn signature(m: i64, width: SignatureWidth) -> Signature {
    let bit = |k: u32| (m >> k) & 1 == 1;
    Signature {
        s_a: bit(8),
        s_b: bit(7),
        s_c: (width == SignatureWidth::Three).then(|| bit(6)),
    }
}

/// Signatures of every group of one layer, in group order. The key stream
/// restarts at bit 0 for each group; pad slots contribute zero.
pub fn sign_layer(weights: &[i8], cfg: &LayerProtection) -> Vec<Signature> {
    let grouping = LayerGrouping::new(weights.len(), cfg);
    (0..grouping.group_count())
        .map(|g| {
            let m: i64 = grouping
                .slots(g)
                .enumerate()
                .filter_map(|(t, slot)| slot.map(|i| i64::from(mask_sign(cfg.key, t) * i32::from(weights[i]))))
                .sum();
            signature(m, cfg.width)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_ones_key_keeps_group() {
        assert_eq!(mask_group(&[5, -3, -128, 7], 0xffff), vec![5, -3, -128, 7]);
    }

    #[test]
    fn all_zeros_key_negates_without_wrapping() {
        assert_eq!(mask_group(&[5, -3], 0), vec![-5, 3]);
        assert_eq!(mask_group(&[-128], 0), vec![128]);
    }

    #[test]
    fn key_bit_zero_drives_element_zero() {
        // bits 0 and 2 clear, bits 1 and 3 set
        assert_eq!(mask_group(&[1, 2, 3, 4], 0b1010), vec![-1, 2, -3, 4]);
        assert_eq!(mask_group(&[1, 2, 3, 4], 0b0101), vec![1, -2, 3, -4]);
    }

    #[test]
    fn key_repeats_every_sixteen_elements() {
        let g: Vec<i8> = (1..=40).collect();
        let m = mask_group(&g, 0x8001);
        for (t, v) in m.iter().enumerate() {
            let keep = t % 16 == 0 || t % 16 == 15;
            assert_eq!(*v, if keep { g[t] as i32 } else { -(g[t] as i32) });
        }
    }

    #[test]
    fn checksum_extremes() {
        assert_eq!(checksum(&mask_group(&[0; 32], 0x1234)), 0);
        let g = vec![-128i8; 1024];
        assert_eq!(checksum(&mask_group(&g, 0xffff)), -128 * 1024);
        assert_eq!(checksum(&mask_group(&g, 0)), 128 * 1024);
    }

    #[test]
    fn checksum_matches_i128_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=1024);
            let g: Vec<i8> = (0..n).map(|_| rng.gen()).collect();
            let key: u16 = rng.gen();
            let mut oracle: i128 = 0;
            for (t, &w) in g.iter().enumerate() {
                let keep = key & (1 << (t % 16)) != 0;
                oracle += if keep { w as i128 } else { -(w as i128) };
            }
            assert_eq!(checksum(&mask_group(&g, key)) as i128, oracle);
        }
    }

    #[test]
    fn signature_examples() {
        let s = |m| {
            let s = signature(m, SignatureWidth::Two);
            (s.s_a, s.s_b)
        };
        assert_eq!(s(0), (false, false));
        assert_eq!(s(-128), (true, true));
        assert_eq!(s(-256), (true, false));
        assert_eq!(s(128), (false, true));
        assert_eq!(signature(64, SignatureWidth::Three).s_c, Some(true));
    }

    #[test]
    fn word_round_trip() {
        for width in [SignatureWidth::Two, SignatureWidth::Three] {
            for w in 0..(1u8 << width.bits()) {
                let s = Signature::from_word(w, width);
                assert_eq!(s.word(), w);
                assert_eq!(s.width(), width);
            }
        }
    }

    #[test]
    fn zero_layer_signs_to_zero() {
        let cfg = LayerProtection::new(8, 0x5a5a);
        let sigs = sign_layer(&[0; 100], &cfg);
        assert_eq!(sigs.len(), 13);
        assert!(sigs.iter().all(|s| !s.s_a && !s.s_b));
    }

    #[test]
    fn disabled_interleave_equals_unit_stride() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Vec<i8> = (0..300).map(|_| rng.gen()).collect();
        let off = LayerProtection::contiguous(16, 0xbeef);
        let unit = LayerProtection {
            interleave: true,
            stride: 1,
            offset: 0,
            ..off
        };
        assert_eq!(sign_layer(&w, &off), sign_layer(&w, &unit));
    }

    /// Straight transcription of the procedure: build the padded stream,
    /// walk it group by group with a restarting key, sum, binarize by
    /// floor division.
    fn naive_sign(weights: &[i8], g: usize, stride: usize, offset: usize, key: u16) -> Vec<(i64, i64)> {
        let padded = weights.len().div_ceil(g) * g;
        let mut stream = Vec::new();
        for k in 0..stride {
            let mut l = 0;
            while k + stride * l < padded {
                let idx = (k + stride * l + offset) % padded;
                stream.push(if idx < weights.len() { weights[idx] as i64 } else { 0 });
                l += 1;
            }
        }
        stream
            .chunks(g)
            .map(|chunk| {
                let mut m = 0i64;
                for (t, &v) in chunk.iter().enumerate() {
                    let bit = (key as u32 / 2u32.pow((t % 16) as u32)) % 2;
                    m += if bit == 0 { -v } else { v };
                }
                (m.div_euclid(256).rem_euclid(2), m.div_euclid(128).rem_euclid(2))
            })
            .collect()
    }

    #[test]
    fn sign_layer_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(512);
        for (len, g) in [(512, 16), (512, 8), (500, 32), (77, 8)] {
            for _ in 0..20 {
                let w: Vec<i8> = (0..len).map(|_| rng.gen()).collect();
                let cfg = LayerProtection::new(g, rng.gen());
                let got: Vec<(i64, i64)> = sign_layer(&w, &cfg)
                    .iter()
                    .map(|s| (s.s_a as i64, s.s_b as i64))
                    .collect();
                assert_eq!(got, naive_sign(&w, g, cfg.stride, cfg.offset, cfg.key));
                if len == 512 && g == 16 {
                    assert_eq!(got.len(), 32);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn flipping_a_key_bit_negates_its_positions(
            g in prop::collection::vec(any::<i8>(), 1..80),
            key in any::<u16>(),
            bit in 0u32..16,
        ) {
            let a = mask_group(&g, key);
            let b = mask_group(&g, key ^ (1 << bit));
            for t in 0..g.len() {
                if t % 16 == bit as usize {
                    prop_assert_eq!(a[t], -b[t]);
                } else {
                    prop_assert_eq!(a[t], b[t]);
                }
            }
        }
    }
}
