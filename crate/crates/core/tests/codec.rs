use proptest::prelude::*;
use radar_core::attack::{profile_stats, AttackProfile, BitFlip};
use radar_core::baseline::{code_storage_compare, CheckCode};
use radar_core::codec::{
    detect, protect, storage_overhead_bits, ArchitectureSpec, LayerProtection, ProtectionConfig, SignatureWidth,
};
use radar_core::format::builtin_arch;
use radar_core::qnn::{DenseLayer, FlipDirection, QuantizedModel, QuantizedTensor};

fn row_model(weights: Vec<i8>) -> QuantizedModel {
    let n = weights.len();
    let t = QuantizedTensor::new(weights, vec![1, n], 0.05).unwrap();
    QuantizedModel::new(vec![DenseLayer::new(t, vec![0.0]).unwrap()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    // A group of MSB flips escapes iff the masked count of +128 steps minus
    // -128 steps is a multiple of four (bits 7 and 8 of the sum unchanged).
    #[test]
    fn msb_flips_evade_iff_net_count_is_multiple_of_four(
        weights in prop::collection::vec(any::<i8>(), 64),
        g in prop::sample::select(vec![4usize, 8, 16]),
        key in any::<u16>(),
        sites in prop::collection::btree_set(0usize..64, 0..8),
    ) {
        let clean = row_model(weights.clone());
        let cfg = ProtectionConfig { master_seed: None, layers: vec![LayerProtection::contiguous(g, key)] };
        let store = protect(&clean, &cfg).unwrap();
        let mut attacked = clean.clone();
        let mut net = vec![0i64; 64 / g];
        for &i in &sites {
            attacked.flip_bit(0, i, 7).unwrap();
            let step = if weights[i] < 0 { 1 } else { -1 };
            let negate = (key >> ((i % g) % 16)) & 1 == 0;
            net[i / g] += if negate { -step } else { step };
        }
        let report = detect(&attacked, &store).unwrap();
        for (group, s) in net.iter().enumerate() {
            prop_assert_eq!(report.flagged[0].contains(&group), s.rem_euclid(4) != 0, "group {} net {}", group, s);
        }
    }

    #[test]
    fn doubling_group_size_halves_storage(
        blocks in prop::collection::vec(1usize..50, 1..8),
        g in prop::sample::select(vec![4usize, 8, 16, 32, 64, 128, 256, 512]),
        three in any::<bool>(),
    ) {
        let width = if three { SignatureWidth::Three } else { SignatureWidth::Two };
        let arch = ArchitectureSpec {
            name: "synthetic".into(),
            layers: blocks.iter().enumerate().map(|(i, b)| (format!("l{i}"), b * 2 * g)).collect(),
        };
        prop_assert_eq!(storage_overhead_bits(&arch, g, width), 2 * storage_overhead_bits(&arch, 2 * g, width));
    }

    #[test]
    fn interleaving_never_adds_collisions_for_clustered_flips(
        starts in prop::collection::vec(0usize..4000, 1..20),
        k in 2usize..5,
    ) {
        let profiles: Vec<AttackProfile> = starts
            .iter()
            .map(|&s| AttackProfile {
                flips: (s..s + k)
                    .map(|i| BitFlip {
                        layer: 0,
                        flat_index: i,
                        bit: 7,
                        direction: FlipDirection::ZeroToOne,
                        pre_flip_weight: 1,
                        companion_of: None,
                    })
                    .collect(),
                ..AttackProfile::default()
            })
            .collect();
        let stats = profile_stats(&profiles, &[4096], &[4, 8, 16, 32, 64], 3);
        for p in &stats.collisions {
            prop_assert!(p.interleaved <= p.contiguous, "{:?}", p);
            // k adjacent indices fall in k distinct residue classes of the stride
            if k <= p.group_size {
                prop_assert_eq!(p.interleaved, 0.0);
            }
        }
    }
}

#[test]
fn radar_is_never_larger_than_crc_or_hamming() {
    let codes = [
        CheckCode::Radar(SignatureWidth::Two),
        CheckCode::Radar(SignatureWidth::Three),
        CheckCode::Crc(7),
        CheckCode::Crc(10),
        CheckCode::Crc(13),
        CheckCode::Hamming,
    ];
    for arch in ["resnet18", "resnet20"].map(|a| builtin_arch(a).unwrap()) {
        for g in (3..=10).map(|p| 1usize << p) {
            let rows = code_storage_compare(&arch, g, &codes);
            let radar = rows.iter().filter(|r| r.code.starts_with("radar")).map(|r| r.total_bits).max().unwrap();
            for r in rows.iter().filter(|r| !r.code.starts_with("radar")) {
                assert!(radar <= r.total_bits, "{} G={g}: radar {radar} vs {} {}", arch.name, r.code, r.total_bits);
            }
        }
    }
}

#[test]
fn empty_attack_is_never_detected() {
    let clean = row_model((0..64).map(|i| (i * 7 % 255) as i8).collect());
    let store = protect(&clean, &ProtectionConfig::uniform(1, 8, true, SignatureWidth::Two, 9)).unwrap();
    let mut report = detect(&clean, &store).unwrap();
    report.attribute(&store.groupings(), std::iter::empty()).unwrap();
    assert!(report.is_clean());
    assert_eq!(report.detected_count, 0);
    assert_eq!(report.flips, Some(vec![]));
}
