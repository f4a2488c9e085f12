use radar_core::attack::{paired_attack, pbfa, random_attack, restricted_pbfa, PbfaConfig};
use radar_core::qnn::{flipped, train_tiny, GaussianClusters, LossProbe, QuantizedModel, Split, TrainConfig};
use radar_core::seed;

fn tiny() -> (QuantizedModel, Split) {
    let data = GaussianClusters {
        classes: 3,
        features: 8,
        train_per_class: 60,
        test_per_class: 30,
        ..GaussianClusters::default()
    }
    .generate(11)
    .unwrap();
    let cfg = TrainConfig {
        hidden: vec![6],
        epochs: 20,
        seed: 5,
        ..TrainConfig::default()
    };
    let trained = train_tiny(&data, &cfg).unwrap();
    (trained.model, data.test)
}

fn loss(model: &QuantizedModel, batch: &Split) -> f64 {
    model.loss(&batch.inputs, &batch.labels).unwrap()
}

#[test]
fn loss_probe_matches_full_forward_pass() {
    let (model, batch) = tiny();
    let probe = LossProbe::new(&model, &batch.inputs, &batch.labels).unwrap();
    assert!((probe.loss() - loss(&model, &batch)).abs() < 1e-9);
    for layer in 0..model.layers().len() {
        for index in (0..model.weights(layer).len()).step_by(5) {
            for bit in [0, 3, 6, 7] {
                let v = flipped(model.weights(layer)[index], bit);
                let mut full = model.clone();
                full.weights_mut(layer)[index] = v;
                let want = loss(&full, &batch);
                let got = probe.loss_with(&model, layer, index, v);
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{layer}/{index}/{bit}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn first_flip_maximises_exact_loss_when_every_candidate_is_kept() {
    let (model, batch) = tiny();
    let mut best = f64::NEG_INFINITY;
    for layer in 0..model.layers().len() {
        for index in 0..model.weights(layer).len() {
            for bit in 0..8 {
                let mut m = model.clone();
                m.flip_bit(layer, index, bit).unwrap();
                best = best.max(loss(&m, &batch));
            }
        }
    }
    let mut attacked = model.clone();
    let cfg = PbfaConfig {
        candidates_per_layer: usize::MAX,
        ..PbfaConfig::new(1)
    };
    let profile = pbfa(&mut attacked, &batch, &cfg).unwrap();
    assert_eq!(profile.len(), 1);
    assert!((loss(&attacked, &batch) - best).abs() < 1e-9);
}

#[test]
fn pbfa_is_deterministic_and_replayable() {
    let (model, batch) = tiny();
    let run = || {
        let mut m = model.clone();
        let p = pbfa(&mut m, &batch, &PbfaConfig::new(6)).unwrap();
        (m, p)
    };
    let (attacked, profile) = run();
    assert_eq!(run().1, profile);
    profile.check_unique().unwrap();

    let mut replayed = model.clone();
    profile.replay(&mut replayed).unwrap();
    assert_eq!(replayed, attacked);
    assert!(profile.loss_trajectory.windows(2).all(|w| w[1] >= w[0]));
    let last = *profile.loss_trajectory.last().unwrap();
    assert!((last - loss(&attacked, &batch)).abs() < 1e-9);
    for f in &profile.flips {
        assert_eq!(f.pre_flip_weight, model.weights(f.layer)[f.flat_index]);
    }
}

#[test]
fn msb_only_pbfa_equals_restricted_attack() {
    let (model, batch) = tiny();
    let mut a = model.clone();
    let cfg = PbfaConfig {
        allowed_bits: vec![7],
        ..PbfaConfig::new(5)
    };
    let p = pbfa(&mut a, &batch, &cfg).unwrap();
    let mut b = model.clone();
    let q = restricted_pbfa(&mut b, &batch, 5, &[7]).unwrap();
    assert_eq!(p, q);
    assert!(p.flips.iter().all(|f| f.bit == 7 && f.is_msb()));
}

#[test]
fn pbfa_rejects_bad_configurations() {
    let (model, batch) = tiny();
    let mut m = model.clone();
    let bad_bit = PbfaConfig {
        allowed_bits: vec![8],
        ..PbfaConfig::new(1)
    };
    assert!(pbfa(&mut m, &batch, &bad_bit).is_err());
    assert!(pbfa(&mut m, &batch, &PbfaConfig::new(model.total_weights() + 1)).is_err());
    assert_eq!(m, model);
}

#[test]
fn random_attack_flips_distinct_allowed_sites() {
    let (model, _) = tiny();
    let run = |s| {
        let mut m = model.clone();
        let p = random_attack(&mut m, 40, &[6, 7], &mut seed::rng(s, "random-attack", 0)).unwrap();
        (m, p)
    };
    let (attacked, p) = run(1);
    assert_eq!(p.len(), 40);
    assert!(p.flips.iter().all(|f| f.bit == 6 || f.bit == 7));
    let mut keys: Vec<_> = p.flips.iter().map(|f| (f.layer, f.flat_index, f.bit)).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), 40);
    assert_eq!(run(1).1, p);
    assert_ne!(run(2).1, p);

    let mut replayed = model.clone();
    p.replay(&mut replayed).unwrap();
    assert_eq!(replayed, attacked);

    let mut m = model.clone();
    let all = model.total_weights();
    assert!(random_attack(&mut m, all + 1, &[7], &mut seed::rng(0, "x", 0)).is_err());
}

#[test]
fn paired_companions_cancel_within_assumed_group() {
    let (model, batch) = tiny();
    let g = 4;
    let mut plain = model.clone();
    let base = pbfa(&mut plain, &batch, &PbfaConfig::new(5)).unwrap();
    let mut m = model.clone();
    let p = paired_attack(&mut m, &batch, &PbfaConfig::new(5), g).unwrap();

    let primaries: Vec<_> = p.primary().copied().collect();
    assert_eq!(primaries, base.flips);
    p.check_unique().unwrap();
    let companions: Vec<_> = p.flips.iter().filter(|f| f.companion_of.is_some()).collect();
    assert_eq!(companions.len() + p.skipped_companions.len(), primaries.len());
    for c in companions {
        let pr = p.flips[c.companion_of.unwrap()];
        assert_eq!(c.bit, 7);
        assert_eq!(c.layer, pr.layer);
        assert_eq!(c.flat_index / g, pr.flat_index / g);
        assert_eq!(c.direction, pr.direction.opposite());
    }
}
