use radar_core::attack::{pbfa, PbfaConfig};
use radar_core::codec::{detect, protect, ProtectionConfig, SignatureWidth};
use radar_core::format::{self, builtin_arch};
use radar_core::qnn::{train_tiny, GaussianClusters, TrainConfig};
use radar_core::Error;

fn dir() -> tempfile::TempDir {
    tempfile::TempDir::new().unwrap()
}

fn malformed_offset(e: Error) -> u64 {
    match e {
        Error::Malformed { offset, .. } => offset,
        other => panic!("expected a malformed-file error, got {other}"),
    }
}

#[test]
fn every_artifact_round_trips() {
    let d = dir();
    let data = GaussianClusters {
        classes: 3,
        features: 8,
        ..GaussianClusters::default()
    }
    .generate(2)
    .unwrap();
    let mut model = train_tiny(&data, &TrainConfig { hidden: vec![5], epochs: 5, ..TrainConfig::default() })
        .unwrap()
        .model;
    let store = protect(&model, &ProtectionConfig::uniform(2, 4, true, SignatureWidth::Three, 7)).unwrap();
    let clean = model.clone();
    let profile = pbfa(&mut model, &data.test, &PbfaConfig::new(3)).unwrap();
    let mut report = detect(&model, &store).unwrap();
    report.attribute(&store.groupings(), profile.sites()).unwrap();

    let p = d.path().join("m.json");
    format::save_model(&p, &clean).unwrap();
    assert_eq!(format::load_model(&p).unwrap(), clean);
    let p = d.path().join("s.json");
    format::save_store(&p, &store).unwrap();
    assert_eq!(format::load_store(&p).unwrap(), store);
    let p = d.path().join("p.json");
    format::save_profiles(&p, std::slice::from_ref(&profile)).unwrap();
    assert_eq!(format::load_profiles(&p).unwrap(), vec![profile]);
    let p = d.path().join("r.json");
    format::save_report(&p, &report).unwrap();
    assert_eq!(format::load_report(&p).unwrap(), report);
    let p = d.path().join("a.csv");
    let arch = builtin_arch("resnet20").unwrap();
    format::write_arch(&p, &arch).unwrap();
    assert_eq!(format::load_arch(&p).unwrap(), arch);
}

#[test]
fn wrong_magic_and_truncation_are_rejected_with_offsets() {
    let d = dir();
    let p = d.path().join("x.json");
    std::fs::write(&p, r#"{"magic": "radar-golden-store", "version": 1}"#).unwrap();
    assert_eq!(malformed_offset(format::load_model(&p).unwrap_err()), 0);

    std::fs::write(&p, "{\n  \"magic\": \"radar-qmodel\",\n  \"version\": 1,\n  \"layers\": [\n").unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(malformed_offset(format::load_model(&p).unwrap_err()), text.len() as u64);

    std::fs::write(&p, r#"{"magic": "radar-qmodel", "version": 9, "layers": []}"#).unwrap();
    assert!(format::load_model(&p).unwrap_err().to_string().contains("unsupported version 9"));

    let missing = d.path().join("missing.json");
    assert!(matches!(format::load_store(&missing), Err(Error::Io { .. })));
}

#[test]
fn damaged_weight_payload_is_rejected() {
    let d = dir();
    let p = d.path().join("m.json");
    std::fs::write(
        &p,
        r#"{"magic": "radar-qmodel", "version": 1, "layers": [{"shape": [1, 2], "scale": "0.5", "bias": [0.0], "weights": "0"}]}"#,
    )
    .unwrap();
    assert!(matches!(format::load_model(&p), Err(Error::Malformed { .. })));
}
