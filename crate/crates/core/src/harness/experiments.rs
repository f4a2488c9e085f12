use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rows::{ExperimentSpec, ResultRow};
use super::toy::Target;
use crate::attack::{paired_attack, pbfa, profile_stats, restricted_pbfa, AttackProfile, BitFlip, PbfaConfig, ProfileStats};
use crate::baseline::{code_storage_compare, CheckCode, StorageRow};
use crate::codec::{detect, protect, recover, ArchitectureSpec, GoldenSignatureStore, ProtectionConfig, SignatureWidth};
use crate::qnn::{QuantizedModel, Split};
use crate::seed::{self, streams};
use crate::{Error, Result};

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn fingerprint(n_bf: usize, g: usize, interleave: bool, width: SignatureWidth) -> String {
    format!("n_bf={n_bf};G={g};interleave={};width={}", u8::from(interleave), width.bits())
}

fn store_for(target: &Target, spec: &ExperimentSpec, g: usize, interleave: bool, width: SignatureWidth) -> Result<GoldenSignatureStore> {
    let cfg = ProtectionConfig::uniform(target.model.layers().len(), g, interleave, width, spec.master_seed)
        .with_offset(spec.offset);
    protect(&target.model, &cfg)
}

/// Attack batch of round `round`, drawn from the test split.
fn attack_batch(target: &Target, spec: &ExperimentSpec, round: u64) -> Split {
    let mut rng = seed::rng(spec.master_seed, streams::ATTACK, round);
    target.data.test.sample(spec.batch_size, &mut rng)
}

fn run_rounds(
    target: &Target,
    spec: &ExperimentSpec,
    attack: impl Fn(&mut QuantizedModel, &Split) -> Result<AttackProfile> + Sync,
) -> Result<Vec<AttackProfile>> {
    spec.validate()?;
    (0..spec.rounds as u64)
        .into_par_iter()
        .map(|r| {
            let batch = attack_batch(target, spec, r);
            let mut model = target.model.clone();
            let mut profile = attack(&mut model, &batch)?;
            profile.seed = Some(seed::derive(spec.master_seed, streams::ATTACK, r));
            profile.batch_id = format!("test-sample/{r}");
            Ok(profile)
        })
        .collect()
}

/// `spec.rounds` independent PBFA runs of the largest flip budget.
pub fn attack_rounds(target: &Target, spec: &ExperimentSpec) -> Result<Vec<AttackProfile>> {
    let cfg = PbfaConfig::new(spec.max_flips());
    run_rounds(target, spec, |m, b| pbfa(m, b, &cfg))
}

fn attacked(model: &QuantizedModel, flips: &[BitFlip]) -> Result<QuantizedModel> {
    let mut m = model.clone();
    for f in flips {
        m.flip_bit(f.layer, f.flat_index, f.bit)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    /// Detected primary flips.
    detected: usize,
    primaries: usize,
    attacked_accuracy: f64,
    recovered_accuracy: f64,
}

fn evaluate(target: &Target, flips: &[BitFlip], store: &GoldenSignatureStore, with_accuracy: bool) -> Result<Outcome> {
    let mut model = attacked(&target.model, flips)?;
    let mut report = detect(&model, store)?;
    let primaries: Vec<(usize, usize)> = flips.iter().filter(|f| f.companion_of.is_none()).map(BitFlip::site).collect();
    report.attribute(&store.groupings(), primaries.iter().copied())?;
    let (attacked_accuracy, recovered_accuracy) = if with_accuracy {
        let before = target.accuracy(&model)?;
        recover(&mut model, &report, store)?;
        (before, target.accuracy(&model)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Outcome {
        detected: report.detected_count,
        primaries: primaries.len(),
        attacked_accuracy,
        recovered_accuracy,
    })
}

fn check_profiles(profiles: &[AttackProfile], spec: &ExperimentSpec) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::Config("no attack profiles".into()));
    }
    if profiles.len() != spec.rounds {
        return Err(Error::Config(format!("{} profiles for {} rounds", profiles.len(), spec.rounds)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPoint {
    pub n_bf: usize,
    pub group_size: usize,
    pub interleave: bool,
    pub width: SignatureWidth,
    pub detected: Vec<usize>,
    pub mean_detected: f64,
}

impl DetectionPoint {
    pub fn rows(points: &[Self], experiment: &str) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for p in points {
            let cfg = fingerprint(p.n_bf, p.group_size, p.interleave, p.width);
            rows.push(ResultRow::new(experiment, &cfg, "mean_detected", p.mean_detected, p.detected.len() as u64));
            for (r, &d) in p.detected.iter().enumerate() {
                rows.push(ResultRow::per_round(experiment, &cfg, "detected", d as f64, r as u64));
            }
        }
        rows
    }
}

/// Mean number of detected flips for every flip budget, group size and
/// interleave setting, on prefixes of the given PBFA profiles.
pub fn detection_sweep(target: &Target, spec: &ExperimentSpec, profiles: &[AttackProfile]) -> Result<Vec<DetectionPoint>> {
    spec.validate()?;
    check_profiles(profiles, spec)?;
    let mut points = Vec::new();
    for &n_bf in &spec.n_bf {
        for &g in &spec.group_sizes {
            for &interleave in &spec.interleave {
                let store = store_for(target, spec, g, interleave, spec.width)?;
                let detected = profiles
                    .par_iter()
                    .map(|p| Ok(evaluate(target, &p.flips[..n_bf.min(p.len())], &store, false)?.detected))
                    .collect::<Result<Vec<usize>>>()?;
                points.push(DetectionPoint {
                    n_bf,
                    group_size: g,
                    interleave,
                    width: spec.width,
                    mean_detected: mean(detected.iter().map(|&d| d as f64)),
                    detected,
                });
            }
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPoint {
    pub n_bf: usize,
    pub group_size: usize,
    pub interleave: bool,
    pub width: SignatureWidth,
    pub clean_accuracy: f64,
    pub attacked: Vec<f64>,
    pub recovered: Vec<f64>,
    pub mean_attacked: f64,
    pub mean_recovered: f64,
}

impl RecoveryPoint {
    pub fn rows(points: &[Self], experiment: &str) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for p in points {
            let cfg = fingerprint(p.n_bf, p.group_size, p.interleave, p.width);
            let n = p.attacked.len() as u64;
            rows.push(ResultRow::new(experiment, &cfg, "clean_accuracy", p.clean_accuracy, 1));
            rows.push(ResultRow::new(experiment, &cfg, "mean_attacked_accuracy", p.mean_attacked, n));
            rows.push(ResultRow::new(experiment, &cfg, "mean_recovered_accuracy", p.mean_recovered, n));
            for (r, (a, c)) in p.attacked.iter().zip(&p.recovered).enumerate() {
                rows.push(ResultRow::per_round(experiment, &cfg, "attacked_accuracy", *a, r as u64));
                rows.push(ResultRow::per_round(experiment, &cfg, "recovered_accuracy", *c, r as u64));
            }
        }
        rows
    }
}

/// Attacked and recovered test accuracy for every flip budget, group size
/// and interleave setting.
pub fn recovery_table(target: &Target, spec: &ExperimentSpec, profiles: &[AttackProfile]) -> Result<Vec<RecoveryPoint>> {
    spec.validate()?;
    check_profiles(profiles, spec)?;
    let mut points = Vec::new();
    for &n_bf in &spec.n_bf {
        for &g in &spec.group_sizes {
            for &interleave in &spec.interleave {
                let store = store_for(target, spec, g, interleave, spec.width)?;
                let outcomes = profiles
                    .par_iter()
                    .map(|p| evaluate(target, &p.flips[..n_bf.min(p.len())], &store, true))
                    .collect::<Result<Vec<Outcome>>>()?;
                let attacked: Vec<f64> = outcomes.iter().map(|o| o.attacked_accuracy).collect();
                let recovered: Vec<f64> = outcomes.iter().map(|o| o.recovered_accuracy).collect();
                points.push(RecoveryPoint {
                    n_bf,
                    group_size: g,
                    interleave,
                    width: spec.width,
                    clean_accuracy: target.clean_accuracy,
                    mean_attacked: mean(attacked.iter().copied()),
                    mean_recovered: mean(recovered.iter().copied()),
                    attacked,
                    recovered,
                });
            }
        }
    }
    Ok(points)
}

/// Multi-flip group statistics of saved profiles.
pub fn group_collision(
    profiles: &[AttackProfile],
    layer_sizes: &[usize],
    group_sizes: &[usize],
    offset: usize,
) -> Result<ProfileStats> {
    if profiles.is_empty() {
        return Err(Error::Config("group collision needs at least one profile".into()));
    }
    if group_sizes.contains(&0) {
        return Err(Error::Config("group sizes must be positive".into()));
    }
    for p in profiles {
        for f in &p.flips {
            if f.layer >= layer_sizes.len() || f.flat_index >= layer_sizes[f.layer] {
                return Err(Error::OutOfRange(format!(
                    "profile flip at layer {} index {} outside the model",
                    f.layer, f.flat_index
                )));
            }
        }
    }
    Ok(profile_stats(profiles, layer_sizes, group_sizes, offset))
}

impl ProfileStats {
    pub fn rows(&self, experiment: &str) -> Vec<ResultRow> {
        let n = self.rounds as u64;
        let mut rows = vec![
            ResultRow::new(experiment, "all", "msb_0_to_1", self.msb_zero_to_one as f64, n),
            ResultRow::new(experiment, "all", "msb_1_to_0", self.msb_one_to_zero as f64, n),
            ResultRow::new(experiment, "all", "other_bits", self.other_bits as f64, n),
            ResultRow::new(experiment, "all", "small_weight_targets", self.small_weight_targets as f64, n),
        ];
        for (name, &count) in crate::attack::WEIGHT_RANGES.iter().zip(&self.weight_ranges) {
            rows.push(ResultRow::new(experiment, format!("range={name}"), "targets", count as f64, n));
        }
        for c in &self.collisions {
            rows.push(ResultRow::new(experiment, format!("G={};interleave=0", c.group_size), "multi_flip_proportion", c.contiguous, n));
            rows.push(ResultRow::new(experiment, format!("G={};interleave=1", c.group_size), "multi_flip_proportion", c.interleaved, n));
        }
        rows
    }
}

/// Detection of one attack family under one protection setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeableRow {
    pub attack: String,
    pub group_size: usize,
    pub interleave: bool,
    pub width: SignatureWidth,
    /// Mean detected primary flips per round.
    pub detection_ratio: f64,
    /// Mean share of primary flips detected.
    pub detected_fraction: f64,
    pub mean_recovered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeableReport {
    pub rows: Vec<KnowledgeableRow>,
    /// Mean accuracy after each of the first `k` flips, index 0 = clean.
    pub msb_curve: Vec<f64>,
    pub msb1_curve: Vec<f64>,
    /// Flips the bit-6 attacker needs to match the damage of `n_bf` MSB
    /// flips; `None` if it never does within its budget.
    pub msb1_flips_for_equal_damage: Option<usize>,
    pub n_bf: usize,
    /// Attack rounds behind every mean.
    pub rounds: usize,
}

impl KnowledgeableReport {
    pub fn row(&self, attack: &str, g: usize, interleave: bool, width: SignatureWidth) -> Option<&KnowledgeableRow> {
        self.rows
            .iter()
            .find(|r| r.attack == attack && r.group_size == g && r.interleave == interleave && r.width == width)
    }

    /// Flip multiple needed by the bit-6 attacker; a lower bound when it
    /// never catches up.
    pub fn flip_ratio(&self) -> f64 {
        let k = self.msb1_flips_for_equal_damage.unwrap_or(self.msb1_curve.len());
        k as f64 / self.n_bf.max(1) as f64
    }

    pub fn to_rows(&self, experiment: &str) -> Vec<ResultRow> {
        let n = self.rounds as u64;
        let mut rows = Vec::new();
        for r in &self.rows {
            let cfg = format!("attack={};{}", r.attack, fingerprint(self.n_bf, r.group_size, r.interleave, r.width));
            rows.push(ResultRow::new(experiment, &cfg, "detection_ratio", r.detection_ratio, n));
            rows.push(ResultRow::new(experiment, &cfg, "detected_fraction", r.detected_fraction, n));
            rows.push(ResultRow::new(experiment, &cfg, "mean_recovered_accuracy", r.mean_recovered, n));
        }
        for (k, a) in self.msb_curve.iter().enumerate() {
            rows.push(ResultRow::new(experiment, format!("attack=msb;flips={k}"), "mean_accuracy", *a, n));
        }
        for (k, a) in self.msb1_curve.iter().enumerate() {
            rows.push(ResultRow::new(experiment, format!("attack=msb-1;flips={k}"), "mean_accuracy", *a, n));
        }
        rows.push(ResultRow::new(experiment, "attack=msb-1", "flip_ratio_for_equal_damage", self.flip_ratio(), n));
        rows
    }
}

fn accuracy_curve(target: &Target, profiles: &[AttackProfile], len: usize) -> Result<Vec<f64>> {
    let per_round = profiles
        .par_iter()
        .map(|p| {
            let mut m = target.model.clone();
            let mut curve = vec![target.clean_accuracy];
            for f in p.flips.iter().take(len) {
                m.flip_bit(f.layer, f.flat_index, f.bit)?;
                curve.push(target.accuracy(&m)?);
            }
            // a halted attack keeps its last accuracy
            while curve.len() <= len {
                curve.push(*curve.last().unwrap());
            }
            Ok(curve)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((0..=len).map(|k| mean(per_round.iter().map(|c| c[k]))).collect())
}

/// Paired camouflage flips and bit-6 attacks against interleaved and
/// contiguous grouping with 2- and 3-bit signatures.
///
/// `plain` are PBFA profiles from [`attack_rounds`]. The bit-6 attacker
/// gets `msb1_budget` flips.
pub fn knowledgeable(
    target: &Target,
    spec: &ExperimentSpec,
    plain: &[AttackProfile],
    msb1_budget: usize,
) -> Result<KnowledgeableReport> {
    spec.validate()?;
    check_profiles(plain, spec)?;
    let n_bf = spec.max_flips();
    let widths = [SignatureWidth::Two, SignatureWidth::Three];
    let mut rows = Vec::new();
    let mut push = |attack: &str, profiles: &[AttackProfile], g: usize, interleave: bool, width: SignatureWidth| -> Result<()> {
        let store = store_for(target, spec, g, interleave, width)?;
        let outcomes = profiles
            .par_iter()
            .map(|p| evaluate(target, &p.flips, &store, true))
            .collect::<Result<Vec<Outcome>>>()?;
        rows.push(KnowledgeableRow {
            attack: attack.into(),
            group_size: g,
            interleave,
            width,
            detection_ratio: mean(outcomes.iter().map(|o| o.detected as f64)),
            detected_fraction: mean(outcomes.iter().map(|o| o.detected as f64 / o.primaries.max(1) as f64)),
            mean_recovered: mean(outcomes.iter().map(|o| o.recovered_accuracy)),
        });
        Ok(())
    };

    let plain: Vec<AttackProfile> = plain
        .iter()
        .map(|p| AttackProfile {
            flips: p.flips[..n_bf.min(p.len())].to_vec(),
            ..p.clone()
        })
        .collect();
    let cfg = PbfaConfig::new(n_bf);
    let msb1 = run_rounds(target, spec, |m, b| restricted_pbfa(m, b, msb1_budget, &[6]))?;
    let msb1_prefix: Vec<AttackProfile> = msb1
        .iter()
        .map(|p| AttackProfile {
            flips: p.flips[..n_bf.min(p.len())].to_vec(),
            ..p.clone()
        })
        .collect();
    for &g in &spec.group_sizes {
        let paired = run_rounds(target, spec, |m, b| paired_attack(m, b, &cfg, g))?;
        for &interleave in &spec.interleave {
            for width in widths {
                push("pbfa", &plain, g, interleave, width)?;
                push("paired", &paired, g, interleave, width)?;
                push("msb-1", &msb1_prefix, g, interleave, width)?;
            }
        }
    }

    let msb = run_rounds(target, spec, |m, b| restricted_pbfa(m, b, n_bf, &[7]))?;
    let msb_curve = accuracy_curve(target, &msb, n_bf)?;
    let msb1_curve = accuracy_curve(target, &msb1, msb1_budget)?;
    let goal = msb_curve[n_bf];
    let msb1_flips_for_equal_damage = msb1_curve.iter().position(|&a| a <= goal);
    Ok(KnowledgeableReport {
        rows,
        msb_curve,
        msb1_curve,
        msb1_flips_for_equal_damage,
        n_bf,
        rounds: plain.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub group_size: usize,
    pub interleave: bool,
    pub code: String,
    pub storage_kb: f64,
    /// Recovered accuracy, for codes the recovery table covered.
    pub recovered_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub storage: Vec<StorageRow>,
    pub tradeoff: Vec<TradeoffRow>,
    /// Detection wall-clock over inference wall-clock on the test split;
    /// informational only.
    pub detect_to_inference: Option<f64>,
}

impl OverheadReport {
    pub fn rows(&self, experiment: &str) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for s in &self.storage {
            let cfg = format!("arch={};code={};G={}", s.architecture, s.code, s.group_size);
            rows.push(ResultRow::new(experiment, &cfg, "check_bits_per_group", s.width as f64, 1));
            rows.push(ResultRow::new(experiment, &cfg, "storage_kb", s.total_kb, 1));
        }
        for t in &self.tradeoff {
            let cfg = format!("arch=target;code={};G={};interleave={}", t.code, t.group_size, u8::from(t.interleave));
            rows.push(ResultRow::new(experiment, &cfg, "storage_kb", t.storage_kb, 1));
            if let Some(a) = t.recovered_accuracy {
                rows.push(ResultRow::new(experiment, &cfg, "mean_recovered_accuracy", a, 1));
            }
        }
        if let Some(r) = self.detect_to_inference {
            rows.push(ResultRow::new(experiment, "timing", "detect_to_inference_ratio", r, 1));
        }
        rows
    }
}

/// Check-bit storage of every code on every architecture, and the
/// storage-versus-recovered-accuracy curve of the target model.
pub fn overhead(
    archs: &[ArchitectureSpec],
    group_sizes: &[usize],
    codes: &[CheckCode],
    target: Option<(&Target, &[RecoveryPoint])>,
) -> Result<OverheadReport> {
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::Config("group sizes must be non-empty and positive".into()));
    }
    let mut storage = Vec::new();
    for arch in archs {
        for &g in group_sizes {
            storage.extend(code_storage_compare(arch, g, codes));
        }
    }
    let mut tradeoff = Vec::new();
    if let Some((t, points)) = target {
        let arch = ArchitectureSpec {
            name: "target".into(),
            layers: t.model.layer_sizes().into_iter().enumerate().map(|(i, n)| (format!("layer{i}"), n)).collect(),
        };
        for &g in group_sizes {
            for interleave in [true, false] {
                for row in code_storage_compare(&arch, g, codes) {
                    let recovered = points
                        .iter()
                        .filter(|p| {
                            p.group_size == g
                                && p.interleave == interleave
                                && row.code == CheckCode::Radar(p.width).name()
                        })
                        .max_by_key(|p| p.n_bf)
                        .map(|p| p.mean_recovered);
                    tradeoff.push(TradeoffRow {
                        group_size: g,
                        interleave,
                        code: row.code,
                        storage_kb: row.total_kb,
                        recovered_accuracy: recovered,
                    });
                }
            }
        }
    }
    Ok(OverheadReport {
        storage,
        tradeoff,
        detect_to_inference: None,
    })
}

/// Median wall-clock of one full detection pass over one inference pass
/// on the test split.
pub fn timing(target: &Target, store: &GoldenSignatureStore, repeats: usize) -> Result<f64> {
    let median = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        xs[xs.len() / 2]
    };
    let mut d = Vec::new();
    let mut f = Vec::new();
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        detect(&target.model, store)?;
        d.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        target.model.forward(&target.data.test.inputs)?;
        f.push(t.elapsed().as_secs_f64());
    }
    Ok(median(d) / median(f).max(f64::MIN_POSITIVE))
}
