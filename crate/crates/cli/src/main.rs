//! `radar`: train, protect, attack, detect and recover quantized models,
//! and run the detection/recovery experiments.
//!
//! Exit status: 0 on success (for `detect`: model clean), 2 when `detect`
//! flags at least one group, 1 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use radar_core::attack::{paired_attack, pbfa, random_attack, restricted_pbfa, AttackProfile, PbfaConfig};
use radar_core::baseline::CheckCode;
use radar_core::codec::{
    detect, layer_key, protect, recover, ArchitectureSpec, LayerProtection, ProtectionConfig, SignatureWidth,
};
use radar_core::format;
use radar_core::harness::{self, ExperimentSpec, MissRateSpec, ResultRow, Target, ToyConfig};
use radar_core::qnn::{Dataset, QuantizedModel};
use radar_core::seed::{self, streams};

#[derive(Parser)]
#[command(name = "radar", version, about = "Bit-flip attack detection and recovery for 8-bit quantized networks")]
struct Cli {
    /// Worker threads for experiment rounds (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy dataset and train the toy model.
    Train(TrainArgs),
    /// Compute the golden signature store of a clean model.
    Protect(ProtectArgs),
    /// Attack a model and save the attacked model and its flip profile.
    Attack(AttackArgs),
    /// Compare a model against a golden store; exit status 2 if flagged.
    Detect(DetectArgs),
    /// Zero every flagged group and save the result.
    Recover(RecoverArgs),
    /// Mean detected flips per group size and interleave setting.
    DetectionSweep(ExperimentArgs),
    /// Attacked and recovered accuracy per flip budget and group size.
    RecoveryTable(ExperimentArgs),
    /// Monte Carlo probability that random MSB flips raise no flag.
    MissRate(MissRateArgs),
    /// Multi-flip group proportions of saved attack profiles.
    GroupCollision(CollisionArgs),
    /// Paired-flip and bit-6 attackers against both signature widths.
    Knowledgeable(KnowledgeableArgs),
    /// Check-bit storage of RADAR, CRC and Hamming codes.
    Overhead(OverheadArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ProtectionArgs {
    /// Weights per group.
    #[arg(long, short = 'g', default_value_t = 8)]
    group_size: usize,
    /// Group contiguous weights instead of interleaving.
    #[arg(long)]
    no_interleave: bool,
    /// Interleave stride (default: the group size).
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 3)]
    offset: usize,
    /// Signature bits per group: 2 or 3.
    #[arg(long, default_value = "2", value_parser = parse_width)]
    width: SignatureWidth,
    /// Master seed of the per-layer secret keys.
    #[arg(long, default_value_t = 0)]
    key_seed: u64,
}

impl ProtectionArgs {
    fn config(&self, layers: usize) -> ProtectionConfig {
        ProtectionConfig {
            master_seed: Some(self.key_seed),
            layers: (0..layers)
                .map(|i| LayerProtection {
                    interleave: !self.no_interleave,
                    stride: self.stride.unwrap_or(self.group_size),
                    offset: self.offset,
                    width: self.width,
                    ..LayerProtection::new(self.group_size, layer_key(self.key_seed, i))
                })
                .collect(),
        }
    }
}

#[derive(Args)]
struct ProtectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output store file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    protection: ProtectionArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    /// Progressive bit-flip attack on all bit positions.
    Pbfa,
    /// Progressive attack restricted to bit 6.
    Msb1,
    /// PBFA plus one opposite-direction MSB companion per flip.
    Paired,
    /// Uniformly random bits.
    Random,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output attacked model.
    #[arg(long)]
    out: PathBuf,
    /// Output flip profile.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_enum, default_value = "pbfa")]
    kind: AttackKind,
    #[arg(long, default_value_t = 10)]
    n_bf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Group size the paired attacker assumes.
    #[arg(long, default_value_t = 8)]
    assumed_group_size: usize,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Optional output report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Attack profile used to count detected flips.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Output recovered model.
    #[arg(long)]
    out: PathBuf,
    /// Dataset for reporting accuracy before and after.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TargetArgs {
    /// Model file; the toy model is trained from --seed when absent.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    /// Master seed for training, attack batches and keys.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TargetArgs {
    fn load(&self) -> Result<Target> {
        match (&self.model, &self.data) {
            (Some(m), Some(d)) => Ok(Target::new(format::load_model(m)?, Dataset::read_csv(d)?)?),
            _ => Ok(harness::toy_target(&ToyConfig::default(), self.seed)?),
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Group sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    groups: Vec<usize>,
    /// Sweep only this interleave setting (default: both).
    #[arg(long)]
    interleave: Option<bool>,
    #[arg(long, default_value_t = 3)]
    offset: usize,
    #[arg(long, default_value = "2", value_parser = parse_width)]
    width: SignatureWidth,
    /// Flip budgets.
    #[arg(long, value_delimiter = ',')]
    n_bf: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Save the generated attack profiles.
    #[arg(long)]
    profiles_out: Option<PathBuf>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn spec(&self, name: &str, default_n_bf: &[usize]) -> ExperimentSpec {
        ExperimentSpec {
            name: name.into(),
            group_sizes: self.groups.clone(),
            interleave: self.interleave.map_or(vec![true, false], |i| vec![i]),
            width: self.width,
            offset: self.offset,
            n_bf: self.n_bf.clone().unwrap_or_else(|| default_n_bf.to_vec()),
            rounds: self.rounds,
            batch_size: self.batch_size,
            master_seed: self.target.seed,
        }
    }
}

#[derive(Args)]
struct MissRateArgs {
    #[arg(long, default_value_t = 512)]
    layer_size: usize,
    #[arg(long, short = 'g', value_delimiter = ',', default_value = "16,32")]
    groups: Vec<usize>,
    #[arg(long)]
    no_interleave: bool,
    #[arg(long, default_value = "2", value_parser = parse_width)]
    width: SignatureWidth,
    #[arg(long, default_value_t = 10)]
    flips: usize,
    #[arg(long, default_value_t = 1_000_000)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CollisionArgs {
    /// Saved attack profiles.
    #[arg(long)]
    profiles: PathBuf,
    /// Model the profiles were taken on (for layer sizes).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    groups: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    offset: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KnowledgeableArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Flip budget of the bit-6 attacker.
    #[arg(long, default_value_t = 40)]
    msb1_budget: usize,
}

#[derive(Args)]
struct OverheadArgs {
    /// Built-in table name (resnet18, resnet20) or table file; repeatable.
    #[arg(long, default_values_t = ["resnet18".to_string(), "resnet20".to_string()])]
    arch: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256,512,1024")]
    groups: Vec<usize>,
    /// Also run the recovery table on the target model and emit the
    /// storage-versus-accuracy curve with a timing ratio.
    #[arg(long)]
    tradeoff: bool,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_width(s: &str) -> Result<SignatureWidth, String> {
    let n: u8 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    SignatureWidth::try_from(n).map_err(|e| e.to_string())
}

fn emit(rows: &[ResultRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => harness::write_rows(p, rows)?,
        None => print!("{}", harness::format_rows(rows)?),
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let t = harness::toy_target(&ToyConfig::default(), a.seed)?;
    format::save_model(&a.model, &t.model)?;
    t.data.write_csv(&a.data)?;
    eprintln!("trained {:?} weights per layer, clean test accuracy {:.4}", t.model.layer_sizes(), t.clean_accuracy);
    Ok(())
}

fn attack(a: &AttackArgs) -> Result<()> {
    let mut model = format::load_model(&a.model)?;
    let data = Dataset::read_csv(&a.data)?;
    let mut rng = seed::rng(a.seed, streams::ATTACK, 0);
    let batch = data.test.sample(a.batch_size, &mut rng);
    let cfg = PbfaConfig::new(a.n_bf);
    let mut profile = match a.kind {
        AttackKind::Pbfa => pbfa(&mut model, &batch, &cfg)?,
        AttackKind::Msb1 => restricted_pbfa(&mut model, &batch, a.n_bf, &[6])?,
        AttackKind::Paired => paired_attack(&mut model, &batch, &cfg, a.assumed_group_size)?,
        AttackKind::Random => random_attack(&mut model, a.n_bf, &[0, 1, 2, 3, 4, 5, 6, 7], &mut rng)?,
    };
    profile.seed = Some(a.seed);
    profile.batch_id = format!("test-sample/{}", a.seed);
    format::save_model(&a.out, &model)?;
    format::save_profiles(&a.profile, std::slice::from_ref(&profile))?;
    let acc = model.accuracy(&data.test.inputs, &data.test.labels)?;
    eprintln!("{} flips committed, attacked test accuracy {acc:.4}", profile.len());
    Ok(())
}

fn run_detect(a: &DetectArgs) -> Result<bool> {
    let model = format::load_model(&a.model)?;
    let store = format::load_store(&a.store)?;
    let mut report = detect(&model, &store)?;
    if let Some(p) = &a.profile {
        let profiles = format::load_profiles(p)?;
        let sites = profiles.iter().flat_map(AttackProfile::sites).collect::<Vec<_>>();
        report.attribute(&store.groupings(), sites)?;
        println!("detected flips: {} of {}", report.detected_count, report.flips.as_ref().map_or(0, Vec::len));
    }
    if let Some(r) = &a.report {
        format::save_report(r, &report)?;
    }
    for (layer, groups) in report.flagged.iter().enumerate() {
        if !groups.is_empty() {
            println!("layer {layer}: flagged groups {groups:?}");
        }
    }
    println!("{}", if report.is_clean() { "clean" } else { "attack detected" });
    Ok(!report.is_clean())
}

fn run_recover(a: &RecoverArgs) -> Result<()> {
    let mut model = format::load_model(&a.model)?;
    let store = format::load_store(&a.store)?;
    let report = detect(&model, &store)?;
    let data = a.data.as_deref().map(Dataset::read_csv).transpose()?;
    let acc = |m: &QuantizedModel| -> Result<Option<f64>> {
        Ok(data.as_ref().map(|d| m.accuracy(&d.test.inputs, &d.test.labels)).transpose()?)
    };
    let before = acc(&model)?;
    let changed = recover(&mut model, &report, &store)?;
    format::save_model(&a.out, &model)?;
    println!("zeroed {changed} weights in {} flagged groups", report.flagged_groups());
    if let (Some(b), Some(after)) = (before, acc(&model)?) {
        println!("test accuracy {b:.4} -> {after:.4}");
    }
    Ok(())
}

fn profiles_for(a: &ExperimentArgs, target: &Target, spec: &ExperimentSpec) -> Result<Vec<AttackProfile>> {
    let profiles = harness::attack_rounds(target, spec)?;
    if let Some(p) = &a.profiles_out {
        format::save_profiles(p, &profiles)?;
    }
    Ok(profiles)
}

fn detection_sweep(a: &ExperimentArgs) -> Result<()> {
    let target = a.target.load()?;
    let spec = a.spec("detection-sweep", &[10]);
    let profiles = profiles_for(a, &target, &spec)?;
    let points = harness::detection_sweep(&target, &spec, &profiles)?;
    emit(&harness::DetectionPoint::rows(&points, &spec.name), a.out.as_deref())
}

fn recovery_table(a: &ExperimentArgs) -> Result<()> {
    let target = a.target.load()?;
    let spec = a.spec("recovery-table", &[5, 10]);
    let profiles = profiles_for(a, &target, &spec)?;
    let points = harness::recovery_table(&target, &spec, &profiles)?;
    emit(&harness::RecoveryPoint::rows(&points, &spec.name), a.out.as_deref())
}

fn miss_rate(a: &MissRateArgs) -> Result<()> {
    let mut rows = Vec::new();
    for &g in &a.groups {
        let spec = MissRateSpec {
            layer_size: a.layer_size,
            group_size: g,
            interleave: !a.no_interleave,
            width: a.width,
            flips: a.flips,
            rounds: a.rounds,
            master_seed: a.seed,
        };
        let r = harness::miss_rate(&spec)?;
        let cfg = format!("L={};G={g};interleave={};flips={}", a.layer_size, u8::from(!a.no_interleave), a.flips);
        for (metric, v) in [("miss_rate", r.rate), ("ci_low", r.ci_low), ("ci_high", r.ci_high), ("misses", r.misses as f64)] {
            rows.push(ResultRow::new("miss-rate", &cfg, metric, v, r.rounds));
        }
    }
    emit(&rows, a.out.as_deref())
}

fn group_collision(a: &CollisionArgs) -> Result<()> {
    let profiles = format::load_profiles(&a.profiles)?;
    if profiles.is_empty() {
        bail!("{} holds no attack profiles", a.profiles.display());
    }
    let model = format::load_model(&a.model)?;
    let stats = harness::group_collision(&profiles, &model.layer_sizes(), &a.groups, a.offset)?;
    emit(&stats.rows("group-collision"), a.out.as_deref())
}

fn knowledgeable(a: &KnowledgeableArgs) -> Result<()> {
    let e = &a.experiment;
    let target = e.target.load()?;
    let spec = e.spec("knowledgeable", &[10]);
    let plain = profiles_for(e, &target, &spec)?;
    let report = harness::knowledgeable(&target, &spec, &plain, a.msb1_budget)?;
    emit(&report.to_rows(&spec.name), e.out.as_deref())
}

fn load_arch(name: &str) -> Result<ArchitectureSpec> {
    match format::builtin_arch(name) {
        Some(a) => Ok(a),
        None => format::load_arch(Path::new(name)).with_context(|| format!("architecture {name:?}")),
    }
}

fn overhead(a: &OverheadArgs) -> Result<()> {
    let archs = a.arch.iter().map(|n| load_arch(n)).collect::<Result<Vec<_>>>()?;
    let codes = [
        CheckCode::Radar(SignatureWidth::Two),
        CheckCode::Radar(SignatureWidth::Three),
        CheckCode::Crc(7),
        CheckCode::Crc(10),
        CheckCode::Crc(13),
        CheckCode::Hamming,
    ];
    let mut report = if a.tradeoff {
        let target = a.target.load()?;
        let spec = ExperimentSpec {
            name: "overhead".into(),
            group_sizes: a.groups.clone(),
            rounds: a.rounds,
            master_seed: a.target.seed,
            ..ExperimentSpec::default()
        };
        let profiles = harness::attack_rounds(&target, &spec)?;
        let points = harness::recovery_table(&target, &spec, &profiles)?;
        let mut report = harness::overhead(&archs, &a.groups, &codes, Some((&target, &points)))?;
        let store = protect(
            &target.model,
            &ProtectionConfig::uniform(target.model.layers().len(), a.groups[0], true, SignatureWidth::Two, a.target.seed),
        )?;
        report.detect_to_inference = Some(harness::timing(&target, &store, 5)?);
        report
    } else {
        harness::overhead(&archs, &a.groups, &codes, None)?
    };
    report.storage.sort_by(|x, y| (&x.architecture, &x.code, x.group_size).cmp(&(&y.architecture, &y.code, y.group_size)));
    emit(&report.rows("overhead"), a.out.as_deref())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Train(a) => train(a)?,
        Command::Protect(a) => {
            let model = format::load_model(&a.model)?;
            let store = protect(&model, &a.protection.config(model.layers().len()))?;
            format::save_store(&a.out, &store)?;
            eprintln!("{} signature bits over {} layers", store.bit_size(), store.layer_sizes.len());
        }
        Command::Attack(a) => attack(a)?,
        Command::Detect(a) => {
            if run_detect(a)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Recover(a) => run_recover(a)?,
        Command::DetectionSweep(a) => detection_sweep(a)?,
        Command::RecoveryTable(a) => recovery_table(a)?,
        Command::MissRate(a) => miss_rate(a)?,
        Command::GroupCollision(a) => group_collision(a)?,
        Command::Knowledgeable(a) => knowledgeable(a)?,
        Command::Overhead(a) => overhead(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which would read as "attack detected"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
