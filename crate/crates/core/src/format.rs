//! On-disk formats. Every file starts with a magic tag and a version so a
//! wrong or truncated file is rejected with the byte offset of the problem.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attack::AttackProfile;
use crate::codec::{ArchitectureSpec, DetectionReport, GoldenSignatureStore, ProtectionConfig, Signature};
use crate::qnn::{DenseLayer, QuantizedModel, QuantizedTensor};
use crate::{Error, Result};

pub const MODEL_MAGIC: &str = "radar-qmodel";
pub const STORE_MAGIC: &str = "radar-golden-store";
pub const PROFILES_MAGIC: &str = "radar-attack-profiles";
pub const REPORT_MAGIC: &str = "radar-detection-report";
pub const ARCH_MAGIC: &str = "# radar-arch v1";
pub const VERSION: u32 = 1;

fn malformed(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Byte offset of a 1-based line/column position reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len()) as u64
}

#[derive(Deserialize)]
struct Header {
    magic: String,
    version: u32,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("in-memory values always serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path, magic: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let at = |e: serde_json::Error| malformed(path, byte_offset(&text, e.line(), e.column()), e.to_string());
    let header: Header = serde_json::from_str(&text).map_err(at)?;
    if header.magic != magic {
        return Err(malformed(path, 0, format!("expected magic {magic:?}, found {:?}", header.magic)));
    }
    if header.version != VERSION {
        return Err(malformed(path, 0, format!("unsupported version {}", header.version)));
    }
    serde_json::from_str(&text).map_err(at)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    shape: Vec<usize>,
    /// Decimal text so the dequantization scale survives exactly.
    scale: String,
    bias: Vec<f64>,
    /// Two's-complement bytes, hex encoded.
    weights: String,
}

pub fn save_model(path: &Path, model: &QuantizedModel) -> Result<()> {
    let layers = model
        .layers()
        .iter()
        .map(|l| LayerFile {
            shape: l.weights.shape().to_vec(),
            scale: format!("{:?}", l.weights.scale()),
            bias: l.bias.clone(),
            weights: hex::encode(l.weights.values().iter().map(|&w| w as u8).collect::<Vec<_>>()),
        })
        .collect();
    write_json(
        path,
        &ModelFile {
            magic: MODEL_MAGIC.into(),
            version: VERSION,
            layers,
        },
    )
}

pub fn load_model(path: &Path) -> Result<QuantizedModel> {
    let file: ModelFile = read_json(path, MODEL_MAGIC)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        let bad = |msg: String| malformed(path, 0, format!("layer {i}: {msg}"));
        let scale: f64 = l.scale.parse().map_err(|_| bad(format!("scale {:?} is not a number", l.scale)))?;
        let bytes = hex::decode(&l.weights).map_err(|e| bad(format!("weights: {e}")))?;
        let values = bytes.into_iter().map(|b| b as i8).collect();
        let tensor = QuantizedTensor::new(values, l.shape, scale).map_err(|e| bad(e.to_string()))?;
        layers.push(DenseLayer::new(tensor, l.bias).map_err(|e| bad(e.to_string()))?);
    }
    QuantizedModel::new(layers).map_err(|e| malformed(path, 0, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    magic: String,
    version: u32,
    config: ProtectionConfig,
    layer_sizes: Vec<usize>,
    /// Per layer: signature words packed little-endian, `width` bits each.
    signatures: Vec<String>,
}

fn pack(words: impl Iterator<Item = u8>, width: u32) -> Vec<u8> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    for w in words {
        for b in 0..width {
            if pos.is_multiple_of(8) {
                out.push(0);
            }
            if (w >> b) & 1 == 1 {
                *out.last_mut().unwrap() |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

fn unpack(bytes: &[u8], width: u32, count: usize) -> Option<Vec<u8>> {
    if bytes.len() != (count * width as usize).div_ceil(8) {
        return None;
    }
    let bit = |pos: usize| (bytes[pos / 8] >> (pos % 8)) & 1;
    Some(
        (0..count)
            .map(|i| (0..width).fold(0u8, |w, b| w | (bit(i * width as usize + b as usize) << b)))
            .collect(),
    )
}

pub fn save_store(path: &Path, store: &GoldenSignatureStore) -> Result<()> {
    let signatures = store
        .signatures
        .iter()
        .zip(&store.config.layers)
        .map(|(s, c)| hex::encode(pack(s.iter().map(Signature::word), c.width.bits())))
        .collect();
    write_json(
        path,
        &StoreFile {
            magic: STORE_MAGIC.into(),
            version: VERSION,
            config: store.config.clone(),
            layer_sizes: store.layer_sizes.clone(),
            signatures,
        },
    )
}

pub fn load_store(path: &Path) -> Result<GoldenSignatureStore> {
    let file: StoreFile = read_json(path, STORE_MAGIC)?;
    file.config.validate().map_err(|e| malformed(path, 0, e.to_string()))?;
    if file.config.layers.len() != file.layer_sizes.len() || file.signatures.len() != file.layer_sizes.len() {
        return Err(malformed(path, 0, "layer count differs between config, sizes and signatures"));
    }
    let mut store = GoldenSignatureStore {
        config: file.config,
        layer_sizes: file.layer_sizes,
        signatures: Vec::new(),
    };
    for (l, text) in file.signatures.iter().enumerate() {
        let width = store.config.layers[l].width;
        let count = store.grouping(l).group_count();
        let bytes = hex::decode(text).map_err(|e| malformed(path, 0, format!("layer {l} signatures: {e}")))?;
        let words = unpack(&bytes, width.bits(), count)
            .ok_or_else(|| malformed(path, 0, format!("layer {l}: expected {count} signatures")))?;
        store
            .signatures
            .push(words.into_iter().map(|w| Signature::from_word(w, width)).collect());
    }
    Ok(store)
}

#[derive(Serialize, Deserialize)]
struct ProfilesFile {
    magic: String,
    version: u32,
    profiles: Vec<AttackProfile>,
}

pub fn save_profiles(path: &Path, profiles: &[AttackProfile]) -> Result<()> {
    write_json(
        path,
        &ProfilesFile {
            magic: PROFILES_MAGIC.into(),
            version: VERSION,
            profiles: profiles.to_vec(),
        },
    )
}

pub fn load_profiles(path: &Path) -> Result<Vec<AttackProfile>> {
    let file: ProfilesFile = read_json(path, PROFILES_MAGIC)?;
    for (i, p) in file.profiles.iter().enumerate() {
        p.check_unique().map_err(|e| malformed(path, 0, format!("profile {i}: {e}")))?;
    }
    Ok(file.profiles)
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    magic: String,
    version: u32,
    report: DetectionReport,
}

pub fn save_report(path: &Path, report: &DetectionReport) -> Result<()> {
    write_json(
        path,
        &ReportFile {
            magic: REPORT_MAGIC.into(),
            version: VERSION,
            report: report.clone(),
        },
    )
}

pub fn load_report(path: &Path) -> Result<DetectionReport> {
    Ok(read_json::<ReportFile>(path, REPORT_MAGIC)?.report)
}

/// Parses an architecture table: a `# radar-arch v1 <name>` line followed
/// by `layer,weights` CSV.
pub fn parse_arch(text: &str, path: &Path) -> Result<ArchitectureSpec> {
    let first = text.lines().next().unwrap_or("");
    let name = first
        .strip_prefix(ARCH_MAGIC)
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .ok_or_else(|| malformed(path, 0, format!("expected `{ARCH_MAGIC} <name>` header")))?;
    let body_start = first.len() + 1;
    let body = text.get(body_start..).unwrap_or("");
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let at = |pos: Option<&csv::Position>| body_start as u64 + pos.map_or(0, csv::Position::byte);
    let headers = reader.headers().map_err(|e| malformed(path, at(e.position()), e.to_string()))?;
    if headers != vec!["layer", "weights"] {
        return Err(malformed(path, body_start as u64, "expected columns `layer,weights`"));
    }
    let mut layers = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(path, at(e.position()), e.to_string()))?;
        let offset = at(record.position());
        let n: usize = record[1]
            .parse()
            .map_err(|_| malformed(path, offset, format!("weight count {:?} is not a non-negative integer", &record[1])))?;
        if n == 0 {
            return Err(malformed(path, offset, "layer has no weights"));
        }
        layers.push((record[0].to_string(), n));
    }
    if layers.is_empty() {
        return Err(malformed(path, text.len() as u64, "no layers"));
    }
    Ok(ArchitectureSpec {
        name: name.to_string(),
        layers,
    })
}

pub fn load_arch(path: &Path) -> Result<ArchitectureSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arch(&text, path)
}

pub fn write_arch(path: &Path, arch: &ArchitectureSpec) -> Result<()> {
    let mut text = format!("{ARCH_MAGIC} {}\nlayer,weights\n", arch.name);
    for (name, n) in &arch.layers {
        text.push_str(&format!("{name},{n}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Built-in layer tables.
pub fn builtin_arch(name: &str) -> Option<ArchitectureSpec> {
    let text = match name {
        "resnet18" => include_str!("../data/resnet18.csv"),
        "resnet20" => include_str!("../data/resnet20.csv"),
        _ => return None,
    };
    Some(parse_arch(text, Path::new(name)).expect("shipped tables parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_offset_counts_lines() {
        let text = "ab\ncde\nf";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 2, 2), 4);
        assert_eq!(byte_offset(text, 3, 1), 7);
    }

    #[test]
    fn pack_round_trip() {
        let words = [3u8, 0, 1, 2, 3, 3, 1];
        for width in [2, 3] {
            let packed = pack(words.iter().copied(), width);
            assert_eq!(unpack(&packed, width, words.len()).unwrap(), words);
        }
        // little-endian: first word in the lowest bits
        assert_eq!(pack([1u8, 2].into_iter(), 2), vec![0b1001]);
        assert!(unpack(&[0, 0], 2, 3).is_none());
    }

    #[test]
    fn builtin_tables_totals() {
        assert_eq!(builtin_arch("resnet18").unwrap().total_weights(), 11_678_912);
        assert_eq!(builtin_arch("resnet20").unwrap().total_weights(), 268_336);
        assert!(builtin_arch("vgg").is_none());
    }

    #[test]
    fn arch_errors_carry_offsets() {
        let p = Path::new("t.csv");
        match parse_arch("# radar-arch v1 t\nlayer,weights\nfc,abc\n", p) {
            Err(Error::Malformed { offset, .. }) => assert_eq!(offset, 32),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_arch("layer,weights\n", p), Err(Error::Malformed { offset: 0, .. })));
    }
}
