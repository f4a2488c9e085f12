use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::Matrix;
use crate::{Error, Result};

pub const DATASET_MAGIC: &str = "# radar-dataset v1";

/// Samples with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Split {
        let cols = self.inputs.cols;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(self.inputs.row(i));
        }
        Split {
            inputs: Matrix {
                rows: idx.len(),
                cols,
                data,
            },
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `n` distinct rows drawn uniformly (all rows if `n >= len`).
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Split {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n.min(self.len()));
        self.select(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(train: Split, test: Split, num_classes: usize) -> Result<Self> {
        if train.inputs.cols != test.inputs.cols {
            return Err(Error::Shape("train and test feature widths differ".into()));
        }
        for split in [&train, &test] {
            if split.inputs.rows != split.labels.len() {
                return Err(Error::Shape("row count differs from label count".into()));
            }
            if let Some(&y) = split.labels.iter().find(|&&y| y >= num_classes) {
                return Err(Error::Shape(format!("label {y} outside {num_classes} classes")));
            }
        }
        Ok(Self {
            train,
            test,
            num_classes,
        })
    }

    pub fn features(&self) -> usize {
        self.train.inputs.cols
    }

    /// Writes both splits to one CSV: a magic line recording the train row
    /// count, then one sample per row with the label in the last column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(
            out,
            "{DATASET_MAGIC} train={} classes={}",
            self.train.len(),
            self.num_classes
        )
        .map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for split in [&self.train, &self.test] {
            for r in 0..split.len() {
                let mut rec: Vec<String> = split.inputs.row(r).iter().map(|v| v.to_string()).collect();
                rec.push(split.labels[r].to_string());
                w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let malformed = |offset: u64, msg: String| Error::Malformed {
            path: path.to_path_buf(),
            offset,
            msg,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
        let header = first.trim_end();
        let rest = header
            .strip_prefix(DATASET_MAGIC)
            .ok_or_else(|| malformed(0, format!("expected '{DATASET_MAGIC}' header")))?;
        let mut n_train = None;
        let mut classes = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| malformed(0, format!("bad header field '{kv}'")))?;
            let v: usize = v
                .parse()
                .map_err(|_| malformed(0, format!("bad header value '{kv}'")))?;
            match k {
                "train" => n_train = Some(v),
                "classes" => classes = Some(v),
                _ => return Err(malformed(0, format!("unknown header field '{k}'"))),
            }
        }
        let n_train = n_train.ok_or_else(|| malformed(0, "header lacks train=".into()))?;
        let classes = classes.ok_or_else(|| malformed(0, "header lacks classes=".into()))?;
        let base = first.len() as u64;

        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut cols = None;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let off = e.position().map_or(0, |p| p.byte());
                malformed(base + off, e.to_string())
            })?;
            let off = base + rec.position().map_or(0, |p| p.byte());
            if rec.len() < 2 {
                return Err(malformed(off, "row needs features and a label".into()));
            }
            let width = rec.len() - 1;
            if *cols.get_or_insert(width) != width {
                return Err(malformed(off, format!("row has {width} features, expected {}", cols.unwrap())));
            }
            for field in rec.iter().take(width) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| malformed(off, format!("bad feature '{field}'")))?;
                data.push(v);
            }
            let y: usize = rec[width]
                .trim()
                .parse()
                .map_err(|_| malformed(off, format!("bad label '{}'", &rec[width])))?;
            if y >= classes {
                return Err(malformed(off, format!("label {y} outside {classes} classes")));
            }
            labels.push(y);
        }
        let cols = cols.ok_or_else(|| malformed(base, "no samples".into()))?;
        if n_train > labels.len() {
            return Err(malformed(0, format!("train={n_train} exceeds {} rows", labels.len())));
        }
        let all = Split {
            inputs: Matrix::new(labels.len(), cols, data)?,
            labels,
        };
        let train_idx: Vec<usize> = (0..n_train).collect();
        let test_idx: Vec<usize> = (n_train..all.len()).collect();
        Dataset::new(all.select(&train_idx), all.select(&test_idx), classes)
    }
}

/// Isotropic Gaussian blobs around random class centres.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClusters {
    pub classes: usize,
    pub features: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the class centres.
    pub separation: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    /// Constant added to every feature.
    pub shift: f64,
    /// Width of the circular moving average applied to each class centre,
    /// which makes neighbouring features correlated like adjacent pixels.
    /// 1 leaves centres independent per feature.
    pub smoothing: usize,
}

impl Default for GaussianClusters {
    fn default() -> Self {
        Self {
            classes: 10,
            features: 64,
            train_per_class: 200,
            test_per_class: 100,
            separation: 1.0,
            noise: 1.0,
            shift: 0.0,
            smoothing: 1,
        }
    }
}

impl GaussianClusters {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.smoothing == 0 || self.smoothing > self.features {
            return Err(Error::Config(format!(
                "smoothing window {} must be in 1..={}",
                self.smoothing, self.features
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.smoothing;
        // averaging w unit normals shrinks the spread by sqrt(w); undo that
        let gain = self.separation * (w as f64).sqrt() / w as f64;
        let centres: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| {
                let raw: Vec<f64> = (0..self.features).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (0..self.features)
                    .map(|f| gain * (0..w).map(|k| raw[(f + k) % self.features]).sum::<f64>())
                    .collect()
            })
            .collect();
        let draw = |per_class: usize, rng: &mut ChaCha8Rng| {
            let mut order: Vec<usize> = (0..self.classes * per_class).map(|i| i % self.classes).collect();
            order.shuffle(rng);
            let mut data = Vec::with_capacity(order.len() * self.features);
            for &c in &order {
                for f in 0..self.features {
                    data.push(self.shift + centres[c][f] + self.noise * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Split {
                inputs: Matrix {
                    rows: order.len(),
                    cols: self.features,
                    data,
                },
                labels: order,
            }
        };
        let train = draw(self.train_per_class, &mut rng);
        let test = draw(self.test_per_class, &mut rng);
        Dataset::new(train, test, self.classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_splits_are_balanced_and_labelled() {
        let spec = GaussianClusters {
            classes: 4,
            features: 8,
            train_per_class: 10,
            test_per_class: 5,
            ..Default::default()
        };
        let d = spec.generate(1).unwrap();
        assert_eq!(d.train.len(), 40);
        assert_eq!(d.test.len(), 20);
        for c in 0..4 {
            assert_eq!(d.train.labels.iter().filter(|&&y| y == c).count(), 10);
        }
        assert_eq!(d, spec.generate(1).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let d = GaussianClusters {
            classes: 3,
            features: 4,
            train_per_class: 3,
            test_per_class: 2,
            ..Default::default()
        }
        .generate(7)
        .unwrap();
        let dir = std::env::temp_dir().join(format!("radar-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        d.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn malformed_csv_reports_offset() {
        let dir = std::env::temp_dir().join(format!("radar-data-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, format!("{DATASET_MAGIC} train=1 classes=2\n1.0,2.0,0\n1.0,x,1\n")).unwrap();
        match Dataset::read_csv(&path) {
            Err(Error::Malformed { offset, .. }) => assert_eq!(offset, 47),
            other => panic!("expected malformed error, got {other:?}"),
        }
        std::fs::write(&path, "1.0,2.0,0\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Malformed { offset: 0, .. })));
    }
}
