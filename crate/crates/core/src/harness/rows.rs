use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::SignatureWidth;
use crate::{Error, Result};

/// First line of every results CSV.
pub const RESULTS_HEADER: &str = "# radar-results v1";

/// Sweep and attack parameters shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub group_sizes: Vec<usize>,
    pub interleave: Vec<bool>,
    pub width: SignatureWidth,
    pub offset: usize,
    /// Flip budgets; the largest is attacked and smaller ones are its
    /// prefixes.
    pub n_bf: Vec<usize>,
    pub rounds: usize,
    pub batch_size: usize,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            group_sizes: vec![4, 8, 16, 32, 64],
            interleave: vec![true, false],
            width: SignatureWidth::Two,
            offset: 3,
            n_bf: vec![10],
            rounds: 100,
            batch_size: 128,
            master_seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(Error::Config("group sizes must be non-empty and positive".into()));
        }
        if self.interleave.is_empty() || self.n_bf.is_empty() {
            return Err(Error::Config("interleave and flip-budget lists must be non-empty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("attack batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn max_flips(&self) -> usize {
        self.n_bf.iter().copied().max().unwrap_or(0)
    }
}

/// One metric value. `round` is empty for aggregates; `samples` is the
/// number of rounds behind the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub config: String,
    pub metric: String,
    pub value: f64,
    pub round: Option<u64>,
    pub samples: u64,
}

impl ResultRow {
    pub fn new(experiment: &str, config: impl Into<String>, metric: &str, value: f64, samples: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config: config.into(),
            metric: metric.into(),
            value,
            round: None,
            samples,
        }
    }

    pub fn per_round(experiment: &str, config: impl Into<String>, metric: &str, value: f64, round: u64) -> Self {
        Self {
            round: Some(round),
            ..Self::new(experiment, config, metric, value, 1)
        }
    }
}

/// Results CSV text: the version line, a header row and one line per row.
pub fn format_rows(rows: &[ResultRow]) -> Result<String> {
    if let Some(r) = rows.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::Config(format!("non-finite value for {} / {}", r.config, r.metric)));
    }
    let mut out = Vec::new();
    writeln!(out, "{RESULTS_HEADER}").expect("writing to memory");
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush().expect("writing to memory");
    }
    Ok(String::from_utf8(out).expect("CSV output is UTF-8"))
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    fs::write(path, format_rows(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |offset: u64, msg: String| Error::Malformed {
        path: path.to_path_buf(),
        offset,
        msg,
    };
    let body = text
        .strip_prefix(RESULTS_HEADER)
        .and_then(|b| b.strip_prefix('\n'))
        .ok_or_else(|| malformed(0, format!("expected `{RESULTS_HEADER}` header")))?;
    let base = (text.len() - body.len()) as u64;
    csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| malformed(base + e.position().map_or(0, |p| p.byte()), e.to_string())))
        .collect()
}
