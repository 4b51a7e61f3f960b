//! Dataset files: dense CSV, sparse `index:value` text, synthetic blobs.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::Dataset;
use crate::sampling::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum DataFormat {
    /// One sample per row, label in a designated column.
    #[default]
    Csv,
    /// Label token followed by 1-based `index:value` pairs.
    Sparse,
}

impl FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "sparse" => Ok(Self::Sparse),
            _ => Err(Error::param(format!("unknown dataset format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Scaling {
    #[default]
    None,
    /// Per-column min-max to `[0, 1]`, ranges taken from the training set.
    Minmax,
}

impl FromStr for Scaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "minmax" => Ok(Self::Minmax),
            _ => Err(Error::param(format!("unknown scaling `{s}`"))),
        }
    }
}

/// Raw labels are binarised: `≤ 0` is class 0, `> 0` class 1.
pub fn binary_label(raw: f64) -> f64 {
    if raw > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Label column of CSV files.
    pub label_col: usize,
    /// Feature dimension of sparse files; inferred from the largest index
    /// when absent.
    pub dim: Option<usize>,
}

pub fn load_dataset(path: &Path, format: DataFormat, opts: LoadOptions) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    match format {
        DataFormat::Csv => parse_csv(reader, opts.label_col),
        DataFormat::Sparse => parse_sparse(reader, opts.dim),
    }
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("`{}` is not a number", field.trim()),
    })
}

/// Dense CSV. A first line that does not parse as numbers is taken as a
/// header and skipped.
pub fn parse_csv<R: std::io::Read>(reader: R, label_col: usize) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if row == 0 && record.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        if label_col >= record.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "label column {label_col} missing from a row of {} fields",
                    record.len()
                ),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Format(format!(
                    "line {line} has {} fields, expected {w}",
                    record.len()
                )));
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v = parse_number(field, line)?;
            if j == label_col {
                labels.push(binary_label(v));
            } else {
                features.push(v);
            }
        }
    }
    let d = width.map_or(0, |w| w - 1);
    Dataset::new(features, labels, d)
}

pub fn parse_sparse<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        labels.push(binary_label(parse_number(label, line)?));
        let mut row = Vec::new();
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| Error::Parse {
                line,
                message: format!("`{token}` is not an index:value pair"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line,
                    message: "indices are 1-based".into(),
                });
            }
            if let Some(d) = dim.filter(|&d| idx > d) {
                return Err(Error::Format(format!(
                    "line {line}: index {idx} exceeds dimension {d}"
                )));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, parse_number(val, line)?));
        }
        rows.push(row);
    }
    let d = dim.unwrap_or(max_index);
    let mut features = vec![0.0; rows.len() * d];
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[r * d + j] = v;
        }
    }
    Dataset::new(features, labels, d)
}

/// Writes `label,x1,...,xd` with a header row.
pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = vec![data.label(i).to_string()];
        row.extend(data.features(i).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Two Gaussian blobs with identity covariance centred at `±separation·u`
/// for a random unit vector `u`. Each sample picks its blob by a fair coin;
/// the `+` blob is class 1.
pub fn synthesize_dataset(seed: u64, n: usize, d: usize, separation: f64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::param("synthetic data needs N, d ≥ 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::param("separation must be non-negative"));
    }
    let mut rng = rng_from_seed(seed);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = crate::linalg::norm(&u);
    if len > 0.0 {
        u.iter_mut().for_each(|v| *v /= len);
    } else {
        u[0] = 1.0;
    }
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let positive = rng.random_bool(0.5);
        let sign = if positive { 1.0 } else { -1.0 };
        labels.push(if positive { 1.0 } else { 0.0 });
        for &uj in &u {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(sign * separation * uj + noise);
        }
    }
    Dataset::new(features, labels, d)
}

/// Training and testing sets drawn from the same blobs: the first `n_train`
/// and last `n_test` samples of one synthetic draw.
pub fn synthesize_split(
    seed: u64,
    n_train: usize,
    n_test: usize,
    d: usize,
    separation: f64,
) -> Result<(Dataset, Dataset)> {
    let all = synthesize_dataset(seed, n_train + n_test, d, separation)?;
    Ok((all.slice(0..n_train), all.slice(n_train..n_train + n_test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LabelRule {
    /// Odd digits become 1, even digits 0.
    OddEven,
    /// Positive values become 1, the rest 0.
    Sign,
}

impl LabelRule {
    pub fn apply(self, raw: f64) -> Option<f64> {
        match self {
            LabelRule::OddEven => {
                if raw.fract() != 0.0 || !raw.is_finite() {
                    return None;
                }
                Some(if raw.rem_euclid(2.0) == 1.0 { 1.0 } else { 0.0 })
            }
            LabelRule::Sign => Some(binary_label(raw)),
        }
    }
}

/// Rewrites the label column of a CSV file under `rule`, leaving the other
/// columns untouched. A header line is copied through.
pub fn convert_labels<R: std::io::Read, W: Write>(
    input: R,
    output: W,
    label_col: usize,
    rule: LabelRule,
) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut writer = csv::WriterBuilder::new().from_writer(output);
    let mut count = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        let field = record.get(label_col).ok_or_else(|| Error::Parse {
            line,
            message: format!("label column {label_col} missing"),
        })?;
        let Ok(raw) = field.trim().parse::<f64>() else {
            if row == 0 {
                writer.write_record(&record)?;
                continue;
            }
            return Err(Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            });
        };
        let label = rule.apply(raw).ok_or_else(|| Error::Parse {
            line,
            message: format!("label {raw} is not an integer digit"),
        })?;
        let out: Vec<String> = record
            .iter()
            .enumerate()
            .map(|(j, f)| {
                if j == label_col {
                    label.to_string()
                } else {
                    f.to_string()
                }
            })
            .collect();
        writer.write_record(&out)?;
        count += 1;
    }
    writer.flush()?;
    Ok(count)
}
