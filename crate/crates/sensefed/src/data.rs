//! Sample storage, dataset pool file formats, and synthetic generators.
//!
//! Pool files come in two interchangeable formats:
//!
//! * CSV: first line `rows,cols,label_col`, then `rows` lines of `cols`
//!   comma-separated decimal values.
//! * Binary: magic `SFPOOL1\0`, three little-endian u32 (rows, cols,
//!   label_col), then `rows * cols` little-endian f64 values.
//!
//! `label_col` selects the column holding labels; the remaining columns are
//! features. Both loaders treat input as untrusted: they validate shapes,
//! reject non-finite values, and cap sizes instead of allocating blindly.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const POOL_MAGIC: &[u8; 8] = b"SFPOOL1\0";
const MAX_ROWS: usize = 2_000_000;
const MAX_COLS: usize = 4_096;
const MAX_CELLS: usize = 50_000_000;

/// A set of samples: feature matrix (one row per sample) plus labels.
///
/// Labels are stored as f64 so the same type carries class ids and
/// regression targets; classification code validates integrality.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    features: Array2<f64>,
    labels: Vec<f64>,
}

impl SampleBatch {
    pub fn new(features: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "feature rows ({}) and label count ({}) differ",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn empty(feature_dim: usize) -> Self {
        Self {
            features: Array2::zeros((0, feature_dim)),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Append all rows of `other`; feature dims must match.
    pub fn append(&mut self, other: &SampleBatch) -> Result<()> {
        if other.feature_dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                context: "SampleBatch::append",
                expected: self.feature_dim(),
                got: other.feature_dim(),
            });
        }
        self.features
            .append(Axis(0), other.features.view())
            .map_err(|e| Error::Data(format!("append failed: {e}")))?;
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Gather the given rows into a new batch (order preserved).
    pub fn select(&self, indices: &[usize]) -> Result<SampleBatch> {
        let mut features = Array2::zeros((indices.len(), self.feature_dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (out_row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::Data(format!(
                    "sample index {i} out of range ({} samples)",
                    self.len()
                )));
            }
            features.row_mut(out_row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        Ok(SampleBatch { features, labels })
    }

    /// Interpret labels as class ids in `[0, classes)`.
    pub fn class_labels(&self, classes: usize) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|&y| {
                if y.fract() == 0.0 && y >= 0.0 && (y as usize) < classes {
                    Ok(y as usize)
                } else {
                    Err(Error::Data(format!(
                        "label {y} is not a class id in [0, {classes})"
                    )))
                }
            })
            .collect()
    }

    /// Per-class sample counts, for partition diagnostics.
    pub fn class_histogram(&self, classes: usize) -> Result<Vec<usize>> {
        let mut hist = vec![0usize; classes];
        for c in self.class_labels(classes)? {
            hist[c] += 1;
        }
        Ok(hist)
    }
}

fn check_dims(rows: usize, cols: usize, label_col: usize) -> Result<()> {
    if rows > MAX_ROWS || cols > MAX_COLS || rows.saturating_mul(cols) > MAX_CELLS {
        return Err(Error::Parse(format!(
            "pool too large: {rows} x {cols} exceeds limits"
        )));
    }
    if cols < 2 {
        return Err(Error::Parse(
            "pool needs at least one feature column and one label column".into(),
        ));
    }
    if label_col >= cols {
        return Err(Error::Parse(format!(
            "label column {label_col} out of range for {cols} columns"
        )));
    }
    Ok(())
}

fn split_label_column(
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    label_col: usize,
) -> Result<SampleBatch> {
    let mut features = Array2::zeros((rows, cols - 1));
    let mut labels = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &values[r * cols..(r + 1) * cols];
        let mut k = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == label_col {
                labels.push(v);
            } else {
                features[(r, k)] = v;
                k += 1;
            }
        }
    }
    SampleBatch::new(features, labels)
}

/// Parse the CSV pool format from a string.
pub fn parse_pool_csv(text: &str) -> Result<SampleBatch> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty pool file".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!(
            "header must be `rows,cols,label_col`, got `{header}`"
        )));
    }
    let parse_dim = |s: &str, name: &str| -> Result<usize> {
        s.parse::<u32>()
            .map(|v| v as usize)
            .map_err(|_| Error::Parse(format!("bad {name} `{s}` in header")))
    };
    let rows = parse_dim(parts[0], "rows")?;
    let cols = parse_dim(parts[1], "cols")?;
    let label_col = parse_dim(parts[2], "label_col")?;
    check_dims(rows, cols, label_col)?;

    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {rows} data rows, found {r}")))?;
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad value `{field}` in row {r}")))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("non-finite value in row {r}")));
            }
            values.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::Parse(format!(
                "row {r} has {count} values, expected {cols}"
            )));
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::Parse("trailing content after data rows".into()));
    }
    split_label_column(values, rows, cols, label_col)
}

/// Parse the binary pool format from bytes.
pub fn parse_pool_bin(bytes: &[u8]) -> Result<SampleBatch> {
    if bytes.len() < POOL_MAGIC.len() + 12 {
        return Err(Error::Parse("binary pool truncated".into()));
    }
    if &bytes[..POOL_MAGIC.len()] != POOL_MAGIC {
        return Err(Error::Parse("bad magic in binary pool".into()));
    }
    let mut offset = POOL_MAGIC.len();
    let mut read_u32 = || {
        let v = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        offset += 4;
        v as usize
    };
    let rows = read_u32();
    let cols = read_u32();
    let label_col = read_u32();
    check_dims(rows, cols, label_col)?;

    let expected = POOL_MAGIC.len() + 12 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "binary pool length {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for chunk in bytes[POOL_MAGIC.len() + 12..].chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse("non-finite value in binary pool".into()));
        }
        values.push(v);
    }
    split_label_column(values, rows, cols, label_col)
}

/// Load a pool file, dispatching on the `.bin` extension (CSV otherwise).
pub fn load_pool(path: &Path) -> Result<SampleBatch> {
    if path.extension().is_some_and(|e| e == "bin") {
        parse_pool_bin(&std::fs::read(path)?)
    } else {
        parse_pool_csv(&std::fs::read_to_string(path)?)
    }
}

fn interleave_label(batch: &SampleBatch) -> (usize, usize, Vec<f64>) {
    // Writers always place the label in the last column.
    let rows = batch.len();
    let cols = batch.feature_dim() + 1;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        values.extend(batch.feature_row(r).iter());
        values.push(batch.labels[r]);
    }
    (rows, cols, values)
}

pub fn write_pool_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    let (rows, cols, values) = interleave_label(batch);
    let mut out = String::new();
    out.push_str(&format!("{rows},{cols},{}\n", cols - 1));
    for r in 0..rows {
        let row: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pool_bin(path: &Path, batch: &SampleBatch) -> Result<()> {
    let (rows, cols, values) = interleave_label(batch);
    let mut bytes = Vec::with_capacity(POOL_MAGIC.len() + 12 + values.len() * 8);
    bytes.write_all(POOL_MAGIC)?;
    bytes.write_all(&(rows as u32).to_le_bytes())?;
    bytes.write_all(&(cols as u32).to_le_bytes())?;
    bytes.write_all(&((cols - 1) as u32).to_le_bytes())?;
    for v in values {
        bytes.write_all(&v.to_le_bytes())?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Built-in synthetic pool generators.
#[derive(Debug, Clone)]
pub enum Generator {
    /// Gaussian class clusters with means drawn at `class_sep` scale.
    Blobs {
        classes: usize,
        class_sep: f64,
        noise: f64,
    },
    /// Features from a standard normal; labels sampled from the softmax of a
    /// random teacher model, so a logistic fit is realizable.
    LogisticTeacher { classes: usize },
}

pub fn generate_pool(
    gen: &Generator,
    samples: usize,
    feature_dim: usize,
    rng: &mut ChaCha12Rng,
) -> Result<SampleBatch> {
    if feature_dim == 0 {
        return Err(Error::Config("feature_dim must be at least 1".into()));
    }
    match gen {
        Generator::Blobs {
            classes,
            class_sep,
            noise,
        } => {
            if *classes == 0 {
                return Err(Error::Config("blobs generator needs classes >= 1".into()));
            }
            let means: Vec<Vec<f64>> = (0..*classes)
                .map(|_| {
                    (0..feature_dim)
                        .map(|_| class_sep * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let mut features = Array2::zeros((samples, feature_dim));
            let mut labels = Vec::with_capacity(samples);
            for i in 0..samples {
                let class = i % *classes;
                for (j, m) in means[class].iter().enumerate() {
                    features[(i, j)] = m + noise * rng.sample::<f64, _>(StandardNormal);
                }
                labels.push(class as f64);
            }
            SampleBatch::new(features, labels)
        }
        Generator::LogisticTeacher { classes } => {
            if *classes < 2 {
                return Err(Error::Config("teacher generator needs classes >= 2".into()));
            }
            let teacher: Vec<Vec<f64>> = (0..*classes)
                .map(|_| {
                    (0..=feature_dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let mut features = Array2::zeros((samples, feature_dim));
            let mut labels = Vec::with_capacity(samples);
            for i in 0..samples {
                let x: Vec<f64> = (0..feature_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for (j, v) in x.iter().enumerate() {
                    features[(i, j)] = *v;
                }
                let logits: Vec<f64> = teacher
                    .iter()
                    .map(|w| {
                        w[..feature_dim]
                            .iter()
                            .zip(&x)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            + w[feature_dim]
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut draw = rng.random_range(0.0..total);
                let mut label = *classes - 1;
                for (k, w) in weights.iter().enumerate() {
                    if draw < *w {
                        label = k;
                        break;
                    }
                    draw -= w;
                }
                labels.push(label as f64);
            }
            SampleBatch::new(features, labels)
        }
    }
}

/// Declarative spec for `gen-data`: which generator, how many samples,
/// where to write.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: String,
    pub samples: usize,
    pub feature_dim: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_class_sep")]
    pub class_sep: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub seed: u64,
    pub output: std::path::PathBuf,
}

fn default_classes() -> usize {
    2
}
fn default_class_sep() -> f64 {
    2.0
}
fn default_noise() -> f64 {
    1.0
}

impl DatasetSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("dataset spec: {e}")))
    }

    pub fn generator(&self) -> Result<Generator> {
        match self.generator.as_str() {
            "blobs" => Ok(Generator::Blobs {
                classes: self.classes,
                class_sep: self.class_sep,
                noise: self.noise,
            }),
            "logistic_teacher" => Ok(Generator::LogisticTeacher {
                classes: self.classes,
            }),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}
