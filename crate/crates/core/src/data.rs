//! Dataset loaders, stratified splits, standardization and PCA.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Labelled feature vectors of one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Samples {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Applies `perm` to the labels: class `k` becomes `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&y| perm[y]).collect(),
            classes: self.classes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Requested rows per class; `test = None` assigns every remaining row to
/// the test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub train: usize,
    pub validation: usize,
    pub test: Option<usize>,
}

impl ClassCounts {
    pub fn train_rest(train: usize) -> Self {
        Self {
            train,
            validation: 0,
            test: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Split of every row; rows outside every requested count are `None`.
    pub split: Vec<Option<Split>>,
    pub seed: u64,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split.iter().filter(|s| **s == Some(split)).count()
    }

    pub fn samples(&self, split: Split) -> Samples {
        let mut out = Samples {
            classes: self.num_classes(),
            ..Default::default()
        };
        for ((x, &y), s) in self.features.iter().zip(&self.labels).zip(&self.split) {
            if *s == Some(split) {
                out.features.push(x.clone());
                out.labels.push(y);
            }
        }
        out
    }

    /// Replaces every feature vector by `f(x)`.
    pub fn map_features<F: FnMut(&[f64]) -> Vec<f64>>(&self, mut f: F) -> Self {
        Self {
            features: self.features.iter().map(|x| f(x)).collect(),
            ..self.clone()
        }
    }

    /// Standardizes every split with statistics of the training split.
    pub fn standardized(&self) -> Result<Self> {
        let train = self.samples(Split::Train);
        let st = Standardizer::fit(&train.features)?;
        Ok(self.map_features(|x| st.apply(x)))
    }

    /// Projects every split onto the leading principal components of the
    /// training split.
    pub fn pca(&self, target_dim: usize) -> Result<(Self, Pca)> {
        let train = self.samples(Split::Train);
        let pca = Pca::fit(&train.features, target_dim)?;
        Ok((self.map_features(|x| pca.transform(x)), pca))
    }
}

/// Assigns rows to splits, per class, after a seeded shuffle.
pub fn stratified_split(
    labels: &[usize],
    classes: usize,
    counts: &[ClassCounts],
    seed: u64,
) -> Result<Vec<Option<Split>>> {
    if counts.len() != classes {
        return Err(Error::Data(format!(
            "{} per-class counts for {classes} classes",
            counts.len()
        )));
    }
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!("label {y} outside [0, {classes})")));
        }
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![None; labels.len()];
    for (k, rows) in by_class.iter_mut().enumerate() {
        let c = counts[k];
        let fixed = c.train + c.validation + c.test.unwrap_or(0);
        if fixed > rows.len() {
            return Err(Error::Data(format!(
                "class {k} has {} rows, {fixed} requested",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let test_end = match c.test {
            Some(t) => c.train + c.validation + t,
            None => rows.len(),
        };
        for (pos, &row) in rows.iter().enumerate() {
            split[row] = if pos < c.train {
                Some(Split::Train)
            } else if pos < c.train + c.validation {
                Some(Split::Validation)
            } else if pos < test_end {
                Some(Split::Test)
            } else {
                None
            };
        }
    }
    Ok(split)
}

/// Largest-remainder allocation of `total` rows proportionally to `sizes`.
pub fn proportional_counts(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total as f64 / n as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Numeric CSV with the label in the last column. A first line that does not
/// parse as numbers is treated as a header.
pub fn read_labelled_csv(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let numbers: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let numbers = match numbers {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => {
                let bad = fields
                    .iter()
                    .position(|f| f.parse::<f64>().is_err())
                    .unwrap_or(0);
                let msg = if fields[bad].is_empty() {
                    format!("missing value in column {}", bad + 1)
                } else {
                    format!("'{}' in column {} is not a number", fields[bad], bad + 1)
                };
                return Err(Error::parse(path, line_no, msg));
            }
        };
        if numbers.len() < 2 {
            return Err(Error::parse(
                path,
                line_no,
                "need at least one feature and a label",
            ));
        }
        match width {
            None => width = Some(numbers.len()),
            Some(w) if w != numbers.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {w} columns, found {}", numbers.len()),
                ))
            }
            _ => {}
        }
        let label = *numbers.last().unwrap();
        if label < 0.0 || label.fract() != 0.0 {
            return Err(Error::parse(
                path,
                line_no,
                format!("label {label} is not a class index"),
            ));
        }
        labels.push(label as usize);
        features.push(numbers[..numbers.len() - 1].to_vec());
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{} contains no rows", path.display())));
    }
    Ok((features, labels))
}

fn expect_columns(path: &Path, features: &[Vec<f64>], expected: usize) -> Result<()> {
    let got = features[0].len();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected {expected} feature columns, found {got}"),
        ));
    }
    Ok(())
}

/// Iris: 4 features, 3 classes, 10 training rows per class, the rest test.
pub fn load_iris(path: &Path, seed: u64) -> Result<Dataset> {
    let (features, labels) = read_labelled_csv(path)?;
    expect_columns(path, &features, 4)?;
    let classes = 3;
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("iris label {y} outside [0, 3)")));
    }
    let split = stratified_split(&labels, classes, &[ClassCounts::train_rest(10); 3], seed)?;
    Ok(Dataset {
        features,
        labels,
        class_names: ["setosa", "versicolor", "virginica"]
            .map(String::from)
            .to_vec(),
        split,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreastCancerOptions {
    /// Leading feature columns kept (the ten mean-value measurements by
    /// default).
    pub feature_columns: usize,
    pub train_size: usize,
}

impl Default for BreastCancerOptions {
    fn default() -> Self {
        Self {
            feature_columns: 10,
            train_size: 113,
        }
    }
}

/// Breast cancer (Wisconsin diagnostic): binary labels, stratified training
/// split of `train_size` rows, everything else test.
pub fn load_breast_cancer(path: &Path, opts: &BreastCancerOptions, seed: u64) -> Result<Dataset> {
    let (features, labels) = read_labelled_csv(path)?;
    let available = features[0].len();
    if opts.feature_columns == 0 || opts.feature_columns > available {
        return Err(Error::Data(format!(
            "requested {} feature columns, file has {available}",
            opts.feature_columns
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= 2) {
        return Err(Error::Data(format!(
            "breast cancer label {y} outside [0, 2)"
        )));
    }
    let features = features
        .into_iter()
        .map(|mut r| {
            r.truncate(opts.feature_columns);
            r
        })
        .collect();
    let sizes = [0, 1].map(|k| labels.iter().filter(|&&y| y == k).count());
    let train = proportional_counts(&sizes, opts.train_size);
    let counts: Vec<ClassCounts> = train.iter().map(|&t| ClassCounts::train_rest(t)).collect();
    let split = stratified_split(&labels, 2, &counts, seed)?;
    Ok(Dataset {
        features,
        labels,
        class_names: ["malignant", "benign"].map(String::from).to_vec(),
        split,
        seed,
    })
}

/// Source of handwritten-digit images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DigitsSource {
    /// Directory holding the four standard IDX files.
    MnistIdx { dir: PathBuf },
    /// CSV with 64 pixel columns (values 0..=16) and a label.
    Digits8x8 { path: PathBuf },
}

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw IDX image file: `(rows, cols, pixels per image)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |_| Error::Data(format!("{}: truncated IDX header", path.display()));
    let mut cur = Cursor::new(bytes.as_slice());
    let magic = cur.read_u32::<BigEndian>().map_err(truncated)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = cur.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let size = rows * cols;
    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let mut img = vec![0u8; size];
        cur.read_exact(&mut img).map_err(|_| {
            Error::Data(format!("{}: truncated at image {i} of {n}", path.display()))
        })?;
        images.push(img);
    }
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor::new(bytes.as_slice());
    let truncated = |_| Error::Data(format!("{}: truncated IDX header", path.display()));
    let magic = cur.read_u32::<BigEndian>().map_err(truncated)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Data(format!(
            "{}: bad magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let n = cur.read_u32::<BigEndian>().map_err(truncated)? as usize;
    let mut labels = vec![0u8; n];
    cur.read_exact(&mut labels)
        .map_err(|_| Error::Data(format!("{}: truncated label data", path.display())))?;
    Ok(labels)
}

/// Per-digit row counts. For MNIST, `train + validation` rows come from the
/// training files and `test` rows from the test files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitCounts {
    pub train: usize,
    pub validation: usize,
    /// `None` takes every remaining row (8×8 digits only).
    pub test: Option<usize>,
}

impl DigitCounts {
    /// 300 training images per digit split 240/60, 600 test images.
    pub fn mnist_default() -> Self {
        Self {
            train: 240,
            validation: 60,
            test: Some(600),
        }
    }
}

/// Handwritten digits restricted to `digits`, relabelled `0..K` in the given
/// order. Pixels are scaled to `[0, 1]`.
pub fn load_digits(
    source: &DigitsSource,
    digits: &[u8],
    counts: DigitCounts,
    seed: u64,
) -> Result<Dataset> {
    if digits.len() < 2 {
        return Err(Error::Data(format!(
            "classification needs at least 2 digits, got {}",
            digits.len()
        )));
    }
    let mut seen = [false; 10];
    for &d in digits {
        if d > 9 || std::mem::replace(&mut seen[d as usize], true) {
            return Err(Error::Data(format!("invalid or repeated digit {d}")));
        }
    }
    let class_of = |label: usize| digits.iter().position(|&d| d as usize == label);
    let class_names = digits.iter().map(|d| d.to_string()).collect();

    match source {
        DigitsSource::Digits8x8 { path } => {
            let (raw, raw_labels) = read_labelled_csv(path)?;
            expect_columns(path, &raw, 64)?;
            let mut features = Vec::new();
            let mut labels = Vec::new();
            for (x, y) in raw.into_iter().zip(raw_labels) {
                if let Some(k) = class_of(y) {
                    features.push(x.into_iter().map(|p| p / 16.0).collect());
                    labels.push(k);
                }
            }
            let per = ClassCounts {
                train: counts.train,
                validation: counts.validation,
                test: counts.test,
            };
            let split = stratified_split(&labels, digits.len(), &vec![per; digits.len()], seed)?;
            Ok(Dataset {
                features,
                labels,
                class_names,
                split,
                seed,
            })
        }
        DigitsSource::MnistIdx { dir } => {
            let load = |img: &str, lab: &str| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
                let (_, _, images) = read_idx_images(&dir.join(img))?;
                let labels = read_idx_labels(&dir.join(lab))?;
                if images.len() != labels.len() {
                    return Err(Error::Data(format!(
                        "{img} has {} images but {lab} has {} labels",
                        images.len(),
                        labels.len()
                    )));
                }
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for (im, l) in images.into_iter().zip(labels) {
                    if let Some(k) = class_of(l as usize) {
                        xs.push(im.into_iter().map(|p| p as f64 / 255.0).collect());
                        ys.push(k);
                    }
                }
                Ok((xs, ys))
            };
            let k = digits.len();
            let (train_x, train_y) = load(MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS)?;
            let (test_x, test_y) = load(MNIST_TEST_IMAGES, MNIST_TEST_LABELS)?;
            let train_counts = ClassCounts {
                train: counts.train,
                validation: counts.validation,
                test: Some(0),
            };
            let test_counts = ClassCounts {
                train: 0,
                validation: 0,
                test: counts.test,
            };
            let mut split = stratified_split(&train_y, k, &vec![train_counts; k], seed)?;
            let test_split = stratified_split(&test_y, k, &vec![test_counts; k], seed ^ 0x5eed)?;
            split.extend(test_split);
            let mut features = train_x;
            features.extend(test_x);
            let mut labels = train_y;
            labels.extend(test_y);
            Ok(Dataset {
                features,
                labels,
                class_names,
                split,
                seed,
            })
        }
    }
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `rows`; constant columns keep scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("cannot standardize an empty split".into()));
        }
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Principal components of a training matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `target_dim × D_x`, orthonormal rows ordered by decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    /// Sum of all covariance eigenvalues.
    pub total_variance: f64,
}

impl Pca {
    /// Eigendecomposition of the sample covariance of `rows`.
    pub fn fit(rows: &[Vec<f64>], target_dim: usize) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if target_dim == 0 || target_dim > n.min(dim) {
            return Err(Error::InvalidArgument(format!(
                "PCA target dimension {target_dim} must lie in [1, min(N = {n}, D = {dim})]"
            )));
        }
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
        let denom = (n.max(2) - 1) as f64;
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let components = DMatrix::from_fn(target_dim, dim, |r, c| eig.eigenvectors[(c, order[r])]);
        let explained_variance = order[..target_dim]
            .iter()
            .map(|&i| eig.eigenvalues[i].max(0.0))
            .collect();
        Ok(Self {
            mean,
            components,
            explained_variance,
            total_variance,
        })
    }

    pub fn target_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        (0..self.target_dim())
            .map(|r| {
                x.iter()
                    .zip(&self.mean)
                    .enumerate()
                    .map(|(c, (v, m))| self.components[(r, c)] * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        (0..self.mean.len())
            .map(|c| {
                self.mean[c]
                    + z.iter()
                        .enumerate()
                        .map(|(r, v)| self.components[(r, c)] * v)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }
}
