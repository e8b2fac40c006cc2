//! Config-driven experiments and their result documents.
//!
//! A run reads a TOML [`ExperimentConfig`], executes every requested
//! combination and produces a [`ResultRecord`]. The record is written as
//! `results.json` (with the config embedded) plus `rows.csv`, one row per
//! restart or run in deterministic order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_breast_cancer, load_digits, load_iris, BreastCancerOptions, Dataset, DigitCounts,
    DigitsSource, Samples, Split,
};
use crate::metric::{test_accuracy, train, Method, Model, Optimizer, ReferenceSet, TrainConfig};
use crate::mos::{evolve, gram_matrix, GAConfig, MosSet};
use crate::noise::{log_grid, spsa_train, NoiseModel, NoisyClassifier, NoisyTrainConfig};
use crate::optim::SpsaConfig;
use crate::qudit::{Encoding, EncodingSpec, PureState, VirtualBasis};
use crate::{Error, Result};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "QUDIT_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TrainEval,
    EncodingSweep,
    MethodCompare,
    MosGenerate,
    NoiseSweep,
    PcaSweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Iris,
    BreastCancer,
    Digits,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DigitsFormat {
    #[default]
    Digits8x8,
    Mnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    /// File (or MNIST directory); defaults to a file in the data directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub feature_columns: Option<usize>,
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub digits: Option<Vec<u8>>,
    #[serde(default)]
    pub format: DigitsFormat,
    #[serde(default)]
    pub train_per_class: Option<usize>,
    #[serde(default)]
    pub validation_per_class: Option<usize>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Project onto this many principal components before standardizing.
    #[serde(default)]
    pub pca_dim: Option<usize>,
}

fn yes() -> bool {
    true
}

impl DatasetConfig {
    pub fn named(name: DatasetName) -> Self {
        Self {
            name,
            path: None,
            feature_columns: None,
            train_size: None,
            digits: None,
            format: DigitsFormat::default(),
            train_per_class: None,
            validation_per_class: None,
            test_per_class: None,
            standardize: true,
            pca_dim: None,
        }
    }

    /// Source path, falling back to the conventional name in `data_dir`.
    pub fn resolved_path(&self, data_dir: &Path) -> PathBuf {
        if let Some(p) = &self.path {
            return p.clone();
        }
        data_dir.join(match (self.name, self.format) {
            (DatasetName::Iris, _) => "iris.csv",
            (DatasetName::BreastCancer, _) => "wdbc.csv",
            (DatasetName::Digits, DigitsFormat::Digits8x8) => "digits8x8.csv",
            (DatasetName::Digits, DigitsFormat::Mnist) => "mnist",
        })
    }

    /// Loads, splits and preprocesses the dataset.
    pub fn load(&self, data_dir: &Path, seed: u64) -> Result<Dataset> {
        let path = self.resolved_path(data_dir);
        let raw = match self.name {
            DatasetName::Iris => load_iris(&path, seed)?,
            DatasetName::BreastCancer => {
                let d = BreastCancerOptions::default();
                let opts = BreastCancerOptions {
                    feature_columns: self.feature_columns.unwrap_or(d.feature_columns),
                    train_size: self.train_size.unwrap_or(d.train_size),
                };
                load_breast_cancer(&path, &opts, seed)?
            }
            DatasetName::Digits => {
                let digits = self.digits.clone().unwrap_or_else(|| (0..10).collect());
                let (source, defaults) = match self.format {
                    DigitsFormat::Digits8x8 => (
                        DigitsSource::Digits8x8 { path },
                        DigitCounts {
                            train: 100,
                            validation: 0,
                            test: None,
                        },
                    ),
                    DigitsFormat::Mnist => (
                        DigitsSource::MnistIdx { dir: path },
                        DigitCounts::mnist_default(),
                    ),
                };
                let counts = DigitCounts {
                    train: self.train_per_class.unwrap_or(defaults.train),
                    validation: self.validation_per_class.unwrap_or(defaults.validation),
                    test: self.test_per_class.or(defaults.test),
                };
                load_digits(&source, &digits, counts, seed)?
            }
        };
        preprocess(&raw, self.pca_dim, self.standardize)
    }
}

/// Optional PCA followed by optional standardization, both fitted on the
/// training split.
pub fn preprocess(ds: &Dataset, pca_dim: Option<usize>, standardize: bool) -> Result<Dataset> {
    let projected = match pca_dim {
        Some(k) => ds.pca(k)?.0,
        None => ds.clone(),
    };
    if standardize {
        projected.standardized()
    } else {
        Ok(projected)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSource {
    /// Orthonormal levels when `K <= d`, otherwise generated MOS.
    #[default]
    Auto,
    Orthonormal,
    Mos,
    MosFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "one")]
    pub layers: usize,
    /// Empty means the method's default encoding.
    #[serde(default)]
    pub encodings: Vec<Encoding>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub centers: CenterSource,
    #[serde(default)]
    pub mos_file: Option<PathBuf>,
    /// Rotate between the reference states instead of the levels.
    #[serde(default)]
    pub virtual_basis: bool,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub max_evals: Option<usize>,
}

fn default_dims() -> Vec<usize> {
    vec![3]
}

fn one() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Explicit]
}

fn default_restarts() -> usize {
    100
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dims: default_dims(),
            layers: 1,
            encodings: vec![],
            methods: default_methods(),
            centers: CenterSource::Auto,
            mos_file: None,
            virtual_basis: false,
            restarts: default_restarts(),
            optimizer: Optimizer::default(),
            max_evals: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosConfig {
    pub dim: usize,
    pub states: usize,
    #[serde(default)]
    pub ga: GAConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_t1")]
    pub t1: f64,
    /// Explicit dephasing times; overrides the logarithmic grid.
    #[serde(default)]
    pub t2: Option<Vec<f64>>,
    #[serde(default = "default_t2_min")]
    pub t2_min: f64,
    #[serde(default = "default_t2_max")]
    pub t2_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_rabi_hz")]
    pub rabi_hz: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub spsa: SpsaConfig,
}

fn default_t1() -> f64 {
    100e-3
}
fn default_t2_min() -> f64 {
    100e-9
}
fn default_t2_max() -> f64 {
    100e-6
}
fn default_points() -> usize {
    12
}
fn default_rabi_hz() -> f64 {
    10e6
}
fn default_runs() -> usize {
    50
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            t1: default_t1(),
            t2: None,
            t2_min: default_t2_min(),
            t2_max: default_t2_max(),
            points: default_points(),
            rabi_hz: default_rabi_hz(),
            runs: default_runs(),
            spsa: SpsaConfig::default(),
        }
    }
}

impl NoiseConfig {
    pub fn t2_values(&self) -> Vec<f64> {
        match &self.t2 {
            Some(v) => v.clone(),
            None => log_grid(self.t2_min, self.t2_max, self.points),
        }
    }

    pub fn model(&self, dim: usize, t2: f64) -> Result<NoiseModel> {
        let mut m = NoiseModel::experimental(dim, t2)?;
        m.t1 = self.t1;
        m.rabi = 2.0 * std::f64::consts::PI * self.rabi_hz;
        NoiseModel::new(m.t1, m.t2, m.rabi, m.splittings)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSweepConfig {
    #[serde(default = "default_pca_dims")]
    pub dims: Vec<usize>,
}

fn default_pca_dims() -> Vec<usize> {
    vec![4, 6, 8, 12]
}

impl Default for PcaSweepConfig {
    fn default() -> Self {
        Self {
            dims: default_pca_dims(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub mos: Option<MosConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub pca: Option<PcaSweepConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn dataset(&self) -> Result<&DatasetConfig> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{:?} needs a [dataset] section", self.kind)))
    }

    /// Checks value ranges and that every referenced file exists.
    pub fn validate(&self, data_dir: &Path) -> Result<()> {
        let m = &self.model;
        if m.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if m.dims.is_empty() || m.dims.iter().any(|&d| d < 2) {
            return Err(Error::Config("every qudit dimension must be >= 2".into()));
        }
        if m.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if m.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if m.centers == CenterSource::MosFile {
            let p = m
                .mos_file
                .as_ref()
                .ok_or_else(|| Error::Config("centers = \"mos_file\" needs mos_file".into()))?;
            if !p.exists() {
                return Err(Error::Config(format!(
                    "MOS file {} does not exist",
                    p.display()
                )));
            }
        }
        match self.kind {
            ExperimentKind::MosGenerate => {
                let mos = self
                    .mos
                    .as_ref()
                    .ok_or_else(|| Error::Config("mos_generate needs a [mos] section".into()))?;
                if mos.dim < 2 || mos.states < 2 {
                    return Err(Error::Config("MOS needs dim >= 2 and states >= 2".into()));
                }
                mos.ga.validate()?;
                return Ok(());
            }
            ExperimentKind::NoiseSweep => {
                let n = self.noise.clone().unwrap_or_default();
                let t2 = n.t2_values();
                if t2.is_empty()
                    || t2.iter().any(|&t| !(t > 0.0))
                    || !(n.t1 > 0.0)
                    || !(n.rabi_hz > 0.0)
                {
                    return Err(Error::Config(
                        "noise times and Rabi frequency must be positive".into(),
                    ));
                }
                if n.runs == 0 {
                    return Err(Error::Config("runs must be >= 1".into()));
                }
            }
            ExperimentKind::PcaSweep => {
                let p = self.pca.clone().unwrap_or_default();
                if p.dims.is_empty() || p.dims.contains(&0) {
                    return Err(Error::Config("PCA dimensions must be positive".into()));
                }
            }
            _ => {}
        }
        let ds = self.dataset()?;
        let path = ds.resolved_path(data_dir);
        if !path.exists() {
            return Err(Error::Config(format!(
                "dataset path {} does not exist",
                path.display()
            )));
        }
        Ok(())
    }
}

/// Settings that do not belong in the config file.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub data_dir: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl RunContext {
    pub fn from_env() -> Self {
        Self {
            data_dir: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            jobs: None,
        }
    }

    /// Runs `f` on a pool with `jobs` workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.jobs {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Median, extremes and mean of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => v[n / 2],
            _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        };
        Self {
            count: n,
            median,
            min: v.first().copied().unwrap_or(f64::NAN),
            max: v.last().copied().unwrap_or(f64::NAN),
            mean: if n == 0 {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / n as f64
            },
        }
    }
}

/// MOS reference set for `K` classes in dimension `d`.
pub fn mos_reference_set(dim: usize, classes: usize, seed: u64) -> Result<ReferenceSet> {
    let cfg = GAConfig {
        seed,
        ..GAConfig::default()
    };
    ReferenceSet::new(evolve(&cfg, dim, classes)?.states)
}

/// Centers for `classes` classes in dimension `dim`.
pub fn resolve_centers(
    model: &ModelConfig,
    dim: usize,
    classes: usize,
    seed: u64,
) -> Result<ReferenceSet> {
    match model.centers {
        CenterSource::Orthonormal => ReferenceSet::orthonormal(dim, classes),
        CenterSource::Auto if classes <= dim => ReferenceSet::orthonormal(dim, classes),
        CenterSource::Auto | CenterSource::Mos => mos_reference_set(dim, classes, seed),
        CenterSource::MosFile => {
            let path = model
                .mos_file
                .as_ref()
                .ok_or_else(|| Error::Config("centers = \"mos_file\" needs mos_file".into()))?;
            let set = MosSet::load(path)?;
            if set.dim != dim || set.len() != classes {
                return Err(Error::Config(format!(
                    "MOS file holds {} states in d = {}, need {classes} in d = {dim}",
                    set.len(),
                    set.dim
                )));
            }
            set.reference_set()
        }
    }
}

/// One trained restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub dim: usize,
    pub encoding: Encoding,
    pub method: Method,
    pub layers: usize,
    pub pca_dim: Option<usize>,
    pub restart: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean fidelity with the own class center (explicit models only).
    pub train_fidelity: Option<f64>,
    pub test_fidelity: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
    pub loss_curve: Vec<f64>,
}

/// Summary of one (d, encoding, method[, PCA dim]) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub dim: usize,
    pub encoding: Encoding,
    pub method: Method,
    pub pca_dim: Option<usize>,
    pub test_accuracy: Stats,
    pub train_accuracy: Stats,
    pub train_fidelity: Option<Stats>,
    pub test_fidelity: Option<Stats>,
}

impl GroupSummary {
    fn from_rows(rows: &[RestartRecord]) -> Self {
        let r0 = &rows[0];
        let pick = |f: fn(&RestartRecord) -> Option<f64>| -> Option<Stats> {
            let v: Option<Vec<f64>> = rows.iter().map(f).collect();
            v.map(|v| Stats::of(&v))
        };
        Self {
            dim: r0.dim,
            encoding: r0.encoding,
            method: r0.method,
            pca_dim: r0.pca_dim,
            test_accuracy: Stats::of(&rows.iter().map(|r| r.test_accuracy).collect::<Vec<_>>()),
            train_accuracy: Stats::of(&rows.iter().map(|r| r.train_accuracy).collect::<Vec<_>>()),
            train_fidelity: pick(|r| r.train_fidelity),
            test_fidelity: pick(|r| r.test_fidelity),
        }
    }
}

/// One run of a noisy chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRunRecord {
    pub t2: f64,
    pub run: usize,
    pub reinitialized: bool,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub completed: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub t2: f64,
    /// `Ω_R · T2`.
    pub rabi_t2: f64,
    pub test_accuracy: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub dim: usize,
    pub states: usize,
    pub exponent: f64,
    pub energy: f64,
    pub generations: usize,
    pub gram: Vec<Vec<f64>>,
}

/// Everything one experiment produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub library_version: String,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub groups: Vec<GroupSummary>,
    pub restarts: Vec<RestartRecord>,
    pub noise: Vec<NoiseSummary>,
    pub noise_runs: Vec<NoiseRunRecord>,
    pub mos: Option<MosRecord>,
    pub wall_time_s: f64,
}

impl ResultRecord {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: config.kind,
            config: config.clone(),
            groups: vec![],
            restarts: vec![],
            noise: vec![],
            noise_runs: vec![],
            mos: None,
            wall_time_s: 0.0,
        }
    }

    /// Delimiter-separated rows without timing columns, so reruns with the
    /// same config are byte-identical.
    pub fn csv(&self) -> String {
        let mut s = String::new();
        match self.kind {
            ExperimentKind::MosGenerate => {
                if let Some(m) = &self.mos {
                    for row in &m.gram {
                        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                        let _ = writeln!(s, "{}", cells.join(","));
                    }
                }
            }
            ExperimentKind::NoiseSweep => {
                let _ = writeln!(s, "t2,run,reinitialized,train_loss,test_accuracy,completed");
                for r in &self.noise_runs {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        r.t2, r.run, r.reinitialized, r.train_loss, r.test_accuracy, r.completed
                    );
                }
            }
            _ => {
                let _ = writeln!(
                    s,
                    "dim,encoding,method,layers,pca_dim,restart,train_loss,train_accuracy,test_accuracy,train_fidelity,test_fidelity,evaluations,converged"
                );
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                for r in &self.restarts {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        r.dim,
                        r.encoding,
                        r.method,
                        r.layers,
                        r.pca_dim.map(|p| p.to_string()).unwrap_or_default(),
                        r.restart,
                        r.train_loss,
                        r.train_accuracy,
                        r.test_accuracy,
                        opt(r.train_fidelity),
                        opt(r.test_fidelity),
                        r.evaluations,
                        r.converged
                    );
                }
            }
        }
        s
    }

    /// Writes `results.json` and `rows.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("results.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numerical(format!("cannot serialize results: {e}")))?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(if self.kind == ExperimentKind::MosGenerate {
            "gram.csv"
        } else {
            "rows.csv"
        });
        fs::write(&csv, self.csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(vec![json, csv])
    }
}

/// Trained restart with its classifier, as returned by [`train_restarts`].
#[derive(Clone, Debug)]
pub struct RestartOutcome {
    pub record: RestartRecord,
    pub model: Model,
}

/// Options shared by every restart of a group.
#[derive(Clone, Debug)]
pub struct GroupSetup<'a> {
    pub train: &'a Samples,
    pub test: &'a Samples,
    pub spec: EncodingSpec,
    pub config: TrainConfig,
    pub refs: Option<&'a ReferenceSet>,
    pub basis: Option<&'a VirtualBasis>,
    pub pca_dim: Option<usize>,
}

/// Trains `config.restarts` independent restarts, in parallel, returning
/// them in restart order.
pub fn train_restarts(setup: &GroupSetup<'_>) -> Result<Vec<RestartOutcome>> {
    (0..setup.config.restarts)
        .into_par_iter()
        .map(|r| train_one(setup, r))
        .collect()
}

fn train_one(setup: &GroupSetup<'_>, restart: usize) -> Result<RestartOutcome> {
    let out = train(
        setup.train,
        &setup.spec,
        &setup.config,
        setup.refs,
        setup.basis,
        restart,
    )?;
    let model = out.model;
    let explicit = setup.config.method == Method::Explicit;
    let record = RestartRecord {
        dim: setup.spec.dim,
        encoding: setup.spec.variant,
        method: setup.config.method,
        layers: setup.spec.layers,
        pca_dim: setup.pca_dim,
        restart,
        train_loss: out.minimum.loss,
        train_accuracy: test_accuracy(&model, setup.train)?,
        test_accuracy: test_accuracy(&model, setup.test)?,
        train_fidelity: explicit
            .then(|| model.mean_center_fidelity(setup.train))
            .transpose()?,
        test_fidelity: explicit
            .then(|| model.mean_center_fidelity(setup.test))
            .transpose()?,
        evaluations: out.minimum.evaluations,
        converged: out.minimum.converged,
        loss_curve: out.minimum.history,
    };
    Ok(RestartOutcome { record, model })
}

/// Runs one experiment end to end.
pub fn run_experiment(config: &ExperimentConfig, ctx: &RunContext) -> Result<ResultRecord> {
    config.validate(&ctx.data_dir)?;
    let t0 = Instant::now();
    let mut record = ctx.install(|| match config.kind {
        ExperimentKind::MosGenerate => run_mos(config),
        ExperimentKind::NoiseSweep => run_noise(config, ctx),
        ExperimentKind::PcaSweep => run_pca(config, ctx),
        ExperimentKind::TrainEval
        | ExperimentKind::EncodingSweep
        | ExperimentKind::MethodCompare => run_training(config, ctx),
    })??;
    record.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(record)
}

fn train_config(config: &ExperimentConfig, method: Method) -> TrainConfig {
    let m = &config.model;
    TrainConfig {
        method,
        optimizer: m.optimizer.clone(),
        restarts: m.restarts,
        max_evals: m.max_evals.unwrap_or(usize::MAX),
        seed: config.seed,
    }
}

fn encodings_for(model: &ModelConfig, method: Method) -> Vec<Encoding> {
    if model.encodings.is_empty() {
        vec![method.default_encoding()]
    } else {
        model.encodings.clone()
    }
}

fn train_groups(
    config: &ExperimentConfig,
    ds: &Dataset,
    pca_dim: Option<usize>,
    record: &mut ResultRecord,
) -> Result<()> {
    let train_set = ds.samples(Split::Train);
    let test_set = ds.samples(Split::Test);
    let classes = ds.num_classes();
    let m = &config.model;
    for &dim in &m.dims {
        let refs = resolve_centers(m, dim, classes, config.seed)?;
        let basis = if m.virtual_basis {
            Some(VirtualBasis::new(refs.centers().to_vec())?)
        } else {
            None
        };
        for &method in &m.methods {
            for variant in encodings_for(m, method) {
                let spec = match &basis {
                    Some(b) => EncodingSpec::with_basis(variant, b, ds.dim(), m.layers)?,
                    None => EncodingSpec::new(variant, dim, ds.dim(), m.layers)?,
                };
                let setup = GroupSetup {
                    train: &train_set,
                    test: &test_set,
                    spec,
                    config: train_config(config, method),
                    refs: Some(&refs),
                    basis: basis.as_ref(),
                    pca_dim,
                };
                let outcomes = train_restarts(&setup)?;
                let rows: Vec<RestartRecord> = outcomes.into_iter().map(|o| o.record).collect();
                record.groups.push(GroupSummary::from_rows(&rows));
                record.restarts.extend(rows);
            }
        }
    }
    Ok(())
}

fn run_training(config: &ExperimentConfig, ctx: &RunContext) -> Result<ResultRecord> {
    let ds = config.dataset()?.load(&ctx.data_dir, config.seed)?;
    let mut record = ResultRecord::new(config);
    train_groups(config, &ds, config.dataset()?.pca_dim, &mut record)?;
    Ok(record)
}

fn run_pca(config: &ExperimentConfig, ctx: &RunContext) -> Result<ResultRecord> {
    let dcfg = config.dataset()?;
    let raw = DatasetConfig {
        pca_dim: None,
        standardize: false,
        ..dcfg.clone()
    }
    .load(&ctx.data_dir, config.seed)?;
    let mut record = ResultRecord::new(config);
    for &k in &config.pca.clone().unwrap_or_default().dims {
        let ds = preprocess(&raw, Some(k), dcfg.standardize)?;
        train_groups(config, &ds, Some(k), &mut record)?;
    }
    Ok(record)
}

fn run_mos(config: &ExperimentConfig) -> Result<ResultRecord> {
    let mos = config.mos.as_ref().expect("validated");
    let ga = GAConfig {
        seed: config.seed,
        ..mos.ga.clone()
    };
    let evo = crate::mos::evolve_with_history(&ga, mos.dim, mos.states)?;
    let g = gram_matrix(&evo.best.states);
    let mut record = ResultRecord::new(config);
    record.mos = Some(MosRecord {
        dim: mos.dim,
        states: mos.states,
        exponent: ga.exponent,
        energy: -evo.best.fitness,
        generations: evo.generations,
        gram: (0..g.nrows())
            .map(|i| g.row(i).iter().copied().collect())
            .collect(),
    });
    Ok(record)
}

/// States of a finished `mos_generate` run, for writing the MOS file.
pub fn mos_states(config: &ExperimentConfig) -> Result<MosSet> {
    let mos = config
        .mos
        .as_ref()
        .ok_or_else(|| Error::Config("mos_generate needs a [mos] section".into()))?;
    let ga = GAConfig {
        seed: config.seed,
        ..mos.ga.clone()
    };
    let best = evolve(&ga, mos.dim, mos.states)?;
    Ok(MosSet::from_individual(&best, ga.exponent))
}

fn run_noise(config: &ExperimentConfig, ctx: &RunContext) -> Result<ResultRecord> {
    let ds = config.dataset()?.load(&ctx.data_dir, config.seed)?;
    let train_set = ds.samples(Split::Train);
    let test_set = ds.samples(Split::Test);
    let noise = config.noise.clone().unwrap_or_default();
    let m = &config.model;
    let dim = *m.dims.first().expect("validated");
    let variant = m.encodings.first().copied().unwrap_or(Encoding::G2);
    let spec = EncodingSpec::new(variant, dim, ds.dim(), m.layers)?;
    let refs = resolve_centers(m, dim, ds.num_classes(), config.seed)?;
    let mut record = ResultRecord::new(config);
    for t2 in noise.t2_values() {
        let model = noise.model(dim, t2)?;
        let clf = NoisyClassifier::new(&spec, &refs, &model)?;
        let report = spsa_train(
            &train_set,
            &test_set,
            &clf,
            &NoisyTrainConfig {
                spsa: noise.spsa.clone(),
                runs: noise.runs,
                seed: config.seed,
            },
        )?;
        record.noise.push(NoiseSummary {
            t2,
            rabi_t2: model.rabi * t2,
            test_accuracy: Stats::of(&report.accuracies()),
        });
        record
            .noise_runs
            .extend(report.runs.into_iter().map(|r| NoiseRunRecord {
                t2,
                run: r.run,
                reinitialized: r.reinitialized,
                train_loss: r.train_loss,
                test_accuracy: r.test_accuracy,
                completed: r.completed,
                wall_time_s: r.wall_time_s,
            }));
    }
    Ok(record)
}

/// Bloch vector `(x, y, z)` of a qubit state.
pub fn bloch_vector(state: &PureState) -> Option<[f64; 3]> {
    let a = state.amplitudes();
    if a.len() != 2 {
        return None;
    }
    let c = a[0].conj() * a[1];
    Some([2.0 * c.re, 2.0 * c.im, a[0].norm_sqr() - a[1].norm_sqr()])
}

/// Writes one row per point (`point,label,predicted,...`) and, for explicit
/// models, one `center` row per reference state. Qubits get Bloch
/// coordinates, larger qudits the raw amplitudes. Returns the row count.
pub fn export_bloch(model: &Model, samples: &Samples, path: &Path) -> Result<usize> {
    let d = model.spec.dim;
    let mut s = String::new();
    if d == 2 {
        let _ = writeln!(s, "kind,label,predicted,x,y,z");
    } else {
        let cols: Vec<String> = (0..d).map(|j| format!("re{j},im{j}")).collect();
        let _ = writeln!(s, "kind,label,predicted,{}", cols.join(","));
    }
    let coords = |st: &PureState| -> String {
        match bloch_vector(st) {
            Some(v) => format!("{},{},{}", v[0], v[1], v[2]),
            None => st
                .amplitudes()
                .iter()
                .map(|a| format!("{},{}", a.re, a.im))
                .collect::<Vec<_>>()
                .join(","),
        }
    };
    let mut rows = 0;
    for (x, &y) in samples.features.iter().zip(&samples.labels) {
        let st = model.state(x)?;
        let pred = model.classify(x)?;
        let _ = writeln!(s, "point,{y},{pred},{}", coords(&st));
        rows += 1;
    }
    if let Some(refs) = &model.refs {
        for (k, c) in refs.centers().iter().enumerate() {
            let _ = writeln!(s, "center,{k},{k},{}", coords(c));
            rows += 1;
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn data_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    fn ctx() -> RunContext {
        RunContext {
            data_dir: data_dir(),
            jobs: Some(1),
        }
    }

    #[test]
    fn bloch_examples() {
        assert_eq!(
            bloch_vector(&PureState::ground(2).unwrap()),
            Some([0.0, 0.0, 1.0])
        );
        let plus = bloch_vector(&PureState::uniform(2).unwrap()).unwrap();
        assert!((plus[0] - 1.0).abs() < 1e-15 && plus[1].abs() < 1e-15 && plus[2].abs() < 1e-15);
        assert_eq!(bloch_vector(&PureState::ground(3).unwrap()), None);
        let i = PureState::normalized(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]).unwrap();
        assert!((bloch_vector(&i).unwrap()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_parses_and_rejects_unknown_keys() {
        let text = r#"
kind = "method_compare"
seed = 4
[dataset]
name = "iris"
[model]
dims = [2, 3]
methods = ["implicit", "explicit"]
restarts = 3
[model.optimizer]
kind = "adam"
max_epochs = 10
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::MethodCompare);
        assert_eq!(cfg.model.dims, vec![2, 3]);
        cfg.validate(&data_dir()).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        let bad = ExperimentConfig::from_toml("kind = \"train_eval\"\nbogus = 1\n");
        assert!(matches!(bad, Err(Error::Config(_))));
        assert_eq!(bad.unwrap_err().exit_code(), 2);
    }

    #[test]
    fn validation_catches_missing_files_and_ranges() {
        let mut cfg = ExperimentConfig::from_toml(
            "kind = \"train_eval\"\n[dataset]\nname = \"iris\"\npath = \"/nonexistent.csv\"\n",
        )
        .unwrap();
        assert!(matches!(cfg.validate(&data_dir()), Err(Error::Config(_))));
        cfg.dataset.as_mut().unwrap().path = None;
        cfg.model.layers = 0;
        assert!(cfg.validate(&data_dir()).is_err());
    }

    fn small_compare() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
kind = "method_compare"
seed = 1
[dataset]
name = "iris"
[model]
dims = [2, 3]
methods = ["implicit", "explicit"]
restarts = 2
[model.optimizer]
kind = "adam"
max_epochs = 15
"#,
        )
        .unwrap()
    }

    #[test]
    fn method_compare_produces_one_group_per_combination() {
        let rec = run_experiment(&small_compare(), &ctx()).unwrap();
        assert_eq!(rec.groups.len(), 4);
        assert_eq!(rec.restarts.len(), 8);
        for r in &rec.restarts {
            assert!((0.0..=1.0).contains(&r.test_accuracy));
            assert_eq!(r.method == Method::Explicit, r.train_fidelity.is_some());
        }
        // d = 2 with 3 classes uses generated centers
        assert_eq!(rec.config, small_compare());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let a = run_experiment(&small_compare(), &ctx()).unwrap();
        let b = run_experiment(
            &small_compare(),
            &RunContext {
                jobs: Some(2),
                ..ctx()
            },
        )
        .unwrap();
        assert_eq!(a.csv(), b.csv());
        let dir = tempfile::tempdir().unwrap();
        let files = a.write(dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(json["config"]["kind"], "method_compare");
        assert_eq!(json["library_version"], env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn mos_generate_dumps_gram_matrix() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"mos_generate\"\n[mos]\ndim = 2\nstates = 3\n[mos.ga]\npopulation_size = 16\nmax_generations = 60\n",
        )
        .unwrap();
        let rec = run_experiment(&cfg, &ctx()).unwrap();
        let m = rec.mos.as_ref().unwrap();
        assert_eq!(m.gram.len(), 3);
        assert!((m.energy - 1.5).abs() < 1e-3);
        assert_eq!(rec.csv().lines().count(), 3);
        let set = mos_states(&cfg).unwrap();
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn noise_sweep_records_every_run() {
        let cfg = ExperimentConfig::from_toml(
            r#"
kind = "noise_sweep"
[dataset]
name = "iris"
[model]
dims = [2]
[noise]
t2 = [1e-4]
runs = 2
[noise.spsa]
iterations = 2
"#,
        )
        .unwrap();
        let rec = run_experiment(&cfg, &ctx()).unwrap();
        assert_eq!(rec.noise_runs.len(), 2);
        assert_eq!(rec.noise.len(), 1);
        assert_eq!(rec.csv().lines().count(), 3);
    }

    #[test]
    fn bloch_export_row_count() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"train_eval\"\n[dataset]\nname = \"iris\"\n[model]\ndims = [2]\nrestarts = 1\n[model.optimizer]\nkind = \"adam\"\nmax_epochs = 5\n",
        )
        .unwrap();
        let ds = cfg.dataset.as_ref().unwrap().load(&data_dir(), 0).unwrap();
        let train_set = ds.samples(Split::Train);
        let test_set = ds.samples(Split::Test);
        let refs = resolve_centers(&cfg.model, 2, 3, 0).unwrap();
        let setup = GroupSetup {
            train: &train_set,
            test: &test_set,
            spec: EncodingSpec::new(Encoding::G2, 2, 4, 1).unwrap(),
            config: train_config(&cfg, Method::Explicit),
            refs: Some(&refs),
            basis: None,
            pca_dim: None,
        };
        let model = train_restarts(&setup).unwrap().remove(0).model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bloch.csv");
        assert_eq!(export_bloch(&model, &test_set, &path).unwrap(), 123);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 124);
        assert!(text.lines().nth(1).unwrap().starts_with("point,"));
    }

    #[test]
    fn stats_of_even_and_odd_samples() {
        let s = Stats::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.median, s.min, s.max, s.mean), (2.0, 1.0, 3.0, 2.0));
        assert_eq!(Stats::of(&[1.0, 2.0, 3.0, 4.0]).median, 2.5);
    }
}
