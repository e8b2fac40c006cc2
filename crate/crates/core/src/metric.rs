//! Metric-learning losses, noiseless training and classification.
//!
//! With class ensembles `ρ_k = (1/N_k) Σ_i |ψ_i⟩⟨ψ_i|` the implicit loss is
//! `1 - (1/K) Σ_k tr(ρ_k²) + (2/K) Σ_{k<l} tr(ρ_k ρ_l)` and the explicit loss
//! against fixed centers `|c_k⟩` is `1 - (1/K) Σ_k ⟨c_k|ρ_k|c_k⟩`. Both traces
//! are evaluated from pure-state overlaps, never from density matrices.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::optim::{self, AdamConfig, Minimum, SpsaConfig};
use crate::qudit::{
    overlap_sqr, AnsatzParams, Circuit, Encoding, EncodingSpec, PureState, VirtualBasis,
};
use crate::{Error, Result, C64};

/// Encoded training states of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassEnsemble {
    pub class_id: usize,
    pub members: Vec<PureState>,
}

impl ClassEnsemble {
    pub fn new(class_id: usize, members: Vec<PureState>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class {class_id} has an empty ensemble"
            )));
        }
        let d = members[0].dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::Dimension(format!(
                "class {class_id} mixes states of different dimension"
            )));
        }
        Ok(Self { class_id, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }
}

/// One fixed center per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSet {
    centers: Vec<PureState>,
}

impl ReferenceSet {
    pub fn new(centers: Vec<PureState>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::InvalidArgument(
                "a reference set needs K >= 2 centers".into(),
            ));
        }
        let d = centers[0].dim();
        for c in &centers {
            if c.dim() != d {
                return Err(Error::Dimension("centers differ in dimension".into()));
            }
            if (c.norm_sqr() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument("center is not normalized".into()));
            }
        }
        Ok(Self { centers })
    }

    /// `|0⟩, …, |K-1⟩`; requires `K <= d`.
    pub fn orthonormal(dim: usize, classes: usize) -> Result<Self> {
        if classes > dim {
            return Err(Error::InvalidArgument(format!(
                "{classes} orthonormal centers do not fit in d = {dim}"
            )));
        }
        Self::new(
            (0..classes)
                .map(|k| PureState::basis(dim, k))
                .collect::<Result<_>>()?,
        )
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn centers(&self) -> &[PureState] {
        &self.centers
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(perm.iter().map(|&i| self.centers[i].clone()).collect())
    }
}

/// `tr(ρ_1 ρ_2) = (1/(N_1 N_2)) Σ_{i,j} |⟨ψ_i|ψ_j⟩|²`.
pub fn ensemble_purity_overlap(e1: &ClassEnsemble, e2: &ClassEnsemble) -> Result<f64> {
    if e1.is_empty() || e2.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    if e1.dim() != e2.dim() {
        return Err(Error::Dimension("ensembles differ in dimension".into()));
    }
    let a: Vec<&[C64]> = e1.members.iter().map(PureState::amplitudes).collect();
    let b: Vec<&[C64]> = e2.members.iter().map(PureState::amplitudes).collect();
    Ok(cross_overlap(&a, &b))
}

fn cross_overlap(a: &[&[C64]], b: &[&[C64]]) -> f64 {
    let mut sum = 0.0;
    for x in a {
        for y in b {
            sum += overlap_sqr(x, y);
        }
    }
    sum / (a.len() * b.len()) as f64
}

fn self_overlap(a: &[&[C64]]) -> f64 {
    let n = a.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += overlap_sqr(a[i], a[j]);
        }
    }
    // diagonal terms are |⟨ψ|ψ⟩|² = 1
    (2.0 * sum + n as f64) / (n * n) as f64
}

fn implicit_from_groups(groups: &[Vec<&[C64]>]) -> f64 {
    let k = groups.len() as f64;
    let mut purity = 0.0;
    let mut cross = 0.0;
    for (i, g) in groups.iter().enumerate() {
        purity += self_overlap(g);
        for h in &groups[i + 1..] {
            cross += cross_overlap(g, h);
        }
    }
    1.0 - purity / k + 2.0 * cross / k
}

fn explicit_from_groups(groups: &[Vec<&[C64]>], centers: &[PureState]) -> f64 {
    let k = groups.len() as f64;
    let fid: f64 = groups
        .iter()
        .zip(centers)
        .map(|(g, c)| {
            g.iter()
                .map(|s| overlap_sqr(c.amplitudes(), s))
                .sum::<f64>()
                / g.len() as f64
        })
        .sum();
    1.0 - fid / k
}

fn check_ensembles(ensembles: &[ClassEnsemble]) -> Result<()> {
    if ensembles.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "metric losses need at least 2 classes, got {}",
            ensembles.len()
        )));
    }
    let d = ensembles[0].dim();
    for e in ensembles {
        if e.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class {} is empty",
                e.class_id
            )));
        }
        if e.dim() != d {
            return Err(Error::Dimension("ensembles differ in dimension".into()));
        }
    }
    Ok(())
}

fn amplitude_groups(ensembles: &[ClassEnsemble]) -> Vec<Vec<&[C64]>> {
    ensembles
        .iter()
        .map(|e| e.members.iter().map(PureState::amplitudes).collect())
        .collect()
}

/// Implicit (center-free) metric-learning loss.
pub fn implicit_loss(ensembles: &[ClassEnsemble]) -> Result<f64> {
    check_ensembles(ensembles)?;
    Ok(implicit_from_groups(&amplitude_groups(ensembles)))
}

/// Explicit loss; ensemble `class_id` is compared with center `class_id`.
pub fn explicit_loss(ensembles: &[ClassEnsemble], refs: &ReferenceSet) -> Result<f64> {
    check_ensembles(ensembles)?;
    if ensembles.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} classes but {} centers",
            ensembles.len(),
            refs.len()
        )));
    }
    if ensembles[0].dim() != refs.dim() {
        return Err(Error::Dimension(
            "centers and states differ in dimension".into(),
        ));
    }
    let mut centers = Vec::with_capacity(ensembles.len());
    for e in ensembles {
        let c = refs
            .centers
            .get(e.class_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no center for class {}", e.class_id)))?;
        centers.push(c.clone());
    }
    Ok(explicit_from_groups(&amplitude_groups(ensembles), &centers))
}

/// Which loss drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Implicit,
    Explicit,
}

impl Method {
    /// Encoding used when none is requested: g1 for implicit, g2 for explicit.
    pub fn default_encoding(self) -> Encoding {
        match self {
            Method::Implicit => Encoding::G1,
            Method::Explicit => Encoding::G2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Implicit => "implicit",
            Method::Explicit => "explicit",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "implicit" => Ok(Method::Implicit),
            "explicit" => Ok(Method::Explicit),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam(AdamConfig),
    Spsa(SpsaConfig),
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam(AdamConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub optimizer: Optimizer,
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            optimizer: Optimizer::default(),
            restarts: 100,
            max_evals: usize::MAX,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_evals == 0 {
            return Err(Error::InvalidArgument("max_evals must be >= 1".into()));
        }
        Ok(())
    }

    /// Random stream for restart `index`; independent of every other restart.
    pub fn restart_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// Loss of the ansatz over a fixed training set.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    circuit: Circuit<'a>,
    method: Method,
    refs: Option<&'a ReferenceSet>,
    basis: Option<&'a VirtualBasis>,
    /// Training features grouped by class.
    groups: Vec<Vec<&'a [f64]>>,
}

impl<'a> Objective<'a> {
    pub fn new(
        train: &'a Samples,
        spec: &'a EncodingSpec,
        method: Method,
        refs: Option<&'a ReferenceSet>,
        basis: Option<&'a VirtualBasis>,
    ) -> Result<Self> {
        let circuit = Circuit::new(spec, basis)?;
        if train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        if train.classes < 2 {
            return Err(Error::InvalidArgument(
                "training needs at least 2 classes".into(),
            ));
        }
        let mut groups = vec![Vec::new(); train.classes];
        for (x, &y) in train.features.iter().zip(&train.labels) {
            if x.len() != spec.data_dim {
                return Err(Error::Encoding(format!(
                    "feature vector has length {}, encoding expects {}",
                    x.len(),
                    spec.data_dim
                )));
            }
            groups[y].push(x.as_slice());
        }
        if let Some(k) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!(
                "class {k} has no training points"
            )));
        }
        if method == Method::Explicit {
            let refs = refs.ok_or_else(|| {
                Error::InvalidArgument("explicit training requires a reference set".into())
            })?;
            if refs.len() != train.classes || refs.dim() != spec.dim {
                return Err(Error::InvalidArgument(format!(
                    "reference set ({} centers, d = {}) does not match {} classes in d = {}",
                    refs.len(),
                    refs.dim(),
                    train.classes,
                    spec.dim
                )));
            }
        }
        Ok(Self {
            circuit,
            method,
            refs,
            basis,
            groups,
        })
    }

    pub fn spec(&self) -> &EncodingSpec {
        self.circuit.spec()
    }

    pub fn param_count(&self) -> usize {
        self.spec().param_count()
    }

    fn states(&self, params: &AnsatzParams) -> Result<Vec<Vec<PureState>>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|x| self.circuit.state(x, params)).collect())
            .collect()
    }

    /// Loss at a flat parameter vector.
    pub fn loss(&self, values: &[f64]) -> Result<f64> {
        let params = AnsatzParams::from_values(self.spec(), values.to_vec())?;
        let states = self.states(&params)?;
        let groups: Vec<Vec<&[C64]>> = states
            .iter()
            .map(|g| g.iter().map(PureState::amplitudes).collect())
            .collect();
        Ok(match self.method {
            Method::Implicit => implicit_from_groups(&groups),
            Method::Explicit => explicit_from_groups(&groups, self.refs.unwrap().centers()),
        })
    }

    fn loss_or_nan(&self, values: &[f64]) -> f64 {
        self.loss(values).unwrap_or(f64::NAN)
    }

    /// Central finite-difference gradient.
    pub fn gradient(&self, values: &[f64], h: f64) -> Vec<f64> {
        optim::central_gradient(&mut |v: &[f64]| self.loss_or_nan(v), values, h)
    }

    /// Minimizes the loss from `start`.
    pub fn minimize<R: rand::Rng>(
        &self,
        start: &AnsatzParams,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<TrainOutcome> {
        config.validate()?;
        if config.method != self.method {
            return Err(Error::InvalidArgument(format!(
                "objective uses the {} loss but config requests {}",
                self.method, config.method
            )));
        }
        let n = self.param_count();
        let f = |v: &[f64]| self.loss_or_nan(v);
        let minimum = match &config.optimizer {
            Optimizer::Adam(cfg) => {
                let cap = config.max_evals.saturating_sub(1) / (2 * n + 1);
                let cfg = AdamConfig {
                    max_epochs: cfg.max_epochs.min(cap),
                    ..cfg.clone()
                };
                optim::adam_fd(f, &start.values, &cfg)
            }
            Optimizer::Spsa(cfg) => {
                let cfg = SpsaConfig {
                    iterations: cfg.iterations.min(config.max_evals / 2),
                    ..cfg.clone()
                };
                optim::spsa(f, &start.values, &cfg, rng)
            }
        };
        if !minimum.loss.is_finite() {
            return Err(Error::Numerical(
                "loss was never finite during training".into(),
            ));
        }
        let params = AnsatzParams::from_values(self.spec(), minimum.params.clone())?;
        let model = self.model(params, config.seed)?;
        Ok(TrainOutcome { model, minimum })
    }

    /// Builds the classifier for trained parameters.
    pub fn model(&self, params: AnsatzParams, seed: u64) -> Result<Model> {
        let ensembles = match self.method {
            Method::Implicit => Some(
                self.states(&params)?
                    .into_iter()
                    .enumerate()
                    .map(|(k, m)| ClassEnsemble::new(k, m))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Method::Explicit => None,
        };
        Ok(Model {
            spec: self.spec().clone(),
            method: self.method,
            params: Some(params),
            refs: self.refs.cloned(),
            basis: self.basis.cloned(),
            ensembles,
            seed,
        })
    }
}

/// A trained restart: the classifier plus the optimizer trace.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub minimum: Minimum,
}

/// Trains one restart with parameters drawn from the restart's random stream.
pub fn train(
    train: &Samples,
    spec: &EncodingSpec,
    config: &TrainConfig,
    refs: Option<&ReferenceSet>,
    basis: Option<&VirtualBasis>,
    restart: usize,
) -> Result<TrainOutcome> {
    let objective = Objective::new(train, spec, config.method, refs, basis)?;
    let mut rng = config.restart_rng(restart);
    let start = AnsatzParams::random(spec, &mut rng);
    let mut out = objective.minimize(&start, config, &mut rng)?;
    out.model.seed = config.seed;
    Ok(out)
}

/// Trained classifier.
///
/// Explicit models label a point by the center of maximal fidelity; implicit
/// models by the training ensemble of maximal mean squared overlap. Ties go to
/// the lowest class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: EncodingSpec,
    pub method: Method,
    pub params: Option<AnsatzParams>,
    pub refs: Option<ReferenceSet>,
    pub basis: Option<VirtualBasis>,
    pub ensembles: Option<Vec<ClassEnsemble>>,
    pub seed: u64,
}

impl Model {
    fn trained_params(&self) -> Result<&AnsatzParams> {
        self.params
            .as_ref()
            .ok_or_else(|| Error::Untrained("no parameters".into()))
    }

    pub fn classes(&self) -> usize {
        match self.method {
            Method::Explicit => self.refs.as_ref().map_or(0, ReferenceSet::len),
            Method::Implicit => self.ensembles.as_ref().map_or(0, Vec::len),
        }
    }

    /// Encoded state `U(x; φ)|initial⟩`.
    pub fn state(&self, x: &[f64]) -> Result<PureState> {
        let params = self.trained_params()?;
        Circuit::new(&self.spec, self.basis.as_ref())?.state(x, params)
    }

    /// Per-class scores; the predicted class is their argmax.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let psi = self.state(x)?;
        match self.method {
            Method::Explicit => {
                let refs = self
                    .refs
                    .as_ref()
                    .ok_or_else(|| Error::Untrained("explicit model without centers".into()))?;
                Ok(refs
                    .centers()
                    .iter()
                    .map(|c| overlap_sqr(c.amplitudes(), psi.amplitudes()))
                    .collect())
            }
            Method::Implicit => {
                let ens = self
                    .ensembles
                    .as_ref()
                    .ok_or_else(|| Error::Untrained("implicit model without ensembles".into()))?;
                Ok(ens
                    .iter()
                    .map(|e| {
                        e.members
                            .iter()
                            .map(|m| overlap_sqr(m.amplitudes(), psi.amplitudes()))
                            .sum::<f64>()
                            / e.len() as f64
                    })
                    .collect())
            }
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    /// Mean fidelity of each point with its own class center (`1 - L_E` for
    /// balanced classes). Explicit models only.
    pub fn mean_center_fidelity(&self, samples: &Samples) -> Result<f64> {
        let refs = self
            .refs
            .as_ref()
            .ok_or_else(|| Error::Untrained("mean center fidelity needs centers".into()))?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty split".into()));
        }
        let mut total = 0.0;
        for (x, &y) in samples.features.iter().zip(&samples.labels) {
            let psi = self.state(x)?;
            total += overlap_sqr(refs.centers()[y].amplitudes(), psi.amplitudes());
        }
        Ok(total / samples.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::parse(path, line, msg),
            other => other,
        })
    }

    /// Versioned plain-text form. Floats are written in shortest round-trip
    /// decimal, so `from_text(to_text(m)) == m` exactly.
    pub fn to_text(&self) -> Result<String> {
        let params = self.trained_params()?;
        let mut s = String::new();
        writeln!(s, "# qudit-learn model").unwrap();
        writeln!(s, "format = {MODEL_FORMAT}").unwrap();
        writeln!(s, "dim = {}", self.spec.dim).unwrap();
        writeln!(s, "data_dim = {}", self.spec.data_dim).unwrap();
        writeln!(s, "layers = {}", self.spec.layers).unwrap();
        writeln!(s, "transitions = {}", self.spec.transitions).unwrap();
        writeln!(s, "encoding = {}", self.spec.variant).unwrap();
        writeln!(s, "method = {}", self.method).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "params = {}", join_floats(&params.values)).unwrap();
        if let Some(refs) = &self.refs {
            for c in refs.centers() {
                writeln!(s, "center = {}", join_amps(c)).unwrap();
            }
        }
        if let Some(basis) = &self.basis {
            for b in basis.states() {
                writeln!(s, "basis = {}", join_amps(b)).unwrap();
            }
        }
        if let Some(ens) = &self.ensembles {
            for e in ens {
                for m in &e.members {
                    writeln!(s, "member = {} {}", e.class_id, join_amps(m)).unwrap();
                }
            }
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        let mut centers = Vec::new();
        let mut basis = Vec::new();
        let mut members: Vec<(usize, PureState)> = Vec::new();
        let err = |line: usize, msg: String| Error::parse("<model>", line, msg);

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, "expected 'key = value'".into()))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "center" => centers.push(parse_state(value).map_err(|m| err(line_no, m))?),
                "basis" => basis.push(parse_state(value).map_err(|m| err(line_no, m))?),
                "member" => {
                    let (class, rest) = value.split_once(char::is_whitespace).ok_or_else(|| {
                        err(line_no, "member needs a class and amplitudes".into())
                    })?;
                    let class = class
                        .parse()
                        .map_err(|_| err(line_no, format!("bad class '{class}'")))?;
                    members.push((class, parse_state(rest).map_err(|m| err(line_no, m))?));
                }
                _ => {
                    fields.insert(key.to_string(), (line_no, value.to_string()));
                }
            }
        }

        let get = |k: &str| -> Result<&(usize, String)> {
            fields
                .get(k)
                .ok_or_else(|| err(0, format!("missing field '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            let (line, v) = get(k)?;
            v.parse()
                .map_err(|_| err(*line, format!("bad integer for '{k}'")))
        };
        let format = num("format")?;
        if format != MODEL_FORMAT {
            return Err(err(
                get("format")?.0,
                format!("unsupported model format {format}"),
            ));
        }
        let variant: Encoding = get("encoding")?.1.parse()?;
        let method: Method = get("method")?.1.parse()?;
        let seed: u64 = {
            let (line, v) = get("seed")?;
            v.parse().map_err(|_| err(*line, "bad seed".into()))?
        };
        let spec = EncodingSpec {
            variant,
            dim: num("dim")?,
            data_dim: num("data_dim")?,
            layers: num("layers")?,
            transitions: num("transitions")?,
        };
        let (pline, ptext) = get("params")?;
        let values = ptext
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(*pline, format!("bad parameter: {e}")))?;
        let params = AnsatzParams::from_values(&spec, values)?;

        let refs = if centers.is_empty() {
            None
        } else {
            Some(ReferenceSet::new(centers)?)
        };
        let basis = if basis.is_empty() {
            None
        } else {
            Some(VirtualBasis::new(basis)?)
        };
        let ensembles = if members.is_empty() {
            None
        } else {
            let k = members.iter().map(|(c, _)| c + 1).max().unwrap_or(0);
            let mut grouped = vec![Vec::new(); k];
            for (c, s) in members {
                grouped[c].push(s);
            }
            Some(
                grouped
                    .into_iter()
                    .enumerate()
                    .map(|(c, m)| ClassEnsemble::new(c, m))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Ok(Model {
            spec,
            method,
            params: Some(params),
            refs,
            basis,
            ensembles,
            seed,
        })
    }
}

const MODEL_FORMAT: usize = 1;

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn join_amps(s: &PureState) -> String {
    s.amplitudes()
        .iter()
        .map(|a| format!("{} {}", a.re, a.im))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_state(text: &str) -> std::result::Result<PureState, String> {
    let v = text
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format!("bad amplitude: {e}"))?;
    if v.len() % 2 != 0 {
        return Err("amplitudes must come in (re, im) pairs".into());
    }
    let amps = v.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
    PureState::new(amps).map_err(|e| e.to_string())
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of correctly labelled points.
pub fn test_accuracy(model: &Model, split: &Samples) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let mut correct = 0usize;
    for (x, &y) in split.features.iter().zip(&split.labels) {
        if model.classify(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.len() as f64)
}
