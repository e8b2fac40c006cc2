//! Qudit states, two-level rotations and the data-dependent ansatz.
//!
//! A rotation between levels `k < l` is
//! `R_{k,l}(θ, φ) = exp(-i θ/2 G_{k,l}(φ))` with
//! `G_{k,l}(φ) = cos φ σˣ_{k,l} - sin φ σʸ_{k,l} = e^{-iφ}|k⟩⟨l| + e^{iφ}|l⟩⟨k|`.
//! Because `G²` is the projector onto `{|k⟩, |l⟩}`, the rotation acts on that
//! pair of amplitudes as
//!
//! ```text
//! a_k' = cos(θ/2) a_k - i sin(θ/2) e^{-iφ} a_l
//! a_l' = -i sin(θ/2) e^{iφ} a_k + cos(θ/2) a_l
//! ```
//!
//! and leaves every other amplitude untouched.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

const NORM_TOL: f64 = 1e-10;

/// Normalized pure state of a `d`-level system.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
}

impl PureState {
    /// Wraps amplitudes that must already be normalized.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::Dimension(format!(
                "a qudit needs at least 2 levels, got {}",
                amps.len()
            )));
        }
        let norm = norm_sqr(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state is not normalized (norm² = {norm})"
            )));
        }
        Ok(Self { amps })
    }

    #[cfg(test)]
    pub(crate) fn unchecked(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::Dimension(format!(
                "a qudit needs at least 2 levels, got {}",
                amps.len()
            )));
        }
        let norm = norm_sqr(&amps).sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        for a in &mut amps {
            *a /= norm;
        }
        Ok(Self { amps })
    }

    /// Computational basis state `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!("dimension {dim} < 2")));
        }
        if k >= dim {
            return Err(Error::Dimension(format!(
                "level {k} out of range for d = {dim}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[k] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn ground(dim: usize) -> Result<Self> {
        Self::basis(dim, 0)
    }

    /// `|+⟩ = (1/√d) Σ_l |l⟩`, the uniform superposition over all levels.
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!("dimension {dim} < 2")));
        }
        let a = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(Self { amps: vec![a; dim] })
    }

    /// Haar-random state drawn from normalized complex Gaussians.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let amps = (0..dim)
            .map(|_| C64::new(gaussian(rng), gaussian(rng)))
            .collect();
        Self::normalized(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "inner product between d = {} and d = {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(inner_unchecked(&self.amps, &other.amps))
    }

    /// Applies a rotation in place.
    pub fn rotate(&mut self, rot: &Rotation) -> Result<()> {
        rot.check_dim(self.dim())?;
        rotate_amplitudes(&mut self.amps, rot.k, rot.l, rot.theta, rot.phi);
        Ok(())
    }

    /// Applies a dense `d × d` unitary in place.
    pub fn apply_matrix(&mut self, u: &DMatrix<C64>) -> Result<()> {
        let d = self.dim();
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} matrix applied to a d = {d} state",
                u.nrows(),
                u.ncols()
            )));
        }
        let out: Vec<C64> = (0..d)
            .map(|r| (0..d).map(|c| u[(r, c)] * self.amps[c]).sum())
            .collect();
        self.amps = out;
        Ok(())
    }

    /// Multiplies by a global phase so that the first non-negligible amplitude
    /// is real and non-negative.
    pub fn fix_phase(&mut self) {
        if let Some(a) = self.amps.iter().find(|a| a.norm() > 1e-12).copied() {
            let phase = a.conj() / a.norm();
            for x in &mut self.amps {
                *x *= phase;
            }
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub(crate) fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

pub(crate) fn inner_unchecked(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `|⟨a|b⟩|²` without a dimension check.
#[inline]
pub(crate) fn overlap_sqr(a: &[C64], b: &[C64]) -> f64 {
    inner_unchecked(a, b).norm_sqr()
}

#[inline]
pub(crate) fn rotate_amplitudes(amps: &mut [C64], k: usize, l: usize, theta: f64, phi: f64) {
    if theta == 0.0 {
        return;
    }
    let (s, c) = (0.5 * theta).sin_cos();
    let (sp, cp) = phi.sin_cos();
    // -i sin(θ/2) e^{-iφ} couples l → k, -i sin(θ/2) e^{iφ} couples k → l
    let to_k = C64::new(-s * sp, -s * cp);
    let to_l = C64::new(s * sp, -s * cp);
    let ak = amps[k];
    let al = amps[l];
    amps[k] = ak * c + to_k * al;
    amps[l] = to_l * ak + al * c;
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// A two-level rotation `R_{k,l}(θ, φ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    pub k: usize,
    pub l: usize,
    pub theta: f64,
    pub phi: f64,
}

impl Rotation {
    pub fn new(k: usize, l: usize, theta: f64, phi: f64) -> Result<Self> {
        if k >= l {
            return Err(Error::InvalidArgument(format!(
                "rotation levels must satisfy k < l, got ({k}, {l})"
            )));
        }
        Ok(Self { k, l, theta, phi })
    }

    /// Nearest-neighbour rotation `R_{j,j+1}`.
    pub fn ladder(j: usize, theta: f64, phi: f64) -> Self {
        Self {
            k: j,
            l: j + 1,
            theta,
            phi,
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            theta: -self.theta,
            ..*self
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.k >= self.l || self.l >= dim {
            return Err(Error::Dimension(format!(
                "rotation ({}, {}) out of range for d = {dim}",
                self.k, self.l
            )));
        }
        Ok(())
    }

    /// Dense `d × d` matrix of the rotation.
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<C64>> {
        self.check_dim(dim)?;
        let mut m = DMatrix::<C64>::identity(dim, dim);
        for col in [self.k, self.l] {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[col] = C64::new(1.0, 0.0);
            rotate_amplitudes(&mut e, self.k, self.l, self.theta, self.phi);
            for (row, v) in e.into_iter().enumerate() {
                m[(row, col)] = v;
            }
        }
        Ok(m)
    }
}

/// `exp(-i θ/2 G_{k,l}(φ)) |state⟩`.
pub fn apply_rotation(state: &PureState, rot: &Rotation) -> Result<PureState> {
    let mut out = state.clone();
    out.rotate(rot)?;
    Ok(out)
}

/// Data encoding `g: (x, ω, b) ↦ x'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Diagonal weights, start from `|0⟩`.
    G1,
    /// Diagonal weights, start from `|+⟩`.
    G2,
    /// Dense `2(d-1) × D_x` weights, start from `|+⟩`.
    G3,
}

impl Encoding {
    pub const ALL: [Encoding; 3] = [Encoding::G1, Encoding::G2, Encoding::G3];

    pub fn initial_state(self, dim: usize) -> Result<PureState> {
        match self {
            Encoding::G1 => PureState::ground(dim),
            Encoding::G2 | Encoding::G3 => PureState::uniform(dim),
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::G1 => "g1",
            Encoding::G2 => "g2",
            Encoding::G3 => "g3",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g1" => Ok(Encoding::G1),
            "g2" => Ok(Encoding::G2),
            "g3" => Ok(Encoding::G3),
            other => Err(Error::InvalidArgument(format!(
                "unknown encoding '{other}'"
            ))),
        }
    }
}

/// Shape of the ansatz: encoding variant, qudit dimension, data dimension and
/// number of layers.
///
/// Each sublayer consumes `2 · transitions` angles, where `transitions` is
/// `d - 1` for ladder rotations and `K - 1` when rotating between the states
/// of a [`VirtualBasis`] of size `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub variant: Encoding,
    pub dim: usize,
    pub data_dim: usize,
    pub layers: usize,
    pub transitions: usize,
}

impl EncodingSpec {
    pub fn new(variant: Encoding, dim: usize, data_dim: usize, layers: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!("qudit dimension {dim} < 2")));
        }
        Self::build(variant, dim, data_dim, layers, dim - 1)
    }

    /// Spec for rotations between the `K` states of a virtual basis.
    pub fn with_basis(
        variant: Encoding,
        basis: &VirtualBasis,
        data_dim: usize,
        layers: usize,
    ) -> Result<Self> {
        Self::build(variant, basis.dim(), data_dim, layers, basis.len() - 1)
    }

    fn build(
        variant: Encoding,
        dim: usize,
        data_dim: usize,
        layers: usize,
        transitions: usize,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension(format!("qudit dimension {dim} < 2")));
        }
        if data_dim == 0 {
            return Err(Error::Encoding("data dimension must be positive".into()));
        }
        if layers == 0 {
            return Err(Error::Encoding("at least one layer is required".into()));
        }
        if transitions == 0 {
            return Err(Error::Encoding(
                "at least one transition is required".into(),
            ));
        }
        Ok(Self {
            variant,
            dim,
            data_dim,
            layers,
            transitions,
        })
    }

    /// Angles consumed by one sublayer, `2(d-1)` for ladder rotations.
    pub fn angles_per_sublayer(&self) -> usize {
        2 * self.transitions
    }

    /// Length of the transformed vector `x'` before padding.
    pub fn transformed_dim(&self) -> usize {
        match self.variant {
            Encoding::G1 | Encoding::G2 => self.data_dim,
            Encoding::G3 => self.angles_per_sublayer(),
        }
    }

    /// `x'` length after zero padding to a multiple of the sublayer width.
    pub fn padded_dim(&self) -> usize {
        self.sublayers_per_layer() * self.angles_per_sublayer()
    }

    pub fn sublayers_per_layer(&self) -> usize {
        self.transformed_dim().div_ceil(self.angles_per_sublayer())
    }

    pub fn weights_per_layer(&self) -> usize {
        match self.variant {
            Encoding::G1 | Encoding::G2 => self.data_dim,
            Encoding::G3 => self.angles_per_sublayer() * self.data_dim,
        }
    }

    pub fn params_per_layer(&self) -> usize {
        self.weights_per_layer() + self.transformed_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers * self.params_per_layer()
    }
}

/// Trainable weights and biases of every layer, stored flat.
///
/// Layer `l` occupies `values[l * P .. (l + 1) * P]` with `P` =
/// [`EncodingSpec::params_per_layer`]: first the weights (diagonal for g1/g2,
/// row-major `2(d-1) × D_x` for g3), then the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub values: Vec<f64>,
}

impl AnsatzParams {
    pub fn zeros(spec: &EncodingSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
        }
    }

    /// Identity weights and zero bias. Only meaningful for g1/g2.
    pub fn identity(spec: &EncodingSpec) -> Self {
        let mut p = Self::zeros(spec);
        let per = spec.params_per_layer();
        for layer in 0..spec.layers {
            match spec.variant {
                Encoding::G1 | Encoding::G2 => {
                    for i in 0..spec.data_dim {
                        p.values[layer * per + i] = 1.0;
                    }
                }
                Encoding::G3 => {
                    let n = spec.angles_per_sublayer().min(spec.data_dim);
                    for i in 0..n {
                        p.values[layer * per + i * spec.data_dim + i] = 1.0;
                    }
                }
            }
        }
        p
    }

    /// Weights uniform in `[-π, π]`, biases uniform in `[-π, π]`.
    pub fn random<R: Rng + ?Sized>(spec: &EncodingSpec, rng: &mut R) -> Self {
        Self {
            values: (0..spec.param_count())
                .map(|_| rng.gen_range(-PI..PI))
                .collect(),
        }
    }

    pub fn from_values(spec: &EncodingSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Encoding(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn layer<'a>(&'a self, spec: &EncodingSpec, layer: usize) -> (&'a [f64], &'a [f64]) {
        let per = spec.params_per_layer();
        let block = &self.values[layer * per..(layer + 1) * per];
        block.split_at(spec.weights_per_layer())
    }
}

/// Angles `(θ_i, φ_i)` indexed by layer, sublayer and transition.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleSchedule {
    pub layers: Vec<Vec<Vec<(f64, f64)>>>,
}

impl AngleSchedule {
    /// Ladder rotations in application order.
    pub fn rotations(&self) -> impl Iterator<Item = Rotation> + '_ {
        self.layers.iter().flatten().flat_map(|sub| {
            sub.iter()
                .enumerate()
                .map(|(i, &(theta, phi))| Rotation::ladder(i, theta, phi))
        })
    }

    pub fn sublayer_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }
}

/// Computes `x'` for one layer into `out` (length `padded_dim`, zero padded).
fn transform_layer(x: &[f64], spec: &EncodingSpec, weights: &[f64], bias: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    match spec.variant {
        Encoding::G1 | Encoding::G2 => {
            for i in 0..spec.data_dim {
                out[i] = weights[i] * x[i] + bias[i];
            }
        }
        Encoding::G3 => {
            let cols = spec.data_dim;
            for (i, o) in out.iter_mut().enumerate().take(spec.angles_per_sublayer()) {
                let row = &weights[i * cols..(i + 1) * cols];
                *o = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias[i];
            }
        }
    }
}

fn check_inputs(x: &[f64], spec: &EncodingSpec, params: &AnsatzParams) -> Result<()> {
    if x.len() != spec.data_dim {
        return Err(Error::Encoding(format!(
            "feature vector has length {}, encoding expects {}",
            x.len(),
            spec.data_dim
        )));
    }
    if params.values.len() != spec.param_count() {
        return Err(Error::Encoding(format!(
            "parameter vector has length {}, encoding expects {}",
            params.values.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

/// Maps a feature vector to the per-layer, per-sublayer angle schedule.
pub fn encode(x: &[f64], spec: &EncodingSpec, params: &AnsatzParams) -> Result<AngleSchedule> {
    check_inputs(x, spec, params)?;
    let width = spec.angles_per_sublayer();
    let mut buf = vec![0.0; spec.padded_dim()];
    let layers = (0..spec.layers)
        .map(|layer| {
            let (w, b) = params.layer(spec, layer);
            transform_layer(x, spec, w, b, &mut buf);
            buf.chunks(width)
                .map(|tuple| tuple.chunks(2).map(|p| (p[0], p[1])).collect())
                .collect()
        })
        .collect();
    Ok(AngleSchedule { layers })
}

/// Reusable evaluator for the ansatz; avoids per-call allocation of the
/// transformed vector.
#[derive(Clone, Debug)]
pub struct Circuit<'a> {
    spec: &'a EncodingSpec,
    basis: Option<&'a VirtualBasis>,
    initial: PureState,
}

impl<'a> Circuit<'a> {
    pub fn new(spec: &'a EncodingSpec, basis: Option<&'a VirtualBasis>) -> Result<Self> {
        if let Some(b) = basis {
            if b.dim() != spec.dim || b.len() - 1 != spec.transitions {
                return Err(Error::Encoding(format!(
                    "virtual basis of {} states in d = {} does not match the encoding (d = {}, {} transitions)",
                    b.len(),
                    b.dim(),
                    spec.dim,
                    spec.transitions
                )));
            }
        } else if spec.transitions != spec.dim - 1 {
            return Err(Error::Encoding(format!(
                "ladder encoding in d = {} needs {} transitions, spec has {}",
                spec.dim,
                spec.dim - 1,
                spec.transitions
            )));
        }
        Ok(Self {
            spec,
            basis,
            initial: spec.variant.initial_state(spec.dim)?,
        })
    }

    pub fn spec(&self) -> &EncodingSpec {
        self.spec
    }

    /// `U(x; φ)|initial⟩`.
    pub fn state(&self, x: &[f64], params: &AnsatzParams) -> Result<PureState> {
        check_inputs(x, self.spec, params)?;
        let mut amps = self.initial.amps.clone();
        let mut buf = vec![0.0; self.spec.padded_dim()];
        for layer in 0..self.spec.layers {
            let (w, b) = params.layer(self.spec, layer);
            transform_layer(x, self.spec, w, b, &mut buf);
            for tuple in buf.chunks(self.spec.angles_per_sublayer()) {
                for (i, pair) in tuple.chunks(2).enumerate() {
                    match self.basis {
                        None => rotate_amplitudes(&mut amps, i, i + 1, pair[0], pair[1]),
                        Some(basis) => basis.rotate(&mut amps, i, pair[0], pair[1]),
                    }
                }
            }
        }
        Ok(PureState { amps })
    }
}

/// Applies every sublayer of every layer to the encoding's initial state.
pub fn build_circuit(
    x: &[f64],
    spec: &EncodingSpec,
    params: &AnsatzParams,
    basis: Option<&VirtualBasis>,
) -> Result<PureState> {
    Circuit::new(spec, basis)?.state(x, params)
}

/// Pure states used as rotation endpoints instead of computational levels.
///
/// The generator between members `k` and `k+1` is
/// `τ(φ) = e^{-iφ}|ψ_k⟩⟨ψ_{k+1}| + e^{iφ}|ψ_{k+1}⟩⟨ψ_k|`, which reduces to
/// `G_{k,k+1}(φ)` for an orthonormal basis. Rotations are the exact matrix
/// exponentials `exp(-i θ/2 τ(φ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualBasis {
    states: Vec<PureState>,
}

impl VirtualBasis {
    pub fn new(states: Vec<PureState>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidArgument(
                "a virtual basis needs at least two states".into(),
            ));
        }
        let d = states[0].dim();
        for s in &states {
            if s.dim() != d {
                return Err(Error::Dimension(
                    "virtual basis states differ in dimension".into(),
                ));
            }
            if (s.norm_sqr() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "virtual basis state not normalized".into(),
                ));
            }
        }
        Ok(Self { states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    /// Generator `τ_{k,k+1}(φ)` as a dense Hermitian matrix.
    pub fn generator(&self, k: usize, phi: f64) -> DMatrix<C64> {
        let d = self.dim();
        let a = self.states[k].amplitudes();
        let b = self.states[k + 1].amplitudes();
        let e = C64::from_polar(1.0, -phi);
        DMatrix::from_fn(d, d, |r, c| {
            e * a[r] * b[c].conj() + e.conj() * b[r] * a[c].conj()
        })
    }

    /// `exp(-i θ/2 τ_{k,k+1}(φ))`.
    pub fn rotation_matrix(&self, k: usize, theta: f64, phi: f64) -> DMatrix<C64> {
        let eig = self.generator(k, phi).symmetric_eigen();
        let d = self.dim();
        let phases: Vec<C64> = eig
            .eigenvalues
            .iter()
            .map(|&lam| C64::from_polar(1.0, -0.5 * theta * lam))
            .collect();
        let v = &eig.eigenvectors;
        DMatrix::from_fn(d, d, |r, c| {
            (0..d)
                .map(|m| v[(r, m)] * phases[m] * v[(c, m)].conj())
                .sum()
        })
    }

    fn rotate(&self, amps: &mut [C64], k: usize, theta: f64, phi: f64) {
        if theta == 0.0 {
            return;
        }
        let u = self.rotation_matrix(k, theta, phi);
        let d = amps.len();
        let out: Vec<C64> = (0..d)
            .map(|r| (0..d).map(|c| u[(r, c)] * amps[c]).sum())
            .collect();
        amps.copy_from_slice(&out);
    }
}

/// Ladder rotations `R_{k,k+1}(θ_k, φ_k)`, `k = 0..d-2`, that take `|0⟩` to
/// `target`.
///
/// Writing the target (after removing the global phase of its first
/// amplitude) as `Σ_j c_j e^{iβ_j}|j⟩`, the angles are
/// `θ_k = 2 arccos(c_k / P_k)` with `P_0 = 1`, `P_k = Π_{l<k} sin(θ_l/2)`, and
/// `φ_k = β_{k+1} + (k+1)π/2 - Σ_{l<k} φ_l`.
pub fn synthesize_reference_unitary(target: &PureState) -> Result<Vec<Rotation>> {
    let d = target.dim();
    if (target.norm_sqr() - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidArgument(
            "target state is not normalized".into(),
        ));
    }
    let mut t = target.clone();
    t.fix_phase();
    let amps = t.amplitudes();

    let mut rots = Vec::with_capacity(d - 1);
    let mut p = 1.0f64;
    let mut phi_sum = 0.0f64;
    for k in 0..d - 1 {
        let c = amps[k].norm();
        let theta = if p < 1e-12 && c < 1e-12 {
            0.0
        } else {
            let ratio = c / p;
            if ratio > 1.0 + 1e-9 {
                return Err(Error::Numerical(format!(
                    "amplitude ratio {ratio} exceeds 1 at level {k}"
                )));
            }
            2.0 * ratio.clamp(0.0, 1.0).acos()
        };
        let next = amps[k + 1];
        let beta = if next.norm() > 1e-12 { next.arg() } else { 0.0 };
        let phi = beta + (k as f64 + 1.0) * FRAC_PI_2 - phi_sum;
        rots.push(Rotation::ladder(k, theta, phi));
        phi_sum += phi;
        p *= (0.5 * theta).sin();
    }
    Ok(rots)
}

/// Applies a rotation sequence to `|0⟩`.
pub fn prepare(dim: usize, rotations: &[Rotation]) -> Result<PureState> {
    let mut s = PureState::ground(dim)?;
    for r in rotations {
        s.rotate(r)?;
    }
    Ok(s)
}

/// The inverse sequence: reversed order, negated angles.
pub fn inverse_sequence(rotations: &[Rotation]) -> Vec<Rotation> {
    rotations.iter().rev().map(Rotation::inverse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Taylor series of exp(-i θ/2 G) for a dense generator.
    fn expm_series(g: &DMatrix<C64>, theta: f64) -> DMatrix<C64> {
        let d = g.nrows();
        let a = g * c(0.0, -0.5 * theta);
        let mut term = DMatrix::<C64>::identity(d, d);
        let mut sum = term.clone();
        for n in 1..60 {
            term = &term * &a / c(n as f64, 0.0);
            sum += &term;
        }
        sum
    }

    fn pauli_generator(d: usize, k: usize, l: usize, phi: f64) -> DMatrix<C64> {
        let mut sx = DMatrix::<C64>::zeros(d, d);
        sx[(k, l)] = c(1.0, 0.0);
        sx[(l, k)] = c(1.0, 0.0);
        let mut sy = DMatrix::<C64>::zeros(d, d);
        sy[(k, l)] = c(0.0, 1.0);
        sy[(l, k)] = c(0.0, -1.0);
        sx * c(phi.cos(), 0.0) - sy * c(phi.sin(), 0.0)
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_angle_is_identity() {
        let s = PureState::ground(2).unwrap();
        let out = apply_rotation(&s, &Rotation::ladder(0, 0.0, 1.234)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn pi_rotation_transfers_population_with_minus_i() {
        let out = apply_rotation(
            &PureState::ground(2).unwrap(),
            &Rotation::ladder(0, PI, 0.0),
        )
        .unwrap();
        // oracle: series exponential of the generator applied to |0⟩
        let u = expm_series(&pauli_generator(2, 0, 1, 0.0), PI);
        assert!((u[(1, 0)] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((out.amplitudes()[1] - u[(1, 0)]).norm() < 1e-12);
        assert!(out.amplitudes()[0].norm() < 1e-12);
    }

    #[test]
    fn rotation_on_empty_subspace_is_inert() {
        let s = PureState::ground(3).unwrap();
        let out = apply_rotation(&s, &Rotation::ladder(1, FRAC_PI_2, PI / 3.0)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rotation_out_of_range_errors() {
        let s = PureState::ground(2).unwrap();
        assert!(matches!(
            apply_rotation(&s, &Rotation::ladder(1, 1.0, 0.0)),
            Err(Error::Dimension(_))
        ));
        assert!(Rotation::new(2, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_series_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let d = rng.gen_range(2..6);
            let k = rng.gen_range(0..d - 1);
            let l = rng.gen_range(k + 1..d);
            let theta = rng.gen_range(-7.0..7.0);
            let phi = rng.gen_range(-7.0..7.0);
            let m = Rotation::new(k, l, theta, phi).unwrap().matrix(d).unwrap();
            let oracle = expm_series(&pauli_generator(d, k, l, phi), theta);
            assert!(max_abs(&(m - oracle)) < 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let z = PureState::ground(2).unwrap();
        let one = PureState::basis(2, 1).unwrap();
        let plus = PureState::uniform(2).unwrap();
        assert_eq!(fidelity(&z, &z).unwrap(), 1.0);
        assert_eq!(fidelity(&z, &one).unwrap(), 0.0);
        assert!((fidelity(&z, &plus).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity(&z, &PureState::ground(3).unwrap()).is_err());
    }

    #[test]
    fn encode_qutrit_g1_assigns_theta_phi_pairs() {
        let spec = EncodingSpec::new(Encoding::G1, 3, 4, 1).unwrap();
        let params = AnsatzParams::identity(&spec);
        let sched = encode(&[0.1, 0.2, 0.3, 0.4], &spec, &params).unwrap();
        assert_eq!(sched.layers.len(), 1);
        assert_eq!(sched.layers[0], vec![vec![(0.1, 0.2), (0.3, 0.4)]]);
    }

    #[test]
    fn encode_qubit_g2_uses_two_sublayers() {
        let spec = EncodingSpec::new(Encoding::G2, 2, 4, 1).unwrap();
        assert_eq!(spec.sublayers_per_layer(), 2);
        let sched = encode(&[1.0, 2.0, 3.0, 4.0], &spec, &AnsatzParams::identity(&spec)).unwrap();
        assert_eq!(sched.layers[0], vec![vec![(1.0, 2.0)], vec![(3.0, 4.0)]]);
    }

    #[test]
    fn encode_pads_with_zero_angles() {
        let spec = EncodingSpec::new(Encoding::G2, 4, 4, 1).unwrap();
        assert_eq!(spec.padded_dim(), 6);
        let sched = encode(&[1.0, 2.0, 3.0, 4.0], &spec, &AnsatzParams::identity(&spec)).unwrap();
        assert_eq!(
            sched.layers[0],
            vec![vec![(1.0, 2.0), (3.0, 4.0), (0.0, 0.0)]]
        );
    }

    #[test]
    fn g3_is_a_single_dense_sublayer() {
        let spec = EncodingSpec::new(Encoding::G3, 3, 2, 1).unwrap();
        assert_eq!(spec.sublayers_per_layer(), 1);
        assert_eq!(spec.params_per_layer(), 4 * 2 + 4);
        let params = AnsatzParams::from_values(
            &spec,
            vec![1.0, 2.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.5, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let sched = encode(&[3.0, 4.0], &spec, &params).unwrap();
        assert_eq!(sched.layers[0], vec![vec![(11.5, 4.0), (7.0, -3.0)]]);
    }

    #[test]
    fn zero_parameters_give_identity_circuit() {
        for variant in Encoding::ALL {
            let spec = EncodingSpec::new(variant, 3, 5, 2).unwrap();
            let params = AnsatzParams::zeros(&spec);
            let x = [0.3, -1.0, 2.0, 0.5, 1.5];
            assert!(encode(&x, &spec, &params)
                .unwrap()
                .rotations()
                .all(|r| r.theta == 0.0 && r.phi == 0.0));
            let s = build_circuit(&x, &spec, &params, None).unwrap();
            assert_eq!(s, variant.initial_state(3).unwrap());
        }
    }

    #[test]
    fn encode_rejects_wrong_feature_length() {
        let spec = EncodingSpec::new(Encoding::G1, 3, 4, 1).unwrap();
        let params = AnsatzParams::zeros(&spec);
        assert!(matches!(
            encode(&[1.0; 3], &spec, &params),
            Err(Error::Encoding(_))
        ));
        assert!(matches!(
            build_circuit(&[1.0; 5], &spec, &params, None),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn qutrit_g1_matches_closed_form_coefficients() {
        let spec = EncodingSpec::new(Encoding::G1, 3, 4, 1).unwrap();
        let params = AnsatzParams::identity(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0 * PI..2.0 * PI)).collect();
            let (t0, p0, t1, p1) = (x[0], x[1], x[2], x[3]);
            let s = build_circuit(&x, &spec, &params, None).unwrap();
            let expect = [
                c((t0 / 2.0).cos(), 0.0),
                c(0.0, -1.0) * (t0 / 2.0).sin() * (t1 / 2.0).cos() * C64::from_polar(1.0, p0),
                -(t0 / 2.0).sin() * (t1 / 2.0).sin() * C64::from_polar(1.0, p0 + p1),
            ];
            for (a, e) in s.amplitudes().iter().zip(expect) {
                assert!((a - e).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_layers_compose_two_single_layer_circuits() {
        let spec2 = EncodingSpec::new(Encoding::G1, 2, 2, 2).unwrap();
        let spec1 = EncodingSpec::new(Encoding::G1, 2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = AnsatzParams::random(&spec2, &mut rng);
        let x = [0.7, -0.4];
        let full = build_circuit(&x, &spec2, &params, None).unwrap();

        let mut s = PureState::ground(2).unwrap();
        for layer in 0..2 {
            let p =
                AnsatzParams::from_values(&spec1, params.values[layer * 4..layer * 4 + 4].to_vec())
                    .unwrap();
            for r in encode(&x, &spec1, &p).unwrap().rotations() {
                s.rotate(&r).unwrap();
            }
        }
        for (a, b) in full.amplitudes().iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn reference_unitary_for_ground_state_has_zero_angles() {
        let rots = synthesize_reference_unitary(&PureState::ground(4).unwrap()).unwrap();
        assert_eq!(rots.len(), 3);
        assert!(rots.iter().all(|r| r.theta == 0.0));
    }

    #[test]
    fn reference_unitary_for_qubit_plus() {
        let target = PureState::uniform(2).unwrap();
        let rots = synthesize_reference_unitary(&target).unwrap();
        assert!((rots[0].theta - FRAC_PI_2).abs() < 1e-12);
        let s = prepare(2, &rots).unwrap();
        assert!((fidelity(&s, &target).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_unitary_handles_sparse_targets() {
        // |2⟩ forces P_k = 0 after the state is fully transferred
        for target in [
            PureState::basis(3, 2).unwrap(),
            PureState::basis(4, 1).unwrap(),
            PureState::normalized(vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
                .unwrap(),
        ] {
            let s = prepare(
                target.dim(),
                &synthesize_reference_unitary(&target).unwrap(),
            )
            .unwrap();
            assert!((fidelity(&s, &target).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn virtual_basis_with_orthonormal_states_reduces_to_ladder() {
        let d = 3;
        let basis =
            VirtualBasis::new((0..d).map(|k| PureState::basis(d, k).unwrap()).collect()).unwrap();
        for (theta, phi) in [(0.7, 0.3), (-2.0, 1.1), (3.0, -2.5)] {
            let m = basis.rotation_matrix(1, theta, phi);
            let r = Rotation::ladder(1, theta, phi).matrix(d).unwrap();
            assert!(max_abs(&(m - r)) < 1e-12);
        }
    }

    #[test]
    fn virtual_rotation_is_unitary_and_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let states = (0..3)
            .map(|_| PureState::random(2, &mut rng).unwrap())
            .collect();
        let basis = VirtualBasis::new(states).unwrap();
        let u = basis.rotation_matrix(0, 1.3, 0.4);
        let oracle = expm_series(&basis.generator(0, 0.4), 1.3);
        assert!(max_abs(&(&u - oracle)) < 1e-12);
        let eye = DMatrix::<C64>::identity(2, 2);
        assert!(max_abs(&(u.adjoint() * &u - eye)) < 1e-12);
    }

    #[test]
    fn circuit_rejects_mismatched_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = (0..3)
            .map(|_| PureState::random(2, &mut rng).unwrap())
            .collect();
        let basis = VirtualBasis::new(states).unwrap();
        let ladder = EncodingSpec::new(Encoding::G1, 2, 4, 1).unwrap();
        assert!(Circuit::new(&ladder, Some(&basis)).is_err());
        let spec = EncodingSpec::with_basis(Encoding::G1, &basis, 4, 1).unwrap();
        assert_eq!(spec.sublayers_per_layer(), 1);
        let s = build_circuit(
            &[0.1, 0.2, 0.3, 0.4],
            &spec,
            &AnsatzParams::identity(&spec),
            Some(&basis),
        )
        .unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
