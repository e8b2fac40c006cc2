//! Open-system simulation of the classifier under decay and dephasing.
//!
//! The density matrix evolves under
//! `ρ̇ = -i[H, ρ] + Σ_i (1/T_i)(2 O_i ρ O_i† - {O_i† O_i, ρ})`
//! with `O_1 = Σ_j |j⟩⟨j+1|` (decay, rate `1/T1`) and `O_2 = Σ_j j|j⟩⟨j|`
//! (dephasing, rate `1/T2`). During a pulse on `(j, j+1)` the drive is
//! `H = (Ω_R/2)(e^{iφ}|j⟩⟨j+1| + h.c.)`; between pulses `H = 0`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Samples;
use crate::metric::{argmax, ReferenceSet};
use crate::optim::{spsa, SpsaConfig};
use crate::qudit::{
    encode, inverse_sequence, synthesize_reference_unitary, AnsatzParams, EncodingSpec, PureState,
    Rotation,
};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Row-major `d × d` density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_pure(state: &PureState) -> Self {
        let a = state.amplitudes();
        let dim = a.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                entries.push(a[r] * a[c].conj());
            }
        }
        Self { dim, entries }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = C64::new(1.0 / dim as f64, 0.0);
        }
        Self { dim, entries }
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "density matrix must be square with d >= 2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dim = m.nrows();
        let rho = Self {
            dim,
            entries: (0..dim * dim).map(|i| m[(i / dim, i % dim)]).collect(),
        };
        if rho.hermiticity_error() > 1e-10 {
            return Err(Error::InvalidArgument(
                "density matrix is not Hermitian".into(),
            ));
        }
        if (rho.trace().re - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {} differs from 1",
                rho.trace().re
            )));
        }
        if rho.min_eigenvalue() < -1e-8 {
            return Err(Error::InvalidArgument(
                "density matrix is not positive".into(),
            ));
        }
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[r * self.dim + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `max |ρ - ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for r in 0..self.dim {
            for c in 0..=r {
                err = err.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        err
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.min()
    }

    /// `max |ρ_ij - σ_ij|`.
    pub fn max_entry_distance(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Physical parameters of the driven qudit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Decay time in seconds.
    pub t1: f64,
    /// Dephasing time in seconds.
    pub t2: f64,
    /// Rabi frequency `Ω_R` in rad/s.
    pub rabi: f64,
    /// Level gaps `ω_{j,j+1}` in rad/s; kept for reference, the
    /// interaction-picture dynamics do not depend on them.
    pub splittings: Vec<f64>,
}

/// `Ω_R = 2π · 10 MHz`.
pub const EXPERIMENTAL_RABI: f64 = 2.0 * PI * 10e6;
pub const EXPERIMENTAL_T1: f64 = 100e-3;
pub const EXPERIMENTAL_SPLITTING: f64 = 2.0 * PI * 3e9;
/// Decay and dephasing times used for the noiseless limit.
pub const NOISELESS_T: f64 = 1e9;

impl NoiseModel {
    pub fn new(t1: f64, t2: f64, rabi: f64, splittings: Vec<f64>) -> Result<Self> {
        for (name, v) in [("T1", t1), ("T2", t2), ("Rabi frequency", rabi)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            t1,
            t2,
            rabi,
            splittings,
        })
    }

    /// Experimental drive and decay with the given dephasing time.
    pub fn experimental(dim: usize, t2: f64) -> Result<Self> {
        Self::new(
            EXPERIMENTAL_T1,
            t2,
            EXPERIMENTAL_RABI,
            vec![EXPERIMENTAL_SPLITTING; dim.saturating_sub(1)],
        )
    }

    pub fn noiseless(dim: usize) -> Result<Self> {
        Self::new(
            NOISELESS_T,
            NOISELESS_T,
            EXPERIMENTAL_RABI,
            vec![EXPERIMENTAL_SPLITTING; dim.saturating_sub(1)],
        )
    }

    fn decay_rate(&self) -> f64 {
        1.0 / self.t1
    }

    fn dephasing_rate(&self) -> f64 {
        1.0 / self.t2
    }

    /// Upper bound on the dissipative rates in dimension `d`.
    fn stiffness(&self, dim: usize) -> f64 {
        let d = (dim - 1) as f64;
        2.0 * d * self.decay_rate() + 2.0 * d * d * self.dephasing_rate()
    }
}

/// One drive pulse, or an idle period when `transition` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub transition: Option<usize>,
    /// Seconds.
    pub duration: f64,
    /// Drive phase `φ` of `H`.
    pub phase: f64,
}

impl Pulse {
    /// Pulse realizing `R_{j,j+1}(θ, φ)`: duration `|θ|/Ω_R`, drive phase
    /// `-φ`, shifted by `π` when `θ < 0`.
    pub fn from_rotation(rot: &Rotation, model: &NoiseModel) -> Result<Self> {
        if rot.l != rot.k + 1 {
            return Err(Error::InvalidArgument(format!(
                "only nearest-neighbour transitions can be driven, got ({}, {})",
                rot.k, rot.l
            )));
        }
        let phi = if rot.theta < 0.0 {
            rot.phi + PI
        } else {
            rot.phi
        };
        Ok(Self {
            transition: Some(rot.k),
            duration: rot.theta.abs() / model.rabi,
            phase: -phi,
        })
    }

    pub fn idle(duration: f64) -> Self {
        Self {
            transition: None,
            duration,
            phase: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub pulses: Vec<Pulse>,
}

impl PulseSchedule {
    pub fn from_rotations<'a, I>(rotations: I, model: &NoiseModel) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Rotation>,
    {
        Ok(Self {
            pulses: rotations
                .into_iter()
                .map(|r| Pulse::from_rotation(r, model))
                .collect::<Result<_>>()?,
        })
    }

    pub fn total_duration(&self) -> f64 {
        self.pulses.iter().map(|p| p.duration).sum()
    }
}

/// Writes `ρ̇` into `out`.
pub fn rhs(
    rho: &DensityMatrix,
    pulse: Option<&Pulse>,
    model: &NoiseModel,
    out: &mut DensityMatrix,
) {
    rhs_raw(&rho.entries, rho.dim, pulse, model, &mut out.entries);
}

fn rhs_raw(rho: &[C64], d: usize, pulse: Option<&Pulse>, model: &NoiseModel, out: &mut [C64]) {
    let g1 = model.decay_rate();
    let g2 = model.dephasing_rate();
    for r in 0..d {
        for c in 0..d {
            let i = r * d + c;
            // dephasing: -(1/T2)(r - c)² ρ_rc
            let dr = r as f64 - c as f64;
            let mut v = rho[i] * (-g2 * dr * dr);
            // decay: (1/T1)(2 ρ_{r+1,c+1} - (P_r + P_c) ρ_rc), P = diag(0, 1, …, 1)
            let mut decay = ZERO;
            if r + 1 < d && c + 1 < d {
                decay += rho[(r + 1) * d + c + 1] * 2.0;
            }
            let p = (r > 0) as u8 as f64 + (c > 0) as u8 as f64;
            decay -= rho[i] * p;
            v += decay * g1;
            out[i] = v;
        }
    }
    if let Some(Pulse {
        transition: Some(j),
        phase,
        ..
    }) = pulse
    {
        let j = *j;
        let h = C64::from_polar(0.5 * model.rabi, *phase);
        let hc = h.conj();
        let minus_i = C64::new(0.0, -1.0);
        // Hρ: rows j and j+1
        for c in 0..d {
            out[j * d + c] += minus_i * h * rho[(j + 1) * d + c];
            out[(j + 1) * d + c] += minus_i * hc * rho[j * d + c];
        }
        // -ρH: columns j and j+1
        for r in 0..d {
            out[r * d + j + 1] -= minus_i * rho[r * d + j] * h;
            out[r * d + j] -= minus_i * rho[r * d + j + 1] * hc;
        }
    }
}

/// Fixed-step fourth-order Runge-Kutta integrator with reusable buffers.
#[derive(Clone, Debug)]
pub struct Integrator {
    dim: usize,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Integrator {
    pub fn new(dim: usize) -> Self {
        let z = vec![ZERO; dim * dim];
        Self {
            dim,
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Steps used for one pulse: at most `t_p/200` and `1/(50 Ω_R)` each,
    /// and small against the dissipative rates.
    pub fn steps_for(pulse: &Pulse, model: &NoiseModel, dim: usize) -> usize {
        let by_drive = if pulse.transition.is_some() {
            (50.0 * model.rabi * pulse.duration).ceil()
        } else {
            0.0
        };
        let by_rate = (20.0 * model.stiffness(dim) * pulse.duration).ceil();
        let n = by_drive.max(by_rate).max(200.0);
        n.min(1e9) as usize
    }

    /// Integrates through one pulse. `observe` sees the state after every
    /// step.
    pub fn pulse<F: FnMut(&DensityMatrix)>(
        &mut self,
        rho: &mut DensityMatrix,
        pulse: &Pulse,
        model: &NoiseModel,
        mut observe: F,
    ) -> Result<()> {
        if !(pulse.duration > 0.0) {
            return Ok(());
        }
        let d = self.dim;
        let n = Self::steps_for(pulse, model, d);
        let h = pulse.duration / n as f64;
        let p = Some(pulse);
        for _ in 0..n {
            let y = &mut rho.entries;
            rhs_raw(y, d, p, model, &mut self.k1);
            for i in 0..y.len() {
                self.tmp[i] = y[i] + self.k1[i] * (0.5 * h);
            }
            rhs_raw(&self.tmp, d, p, model, &mut self.k2);
            for i in 0..y.len() {
                self.tmp[i] = y[i] + self.k2[i] * (0.5 * h);
            }
            rhs_raw(&self.tmp, d, p, model, &mut self.k3);
            for i in 0..y.len() {
                self.tmp[i] = y[i] + self.k3[i] * h;
            }
            rhs_raw(&self.tmp, d, p, model, &mut self.k4);
            for i in 0..y.len() {
                y[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * (h / 6.0);
            }
            observe(rho);
        }
        let tr = rho.trace();
        if !tr.re.is_finite() || (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "trace drifted to {tr} during integration"
            )));
        }
        Ok(())
    }
}

/// Integrates the master equation through every pulse in order.
pub fn evolve_schedule(
    rho0: &DensityMatrix,
    schedule: &PulseSchedule,
    model: &NoiseModel,
) -> Result<DensityMatrix> {
    evolve_schedule_observed(rho0, schedule, model, |_| {})
}

/// As [`evolve_schedule`], calling `observe` after every integrator step.
pub fn evolve_schedule_observed<F: FnMut(&DensityMatrix)>(
    rho0: &DensityMatrix,
    schedule: &PulseSchedule,
    model: &NoiseModel,
    mut observe: F,
) -> Result<DensityMatrix> {
    let mut rho = rho0.clone();
    let mut integ = Integrator::new(rho.dim);
    for p in &schedule.pulses {
        if let Some(j) = p.transition {
            if j + 1 >= rho.dim {
                return Err(Error::Dimension(format!(
                    "pulse on ({j}, {}) out of range for d = {}",
                    j + 1,
                    rho.dim
                )));
            }
        }
        integ.pulse(&mut rho, p, model, &mut observe)?;
    }
    Ok(rho)
}

/// `ρ_00`.
pub fn noisy_fidelity_to_ground(rho: &DensityMatrix) -> f64 {
    let v = rho.get(0, 0);
    debug_assert!(v.im.abs() < 1e-10, "imaginary ground population {}", v.im);
    v.re
}

/// Explicit classifier simulated with pulses: encode from the encoding's
/// initial state, then undo the reference preparation of a class and read
/// the ground population.
#[derive(Clone, Debug)]
pub struct NoisyClassifier<'a> {
    spec: &'a EncodingSpec,
    model: &'a NoiseModel,
    initial: DensityMatrix,
    inverse_refs: Vec<PulseSchedule>,
}

impl<'a> NoisyClassifier<'a> {
    pub fn new(spec: &'a EncodingSpec, refs: &ReferenceSet, model: &'a NoiseModel) -> Result<Self> {
        if refs.dim() != spec.dim {
            return Err(Error::Dimension(format!(
                "reference states in d = {} for an encoding in d = {}",
                refs.dim(),
                spec.dim
            )));
        }
        if spec.transitions != spec.dim - 1 {
            return Err(Error::Encoding(
                "pulse simulation needs the ladder basis".into(),
            ));
        }
        let inverse_refs = refs
            .centers()
            .iter()
            .map(|c| {
                let prep = synthesize_reference_unitary(c)?;
                PulseSchedule::from_rotations(&inverse_sequence(&prep), model)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            spec,
            model,
            initial: DensityMatrix::from_pure(&spec.variant.initial_state(spec.dim)?),
            inverse_refs,
        })
    }

    pub fn classes(&self) -> usize {
        self.inverse_refs.len()
    }

    /// `U(x)` as a pulse schedule.
    pub fn encoding_schedule(&self, x: &[f64], params: &AnsatzParams) -> Result<PulseSchedule> {
        let angles = encode(x, self.spec, params)?;
        let rots: Vec<Rotation> = angles.rotations().collect();
        PulseSchedule::from_rotations(&rots, self.model)
    }

    /// State after `U(x)`.
    pub fn encoded(&self, x: &[f64], params: &AnsatzParams) -> Result<DensityMatrix> {
        evolve_schedule(
            &self.initial,
            &self.encoding_schedule(x, params)?,
            self.model,
        )
    }

    /// Ground population after `U(x)` then `U_k^R†`.
    pub fn fidelity(&self, x: &[f64], params: &AnsatzParams, class: usize) -> Result<f64> {
        let rho = self.encoded(x, params)?;
        let out = evolve_schedule(&rho, &self.inverse_refs[class], self.model)?;
        Ok(noisy_fidelity_to_ground(&out))
    }

    /// Ground population for every class.
    pub fn fidelities(&self, x: &[f64], params: &AnsatzParams) -> Result<Vec<f64>> {
        let rho = self.encoded(x, params)?;
        self.inverse_refs
            .iter()
            .map(|inv| {
                Ok(noisy_fidelity_to_ground(&evolve_schedule(
                    &rho, inv, self.model,
                )?))
            })
            .collect()
    }

    /// `1 - mean_i ρ_00(x_i, y_i)`.
    pub fn loss(&self, train: &Samples, params: &AnsatzParams) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("empty training split".into()));
        }
        let fids: Vec<f64> = train
            .features
            .par_iter()
            .zip(&train.labels)
            .map(|(x, &y)| self.fidelity(x, params, y))
            .collect::<Result<_>>()?;
        Ok(1.0 - fids.iter().sum::<f64>() / fids.len() as f64)
    }

    pub fn classify(&self, x: &[f64], params: &AnsatzParams) -> Result<usize> {
        Ok(argmax(&self.fidelities(x, params)?))
    }
}

/// Fraction of test points whose largest ground population belongs to their
/// own class.
pub fn noisy_test(
    params: &AnsatzParams,
    test: &Samples,
    classifier: &NoisyClassifier<'_>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    let hits: Vec<bool> = test
        .features
        .par_iter()
        .zip(&test.labels)
        .map(|(x, &y)| Ok(classifier.classify(x, params)? == y))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / test.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyTrainConfig {
    pub spsa: SpsaConfig,
    pub runs: usize,
    pub seed: u64,
}

impl Default for NoisyTrainConfig {
    fn default() -> Self {
        Self {
            spsa: SpsaConfig::default(),
            runs: 50,
            seed: 0,
        }
    }
}

/// One run of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyRun {
    pub run: usize,
    /// Whether the run started from fresh random parameters.
    pub reinitialized: bool,
    pub train_loss: f64,
    pub loss_history: Vec<f64>,
    pub test_accuracy: f64,
    /// False when the integrator failed and the run was cut short.
    pub completed: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyReport {
    pub runs: Vec<NoisyRun>,
    pub best_params: Vec<f64>,
    pub best_accuracy: f64,
}

impl NoisyReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }
}

/// Chained SPSA training under noise.
///
/// Each run performs `spsa.iterations` SPSA steps. The next run starts from
/// the current run's best parameters when its test accuracy beat every
/// earlier run, otherwise from fresh random parameters.
pub fn spsa_train(
    train: &Samples,
    test: &Samples,
    classifier: &NoisyClassifier<'_>,
    config: &NoisyTrainConfig,
) -> Result<NoisyReport> {
    if train.classes != classifier.classes() {
        return Err(Error::InvalidArgument(format!(
            "{} classes in the data, {} reference states",
            train.classes,
            classifier.classes()
        )));
    }
    if config.runs == 0 {
        return Err(Error::Config("at least one run is required".into()));
    }
    let spec = classifier.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut start = AnsatzParams::random(spec, &mut rng).values;
    let mut reinitialized = true;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_params = start.clone();
    let mut runs = Vec::with_capacity(config.runs);

    for run in 0..config.runs {
        let t0 = Instant::now();
        let objective = |v: &[f64]| {
            let p = AnsatzParams { values: v.to_vec() };
            classifier.loss(train, &p).unwrap_or(f64::NAN)
        };
        let min = spsa(objective, &start, &config.spsa, &mut rng);
        let params = AnsatzParams {
            values: min.params.clone(),
        };
        let test_accuracy = noisy_test(&params, test, classifier)?;
        runs.push(NoisyRun {
            run,
            reinitialized,
            train_loss: min.loss,
            loss_history: min.history,
            test_accuracy,
            completed: min.converged,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
        if test_accuracy > best_accuracy {
            best_accuracy = test_accuracy;
            best_params = min.params.clone();
            start = min.params;
            reinitialized = false;
        } else {
            start = AnsatzParams::random(spec, &mut rng).values;
            reinitialized = true;
        }
    }

    Ok(NoisyReport {
        runs,
        best_params,
        best_accuracy,
    })
}

/// Logarithmic grid of `points` values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        n => (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// Random ladder schedule of `len` rotations in dimension `dim`.
pub fn random_rotations<R: Rng + ?Sized>(dim: usize, len: usize, rng: &mut R) -> Vec<Rotation> {
    (0..len)
        .map(|_| {
            Rotation::ladder(
                rng.gen_range(0..dim - 1),
                rng.gen_range(-2.0 * PI..2.0 * PI),
                rng.gen_range(-PI..PI),
            )
        })
        .collect()
}
