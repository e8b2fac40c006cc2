//! Genetic search for sets of maximally orthogonal states.
//!
//! An individual is a set of `K` pure states in dimension `d`. Its fitness is
//! `-E_W`, where `E_W = Σ_{i≠j} W(|⟨ψ_i|ψ_j⟩|)` and `W(x) = x^p`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metric::ReferenceSet;
use crate::qudit::{inner_unchecked, PureState, VirtualBasis};
use crate::{Error, Result, C64};

/// `E_W` with `W(x) = x^exponent`, summed over ordered pairs.
pub fn mos_energy(states: &[PureState], exponent: f64) -> Result<f64> {
    check_states(states)?;
    if !(exponent > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weighting exponent must be positive, got {exponent}"
        )));
    }
    Ok(energy(states, exponent))
}

fn check_states(states: &[PureState]) -> Result<()> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 states, got {}",
            states.len()
        )));
    }
    let d = states[0].dim();
    if states.iter().any(|s| s.dim() != d) {
        return Err(Error::Dimension("states differ in dimension".into()));
    }
    Ok(())
}

fn energy(states: &[PureState], exponent: f64) -> f64 {
    let half = 0.5 * exponent;
    let mut e = 0.0;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let f = inner_unchecked(states[i].amplitudes(), states[j].amplitudes()).norm_sqr();
            e += 2.0 * f.powf(half);
        }
    }
    e
}

/// `|⟨ψ_i|ψ_j⟩|` for every pair.
pub fn gram_matrix(states: &[PureState]) -> DMatrix<f64> {
    let k = states.len();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            inner_unchecked(states[i].amplitudes(), states[j].amplitudes())
                .norm()
                .min(1.0)
        }
    })
}

/// Largest `|⟨ψ_i|ψ_j⟩|²` over distinct pairs.
pub fn max_pairwise_fidelity(states: &[PureState]) -> f64 {
    let g = gram_matrix(states);
    let mut m: f64 = 0.0;
    for i in 0..states.len() {
        for j in 0..i {
            m = m.max(g[(i, j)].powi(2));
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub max_generations: usize,
    /// Stop when the best fitness improved by less than 1e-10 over this many
    /// generations.
    pub convergence_window: usize,
    pub exponent: f64,
    pub local_steps: usize,
    pub local_step_size: f64,
    pub tournament_size: usize,
    pub elite: usize,
    pub seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            crossover_rate: 0.7,
            mutation_rate: 0.2,
            max_generations: 500,
            convergence_window: 50,
            exponent: 2.0,
            local_steps: 50,
            local_step_size: 0.01,
            tournament_size: 3,
            elite: 2,
            seed: 0,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_size < 2 {
            return bad(format!("population size {} < 2", self.population_size));
        }
        for (name, p) in [
            ("crossover", self.crossover_rate),
            ("mutation", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        if !(self.exponent > 0.0) {
            return bad(format!(
                "weighting exponent {} must be positive",
                self.exponent
            ));
        }
        if self.tournament_size == 0 {
            return bad("tournament size must be positive".into());
        }
        if self.elite > self.population_size {
            return bad(format!(
                "elite count {} exceeds population {}",
                self.elite, self.population_size
            ));
        }
        Ok(())
    }
}

/// A candidate set of states with fitness `-E_W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub states: Vec<PureState>,
    pub fitness: f64,
}

impl Individual {
    pub fn new(states: Vec<PureState>, exponent: f64) -> Result<Self> {
        let fitness = -mos_energy(&states, exponent)?;
        Ok(Self { states, fitness })
    }

    fn random<R: Rng + ?Sized>(dim: usize, k: usize, exponent: f64, rng: &mut R) -> Self {
        let states: Vec<PureState> = (0..k)
            .map(|_| PureState::random(dim, rng).expect("dim >= 2"))
            .collect();
        let fitness = -energy(&states, exponent);
        Self { states, fitness }
    }

    fn rescore(&mut self, exponent: f64) {
        self.fitness = -energy(&self.states, exponent);
    }

    /// Applies the phase gauge to every state.
    pub fn gauge_fixed(mut self) -> Self {
        for s in &mut self.states {
            s.fix_phase();
        }
        self
    }
}

/// Result of a genetic search.
#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub best: Individual,
    /// Best fitness in the population after every generation.
    pub best_history: Vec<f64>,
    pub generations: usize,
}

/// Runs the genetic search and returns the best individual seen, gauge fixed.
pub fn evolve(config: &GAConfig, dim: usize, k: usize) -> Result<Individual> {
    Ok(evolve_with_history(config, dim, k)?.best)
}

pub fn evolve_with_history(config: &GAConfig, dim: usize, k: usize) -> Result<Evolution> {
    config.validate()?;
    if dim < 2 || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need d >= 2 and K >= 2, got d = {dim}, K = {k}"
        )));
    }
    let p = config.exponent;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop: Vec<Individual> = (0..config.population_size)
        .map(|_| Individual::random(dim, k, p, &mut rng))
        .collect();
    sort_by_fitness(&mut pop);
    let mut best = pop[0].clone();
    let mut best_history = Vec::with_capacity(config.max_generations);
    let mut generations = 0;

    for _ in 0..config.max_generations {
        generations += 1;
        // local refinement of the parents that survive unchanged
        let elite = config.elite.max(1).min(pop.len());
        pop[..elite]
            .par_iter_mut()
            .for_each(|ind| local_optimize(ind, p, config.local_steps, config.local_step_size));

        let mut next: Vec<Individual> = pop[..config.elite].to_vec();
        while next.len() < config.population_size {
            let a = tournament(&pop, config.tournament_size, &mut rng);
            let b = tournament(&pop, config.tournament_size, &mut rng);
            let mut child = if rng.gen::<f64>() < config.crossover_rate {
                crossover(a, b, &mut rng)
            } else {
                a.clone()
            };
            if rng.gen::<f64>() < config.mutation_rate {
                mutate(&mut child, &mut rng);
            }
            next.push(child);
        }
        next.par_iter_mut().for_each(|ind| ind.rescore(p));
        sort_by_fitness(&mut next);
        pop = next;
        if pop[0].fitness > best.fitness {
            best = pop[0].clone();
        }
        best_history.push(best.fitness);

        let n = best_history.len();
        if config.convergence_window > 0 && n > config.convergence_window {
            let gain = best_history[n - 1] - best_history[n - 1 - config.convergence_window];
            if gain < 1e-10 {
                break;
            }
        }
    }

    Ok(Evolution {
        best: best.gauge_fixed(),
        best_history,
        generations,
    })
}

fn sort_by_fitness(pop: &mut [Individual]) {
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
}

fn tournament<'a, R: Rng + ?Sized>(
    pop: &'a [Individual],
    size: usize,
    rng: &mut R,
) -> &'a Individual {
    (0..size)
        .map(|_| pop.choose(rng).expect("non-empty population"))
        .max_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("size >= 1")
}

/// Uniform slot-wise recombination of two parent sets.
fn crossover<R: Rng + ?Sized>(a: &Individual, b: &Individual, rng: &mut R) -> Individual {
    let states = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            if rng.gen::<bool>() {
                x.clone()
            } else {
                y.clone()
            }
        })
        .collect();
    Individual {
        states,
        fitness: f64::NEG_INFINITY,
    }
}

/// Applies `exp(-iεH)` to one random slot, with `H` a random Hermitian matrix
/// and `ε ~ U[0, 0.1]`.
fn mutate<R: Rng + ?Sized>(ind: &mut Individual, rng: &mut R) {
    let slot = rng.gen_range(0..ind.states.len());
    let d = ind.states[slot].dim();
    let eps = rng.gen_range(0.0..0.1);
    let u = random_unitary_near_identity(d, eps, rng);
    let mut state = ind.states[slot].clone();
    state.apply_matrix(&u).expect("matching dimension");
    ind.states[slot] = PureState::normalized(state.into_amplitudes()).expect("unit norm");
}

fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let a = DMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `exp(-iεH)` for a random Hermitian `H`.
pub fn random_unitary_near_identity<R: Rng + ?Sized>(
    d: usize,
    eps: f64,
    rng: &mut R,
) -> DMatrix<C64> {
    let eig = random_hermitian(d, rng).symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -eps * l)));
    v * phases * v.adjoint()
}

/// `∂E_W/∂ψ̄_i = 2 Σ_{j≠i} (p/2) f_ij^{p/2-1} ⟨ψ_j|ψ_i⟩ ψ_j`.
fn energy_gradient(states: &[PureState], exponent: f64) -> Vec<Vec<C64>> {
    let k = states.len();
    let d = states[0].dim();
    let half = 0.5 * exponent;
    let mut grad = vec![vec![C64::new(0.0, 0.0); d]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let o = inner_unchecked(states[j].amplitudes(), states[i].amplitudes());
            let f = o.norm_sqr();
            if f < 1e-300 {
                continue;
            }
            let w = 2.0 * half * f.powf(half - 1.0);
            for (g, a) in grad[i].iter_mut().zip(states[j].amplitudes()) {
                *g += a * o * w;
            }
        }
    }
    grad
}

/// Projected gradient descent on the unit sphere; keeps the result only if
/// it lowers the energy.
fn local_optimize(ind: &mut Individual, exponent: f64, steps: usize, step: f64) {
    if steps == 0 {
        return;
    }
    let mut states = ind.states.clone();
    for _ in 0..steps {
        let grad = energy_gradient(&states, exponent);
        for (s, g) in states.iter_mut().zip(grad) {
            let amps = s.amplitudes();
            let along = inner_unchecked(amps, &g);
            let moved: Vec<C64> = amps
                .iter()
                .zip(&g)
                .map(|(a, gi)| a - (gi - a * along) * step)
                .collect();
            *s = PureState::normalized(moved).expect("nonzero after small step");
        }
    }
    let fitness = -energy(&states, exponent);
    if fitness > ind.fitness {
        ind.states = states;
        ind.fitness = fitness;
    }
}

/// Contents of a MOS output file.
#[derive(Clone, Debug, PartialEq)]
pub struct MosSet {
    pub dim: usize,
    pub exponent: f64,
    pub states: Vec<PureState>,
}

impl MosSet {
    pub fn from_individual(ind: &Individual, exponent: f64) -> Self {
        Self {
            dim: ind.states[0].dim(),
            exponent,
            states: ind.states.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn reference_set(&self) -> Result<ReferenceSet> {
        ReferenceSet::new(self.states.clone())
    }

    pub fn virtual_basis(&self) -> Result<VirtualBasis> {
        VirtualBasis::new(self.states.clone())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# maximally orthogonal states");
        let _ = writeln!(out, "d = {}", self.dim);
        let _ = writeln!(out, "K = {}", self.states.len());
        let _ = writeln!(out, "exponent = {}", self.exponent);
        let _ = writeln!(out, "energy = {}", energy(&self.states, self.exponent));
        for (k, s) in self.states.iter().enumerate() {
            let _ = writeln!(out, "state {k}");
            for a in s.amplitudes() {
                let _ = writeln!(out, "({}, {})", a.re, a.im);
            }
        }
        out
    }

    /// Parses [`MosSet::to_text`] output; `path` is used in error messages.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut dim = None;
        let mut count = None;
        let mut exponent = 2.0;
        let mut states: Vec<Vec<C64>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse(path, line_no, m);
            if let Some(rest) = line.strip_prefix("state") {
                let idx: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad state header '{line}'")))?;
                if idx != states.len() {
                    return Err(err(format!("expected state {}, found {idx}", states.len())));
                }
                states.push(Vec::new());
            } else if let Some(pair) = line.strip_prefix('(').and_then(|l| l.strip_suffix(')')) {
                let current = states
                    .last_mut()
                    .ok_or_else(|| err("amplitude before any state header".into()))?;
                let (re, im) = pair
                    .split_once(',')
                    .ok_or_else(|| err(format!("expected (re, im), found '{line}'")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| err(format!("'{}' is not a number", s.trim())))
                };
                current.push(C64::new(parse(re)?, parse(im)?));
            } else if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                let num = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|_| err(format!("'{v}' is not a number")))
                };
                match key.trim() {
                    "d" => dim = Some(num(value)? as usize),
                    "K" => count = Some(num(value)? as usize),
                    "exponent" => exponent = num(value)?,
                    "energy" => {}
                    other => return Err(err(format!("unknown key '{other}'"))),
                }
            } else {
                return Err(err(format!("unrecognized line '{line}'")));
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(path, 0, "missing 'd'"))?;
        let count = count.ok_or_else(|| Error::parse(path, 0, "missing 'K'"))?;
        if states.len() != count {
            return Err(Error::parse(
                path,
                0,
                format!("K = {count} but {} states listed", states.len()),
            ));
        }
        let states = states
            .into_iter()
            .enumerate()
            .map(|(k, amps)| {
                if amps.len() != dim {
                    return Err(Error::parse(
                        path,
                        0,
                        format!("state {k} has {} amplitudes, d = {dim}", amps.len()),
                    ));
                }
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(Error::parse(path, 0, format!("state {k} has norm² {norm}")));
                }
                PureState::normalized(amps)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            exponent,
            states,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
