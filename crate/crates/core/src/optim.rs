//! Derivative-free minimizers used for training.
//!
//! Two routes are provided: adaptive-moment descent driven by central
//! finite-difference gradients, and simultaneous-perturbation stochastic
//! approximation (SPSA), which needs two loss evaluations per iteration
//! regardless of the parameter count.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Finite-difference adaptive-moment descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Half-width of the central difference stencil.
    pub fd_step: f64,
    pub max_epochs: usize,
    /// Stop once the best loss improved by less than `min_improvement`
    /// over this many epochs.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            fd_step: 1e-5,
            max_epochs: 500,
            patience: 20,
            min_improvement: 1e-7,
        }
    }
}

/// SPSA gains `a_n = a / (n + 1 + A)^α`, `c_n = c / (n + 1)^γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub iterations: usize,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            c: 0.1,
            big_a: 3.0,
            alpha: 0.602,
            gamma: 0.101,
            iterations: 30,
        }
    }
}

impl SpsaConfig {
    pub fn gain_a(&self, n: usize) -> f64 {
        self.a / (n as f64 + 1.0 + self.big_a).powf(self.alpha)
    }

    pub fn gain_c(&self, n: usize) -> f64 {
        self.c / (n as f64 + 1.0).powf(self.gamma)
    }
}

/// Result of a minimization: best parameters seen and the loss trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub params: Vec<f64>,
    pub loss: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

/// Central finite-difference gradient with half-width `h`.
pub fn central_gradient<F>(f: &mut F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Adaptive-moment descent on finite-difference gradients.
///
/// `history` holds the loss of the iterate at every epoch. Stops early when
/// the loss reaches zero or plateaus; a non-finite loss ends the run with
/// `converged = false` and the best parameters seen so far.
pub fn adam_fd<F>(mut f: F, x0: &[f64], cfg: &AdamConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut best = (x.clone(), f64::INFINITY);
    let mut history = Vec::with_capacity(cfg.max_epochs + 1);
    let mut evaluations = 0;
    let mut converged = false;

    for epoch in 0..=cfg.max_epochs {
        let loss = f(&x);
        evaluations += 1;
        history.push(loss);
        if !loss.is_finite() {
            break;
        }
        if loss < best.1 {
            best = (x.clone(), loss);
        }
        if loss <= 1e-14 {
            converged = true;
            break;
        }
        if epoch >= cfg.patience {
            let past = history[..=epoch - cfg.patience]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if past - best.1 < cfg.min_improvement {
                converged = true;
                break;
            }
        }
        if epoch == cfg.max_epochs {
            break;
        }

        let g = central_gradient(&mut f, &x, cfg.fd_step);
        evaluations += 2 * n;
        let t = (epoch + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            x[i] -= cfg.step * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
        }
    }

    Minimum {
        params: best.0,
        loss: best.1,
        history,
        evaluations,
        converged,
    }
}

/// SPSA with Rademacher perturbations.
///
/// Exactly two loss evaluations per iteration, at `x ± c_n Δ`. The returned
/// parameters are the best of the evaluated points; `history` records both
/// evaluations of every iteration.
pub fn spsa<F, R>(mut f: F, x0: &[f64], cfg: &SpsaConfig, rng: &mut R) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut best = (x.clone(), f64::INFINITY);
    let mut history = Vec::with_capacity(2 * cfg.iterations);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut converged = true;

    for it in 0..cfg.iterations {
        let ak = cfg.gain_a(it);
        let ck = cfg.gain_c(it);
        let delta: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        for i in 0..n {
            plus[i] = x[i] + ck * delta[i];
            minus[i] = x[i] - ck * delta[i];
        }
        let lp = f(&plus);
        let lm = f(&minus);
        history.push(lp);
        history.push(lm);
        if !lp.is_finite() || !lm.is_finite() {
            converged = false;
            break;
        }
        if lp < best.1 {
            best = (plus.clone(), lp);
        }
        if lm < best.1 {
            best = (minus.clone(), lm);
        }
        let scale = (lp - lm) / (2.0 * ck);
        for i in 0..n {
            // 1/Δ_i = Δ_i for ±1 perturbations
            x[i] -= ak * scale * delta[i];
        }
    }

    Minimum {
        params: best.0,
        loss: best.1,
        evaluations: history.len(),
        history,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2))
            .sum()
    }

    #[test]
    fn central_gradient_of_quadratic() {
        let g = central_gradient(&mut quadratic, &[0.0, 1.0, 2.0], 1e-5);
        let exact = [-1.0, 2.0, 9.0];
        for (a, b) in g.iter().zip(exact) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let cfg = AdamConfig {
            max_epochs: 2000,
            ..Default::default()
        };
        let out = adam_fd(quadratic, &[3.0, -2.0], &cfg);
        assert!(out.loss < 1e-4, "loss {}", out.loss);
        assert!(out.converged);
    }

    #[test]
    fn adam_exits_immediately_at_zero_loss() {
        let out = adam_fd(|_: &[f64]| 0.0, &[1.0, 2.0], &AdamConfig::default());
        assert_eq!(out.history, vec![0.0]);
        assert_eq!(out.evaluations, 1);
        assert!(out.converged);
    }

    #[test]
    fn adam_reports_divergence() {
        let mut calls = 0;
        let out = adam_fd(
            |x: &[f64]| {
                calls += 1;
                if calls > 10 {
                    f64::NAN
                } else {
                    quadratic(x)
                }
            },
            &[3.0],
            &AdamConfig::default(),
        );
        assert!(!out.converged);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn spsa_uses_two_evaluations_per_iteration_and_descends() {
        let cfg = SpsaConfig {
            iterations: 400,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = [2.0, -1.0, 0.0];
        let out = spsa(quadratic, &start, &cfg, &mut rng);
        assert_eq!(out.evaluations, 800);
        assert!(out.loss < 0.1 * quadratic(&start));
    }

    #[test]
    fn spsa_is_deterministic_for_a_seed() {
        let cfg = SpsaConfig::default();
        let a = spsa(
            quadratic,
            &[1.0, 1.0],
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = spsa(
            quadratic,
            &[1.0, 1.0],
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }
}
