//! Small optimizers: Adam moment updates and bounded golden-section search.

use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { step: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Adam { cfg, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Bias-corrected update scaled by `step_scale * cfg.step`.
    pub fn direction(&mut self, grad: &[f64], step_scale: f64) -> Vec<f64> {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.cfg.step * step_scale;
        self.m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(grad)
            .map(|((m, v), &g)| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                -lr * (*m / c1) / ((*v / c2).sqrt() + self.cfg.eps)
            })
            .collect()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimize a unimodal `f` over `x >= 0`. The bracket `[0, b]` starts at
/// `b = 2 * guess` (or `scale` if the guess is not positive) and doubles
/// until `f(b/2) <= f(b)`; `tol` is relative to the final bracket. A
/// minimum at the boundary returns exactly zero.
pub fn minimize_nonneg<F: FnMut(f64) -> f64>(mut f: F, guess: f64, scale: f64, tol: f64) -> (f64, f64) {
    let mut hi = if guess > 0.0 && guess.is_finite() { 2.0 * guess } else { scale };
    let mut f_hi = f(hi);
    let mut f_half = f(0.5 * hi);
    let mut doublings = 0;
    while f_half > f_hi && doublings < 200 {
        hi *= 2.0;
        f_half = f_hi;
        f_hi = f(hi);
        doublings += 1;
    }
    let (x, fx) = golden_section(&mut f, 0.0, hi, tol * hi);
    let f0 = f(0.0);
    if f0 <= fx {
        (0.0, f0)
    } else {
        (x, fx)
    }
}
