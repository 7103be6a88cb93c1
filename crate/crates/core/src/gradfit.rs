//! Direct SchWARMA fitting: the survival-probability loss of an ARMA model,
//! its analytic gradient, Adam descent, AIC/BIC order selection and the
//! composite native + injected scale fit.
//!
//! Parameters are the raw coefficients `[c_1..c_p, b_0..b_q]`; descent is
//! unconstrained since the spectrum only needs a pole-free grid.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::arma::{
    csv_err, is_stationary, ArmaModel, Interpolation, PowerSpectrum, SpectrumEstimate, POLE_TOLERANCE,
};
use crate::classical::cepstral_arma_unscaled;
use crate::error::{QnsError, Result};
use crate::invert::{interpolate, mean_power_estimate, nnls_estimate};
use crate::optim::{minimize_nonneg, Adam, AdamConfig};
use crate::probe::{survival_from_chi, FilterBank};
use crate::sim::{substream_seed, QnsDataset};
use crate::spectral::{uniform_grid, DENSE_INTERVALS, QUAD_INTERVALS};

/// Where a fit started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSource {
    Cepstral,
    Random,
    Given,
}

/// Sign of the parameter penalty in the information criteria.
///
/// `Standard` is `N ln(MSE) + 2P` and `N ln(MSE) + P ln N`. `AsPrinted`
/// subtracts the penalties instead; under it minimization always prefers
/// the largest model, and it exists only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionForm {
    #[default]
    Standard,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Mse,
    Aic,
    Bic,
}

/// Optimizer settings; recorded in every [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub adam: AdamConfig,
    pub max_steps: usize,
    /// Plateau window and threshold: a window of `patience` steps whose best
    /// loss improves by less than `improvement_tol` is a plateau.
    pub patience: usize,
    pub improvement_tol: f64,
    /// On a plateau the step is halved, down to `min_step_scale` times the
    /// configured step; a plateau at the smallest step ends the descent.
    pub min_step_scale: f64,
    /// Random restarts when no cepstral start is available.
    pub restarts: usize,
    pub form: CriterionForm,
    /// Quadrature intervals on `[0, pi]`.
    pub intervals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            adam: AdamConfig::default(),
            max_steps: 5000,
            patience: 50,
            improvement_tol: 1e-12,
            min_step_scale: 1e-3,
            restarts: 5,
            form: CriterionForm::Standard,
            intervals: QUAD_INTERVALS,
        }
    }
}

/// A fitted model with its goodness-of-fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p: usize,
    pub q: usize,
    pub model: ArmaModel,
    pub mse: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    /// Descent stopped on a plateau rather than the step limit.
    pub converged: bool,
    /// Loss went strictly below the starting loss.
    pub improved: bool,
    pub init_source: InitSource,
    pub init_mse: f64,
    /// The fitted AR polynomial admits stationary sampling.
    pub stationary: bool,
    pub options: FitOptions,
}

impl FitResult {
    pub fn num_params(&self) -> usize {
        self.p + self.q + 1
    }

    pub fn score(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Mse => self.mse,
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

/// Smallest MSE fed to the logarithm in the information criteria.
pub const MSE_FLOOR: f64 = 1e-300;

/// `(AIC, BIC)` for `n` observations and `params` parameters.
pub fn information_criteria(mse: f64, n: usize, params: usize, form: CriterionForm) -> (f64, f64) {
    let nf = n as f64;
    let fit = nf * mse.max(MSE_FLOOR).ln();
    let pf = params as f64;
    match form {
        CriterionForm::Standard => (fit + 2.0 * pf, fit + pf * nf.ln()),
        CriterionForm::AsPrinted => (fit - 2.0 * pf, fit - pf * nf.ln()),
    }
}

/// Dataset, filter bank and fixed background overlaps, shared by every
/// loss evaluation of a fit.
pub struct FitProblem {
    bank: FilterBank,
    probs: Vec<f64>,
    chi_background: Vec<f64>,
    seed: u64,
}

impl FitProblem {
    pub fn new(dataset: &QnsDataset, background: Option<&dyn PowerSpectrum>) -> Result<Self> {
        FitProblem::with_intervals(dataset, background, QUAD_INTERVALS)
    }

    pub fn with_intervals(
        dataset: &QnsDataset,
        background: Option<&dyn PowerSpectrum>,
        intervals: usize,
    ) -> Result<Self> {
        let bank = FilterBank::new(dataset.sequences(), intervals);
        let chi_background = match background {
            Some(b) => bank.chi(b)?,
            None => vec![0.0; dataset.len()],
        };
        Ok(FitProblem { bank, probs: dataset.probs().to_vec(), chi_background, seed: dataset.seed() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        self.bank.grid()
    }

    /// Total overlaps `chi_model + chi_background`.
    pub fn chi(&self, model: &ArmaModel) -> Result<Vec<f64>> {
        let power = model.power_values(self.bank.grid())?;
        Ok(self.bank.chi_from_power(&power).iter().zip(&self.chi_background).map(|(a, b)| a + b).collect())
    }

    pub fn predict(&self, model: &ArmaModel) -> Result<Vec<f64>> {
        Ok(self.chi(model)?.into_iter().map(survival_from_chi).collect())
    }

    pub fn loss(&self, model: &ArmaModel) -> Result<f64> {
        Ok(self.mse_from_chi(&self.chi(model)?))
    }

    fn mse_from_chi(&self, chi: &[f64]) -> f64 {
        chi.iter().zip(&self.probs).map(|(c, p)| (survival_from_chi(*c) - p).powi(2)).sum::<f64>()
            / self.probs.len() as f64
    }

    /// Loss and its gradient with respect to `[c_1..c_p, b_0..b_q]`.
    ///
    /// `dMSE/dtheta = sum_n G(w_n) dS(w_n)/dtheta` with
    /// `G = sum_k (2/N)(p_hat_k - p_k)(-e^{-chi_k}/2) w_n F_k(w_n)`,
    /// `dS/db_m = 2 Re(conj(B) e^{-imw}) / |A|^2` and
    /// `dS/dc_m = -2 S Re(conj(A) e^{-imw}) / |A|^2`.
    pub fn loss_and_gradient(&self, model: &ArmaModel) -> Result<(f64, Vec<f64>)> {
        let grid = self.bank.grid();
        let ar = model.ar();
        let ma = model.ma();
        let p = ar.len();
        let order = p.max(ma.len() - 1);
        let mut power = vec![0.0; grid.len()];
        // Per grid point: conj(A)/|A|^2 and conj(B)/|A|^2 scaled for the derivative.
        let mut a_fac = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut b_fac = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut powers = vec![Complex64::new(1.0, 0.0); order + 1];
        for (n, &w) in grid.iter().enumerate() {
            let z = Complex64::from_polar(1.0, -w);
            for m in 1..=order {
                powers[m] = powers[m - 1] * z;
            }
            let a: Complex64 = Complex64::new(1.0, 0.0) + (0..p).map(|i| powers[i + 1] * ar[i]).sum::<Complex64>();
            let b: Complex64 = ma.iter().enumerate().map(|(j, &bj)| powers[j] * bj).sum();
            let den = a.norm_sqr();
            if den < POLE_TOLERANCE * POLE_TOLERANCE || !den.is_finite() {
                return Err(QnsError::PoleOnGrid { freq: w, magnitude: den.sqrt() });
            }
            let s = b.norm_sqr() / den;
            power[n] = s;
            a_fac[n] = a.conj() * (-2.0 * s / den);
            b_fac[n] = b.conj() * (2.0 / den);
        }
        let chi: Vec<f64> =
            self.bank.chi_from_power(&power).iter().zip(&self.chi_background).map(|(a, b)| a + b).collect();
        let nf = self.probs.len() as f64;
        let mut loss = 0.0;
        let coef: Vec<f64> = chi
            .iter()
            .zip(&self.probs)
            .map(|(&c, &obs)| {
                let e = (-c).exp();
                let r = 0.5 + 0.5 * e - obs;
                loss += r * r;
                (2.0 / nf) * r * (-0.5 * e)
            })
            .collect();
        loss /= nf;
        let g = self.bank.adjoint(&coef);
        let mut grad = vec![0.0; p + ma.len()];
        for (n, &w) in grid.iter().enumerate() {
            if g[n] == 0.0 {
                continue;
            }
            let z = Complex64::from_polar(1.0, -w);
            let mut zm = Complex64::new(1.0, 0.0);
            for m in 0..=order {
                if m >= 1 && m <= p {
                    grad[m - 1] += g[n] * (a_fac[n] * zm).re;
                }
                if m < ma.len() {
                    grad[p + m] += g[n] * (b_fac[n] * zm).re;
                }
                zm *= z;
            }
        }
        Ok((loss, grad))
    }

    /// Golden-section fit of `kappa^2` scaling the MA part of `shape`.
    pub fn fit_scale(&self, shape: &ArmaModel, guess: f64) -> Result<(ArmaModel, f64)> {
        let power = shape.power_values(self.bank.grid())?;
        let chi_unit = self.bank.chi_from_power(&power);
        let mse = |k2: f64| -> f64 {
            let chi: Vec<f64> = chi_unit.iter().zip(&self.chi_background).map(|(c, b)| k2 * c + b).collect();
            self.mse_from_chi(&chi)
        };
        let (k2, _) = minimize_nonneg(mse, guess, 1.0, 1e-10);
        Ok((shape.scale_ma(k2.sqrt()), k2))
    }
}

/// Mean squared survival-probability residual of `model` (plus an optional
/// fixed background spectrum) against `dataset`.
pub fn loss(model: &ArmaModel, dataset: &QnsDataset, background: Option<&dyn PowerSpectrum>) -> Result<f64> {
    FitProblem::new(dataset, background)?.loss(model)
}

/// Analytic gradient of [`loss`] with respect to `[c_1..c_p, b_0..b_q]`.
pub fn gradient(
    model: &ArmaModel,
    dataset: &QnsDataset,
    background: Option<&dyn PowerSpectrum>,
) -> Result<Vec<f64>> {
    FitProblem::new(dataset, background)?.loss_and_gradient(model).map(|(_, g)| g)
}

/// Relative floor applied to the NNLS spline before the cepstral start.
pub const INIT_FLOOR: f64 = 1e-3;

/// Cepstral starting model: NNLS estimate, spline-interpolated, background
/// removed and floored, then cepstral ARMA with `kappa^2` fitted to the data.
pub fn cepstral_init(
    problem: &FitProblem,
    dataset: &QnsDataset,
    p: usize,
    q: usize,
    background: Option<&dyn PowerSpectrum>,
) -> Result<ArmaModel> {
    let band = nnls_estimate(dataset)?.spectrum;
    let grid = uniform_grid(DENSE_INTERVALS);
    let mut power = interpolate(&band, &grid)?.power().to_vec();
    if let Some(b) = background {
        for (v, bg) in power.iter_mut().zip(b.power_on(&grid)?) {
            *v -= bg;
        }
    }
    let max = power.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(QnsError::DegenerateSpectrum { floored: power.len(), total: power.len() });
    }
    power.iter_mut().for_each(|v| *v = v.max(INIT_FLOOR * max));
    let spec = SpectrumEstimate::new(grid, power, Interpolation::CubicSpline)?;
    let shape = cepstral_arma_unscaled(&spec, p, q)?;
    let (model, _) = problem.fit_scale(&shape, 1.0)?;
    if !model.params().iter().all(|v| v.is_finite()) {
        return Err(QnsError::NoConvergence("cepstral start is not finite".into()));
    }
    Ok(model)
}

/// Random start: a stationary AR part from reflection coefficients drawn
/// in `(-0.8, 0.8)` and Gaussian MA coefficients at the data's power level.
pub fn random_init(p: usize, q: usize, power_scale: f64, rng: &mut ChaCha8Rng) -> ArmaModel {
    let mut a: Vec<f64> = Vec::new();
    for _ in 0..p {
        let k: f64 = rng.random_range(-0.8..0.8);
        let m = a.len();
        let mut next: Vec<f64> = (0..m).map(|i| a[i] + k * a[m - 1 - i]).collect();
        next.push(k);
        a = next;
    }
    let sigma = power_scale.max(1e-12).sqrt() / ((q + 1) as f64).sqrt();
    let mut b: Vec<f64> = (0..=q).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    b[0] = b[0].abs().max(0.1 * sigma);
    ArmaModel::new(a, b).expect("finite coefficients")
}

struct Descent {
    model: ArmaModel,
    mse: f64,
    init_mse: f64,
    iterations: usize,
    converged: bool,
}

/// Adam descent from `start`, keeping the best iterate. A pole on the grid
/// or a non-finite loss rejects the step and halves the step size.
fn descend(problem: &FitProblem, start: &ArmaModel, opts: &FitOptions) -> Result<Descent> {
    let (p, q) = (start.p(), start.q());
    let (init_mse, mut grad) = problem.loss_and_gradient(start)?;
    let mut theta = start.params();
    let mut best = (init_mse, theta.clone());
    let mut adam = Adam::new(theta.len(), opts.adam);
    let mut scale = 1.0;
    let mut window_start = init_mse;
    let mut since_window = 0;
    let mut converged = false;
    let mut steps = 0;
    while steps < opts.max_steps {
        steps += 1;
        let dir = adam.direction(&grad, scale);
        let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + d).collect();
        let evaluated = ArmaModel::from_params(p, q, &trial)
            .and_then(|m| problem.loss_and_gradient(&m))
            .ok()
            .filter(|(l, g)| l.is_finite() && g.iter().all(|v| v.is_finite()));
        match evaluated {
            Some((l, g)) => {
                theta = trial;
                grad = g;
                if l < best.0 {
                    best = (l, theta.clone());
                }
            }
            None => {
                theta = best.1.clone();
                grad = problem.loss_and_gradient(&ArmaModel::from_params(p, q, &theta)?)?.1;
                adam = Adam::new(theta.len(), opts.adam);
                scale *= 0.5;
                if scale < opts.min_step_scale {
                    converged = true;
                    break;
                }
                continue;
            }
        }
        since_window += 1;
        if since_window >= opts.patience {
            if window_start - best.0 < opts.improvement_tol {
                if scale * 0.5 < opts.min_step_scale {
                    converged = true;
                    break;
                }
                scale *= 0.5;
                theta = best.1.clone();
                grad = problem.loss_and_gradient(&ArmaModel::from_params(p, q, &theta)?)?.1;
                adam = Adam::new(theta.len(), opts.adam);
            }
            window_start = best.0;
            since_window = 0;
        }
    }
    Ok(Descent {
        model: ArmaModel::from_params(p, q, &best.1)?,
        mse: best.0,
        init_mse,
        iterations: steps,
        converged,
    })
}

/// Fit an ARMA(p, q) SchWARMA model to survival probabilities.
///
/// Starts from `init` if given, else from the cepstral estimate; if that
/// is unavailable, from the best of `opts.restarts` random starts seeded by
/// `(dataset seed, p, q, restart)`. The loss at the result never exceeds
/// the loss at the start.
pub fn fit(
    dataset: &QnsDataset,
    p: usize,
    q: usize,
    init: Option<&ArmaModel>,
    background: Option<&dyn PowerSpectrum>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let problem = FitProblem::with_intervals(dataset, background, opts.intervals)?;
    fit_problem(&problem, dataset, p, q, init, background, opts)
}

fn fit_problem(
    problem: &FitProblem,
    dataset: &QnsDataset,
    p: usize,
    q: usize,
    init: Option<&ArmaModel>,
    background: Option<&dyn PowerSpectrum>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (descent, source) = if let Some(m) = init {
        if m.p() != p || m.q() != q {
            return Err(QnsError::InvalidArgument(format!(
                "initial model is ARMA({},{}), expected ARMA({p},{q})",
                m.p(),
                m.q()
            )));
        }
        (descend(problem, m, opts)?, InitSource::Given)
    } else {
        match cepstral_init(problem, dataset, p, q, background).and_then(|m| descend(problem, &m, opts)) {
            Ok(d) => (d, InitSource::Cepstral),
            Err(_) => (random_restarts(problem, dataset, p, q, opts)?, InitSource::Random),
        }
    };
    let n = problem.len();
    let (aic, bic) = information_criteria(descent.mse, n, p + q + 1, opts.form);
    Ok(FitResult {
        p,
        q,
        stationary: is_stationary(&descent.model),
        model: descent.model,
        mse: descent.mse,
        aic,
        bic,
        iterations: descent.iterations,
        converged: descent.converged,
        improved: descent.mse < descent.init_mse,
        init_source: source,
        init_mse: descent.init_mse,
        options: *opts,
    })
}

fn random_restarts(
    problem: &FitProblem,
    dataset: &QnsDataset,
    p: usize,
    q: usize,
    opts: &FitOptions,
) -> Result<Descent> {
    let power = mean_power_estimate(dataset).unwrap_or(1e-2);
    let mut best: Option<Descent> = None;
    let mut last_err = None;
    for restart in 0..opts.restarts.max(1) {
        let seed = substream_seed(problem.seed, &[p as u64, q as u64, restart as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_init(p, q, power, &mut rng);
        match descend(problem, &start, opts) {
            Ok(d) => {
                if best.as_ref().is_none_or(|b| d.mse < b.mse) {
                    best = Some(d);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| QnsError::NoConvergence("no random start succeeded".into())))
}

/// All fits of an order search plus the selected one.
#[derive(Debug, Clone)]
pub struct ModelSelection {
    pub criterion: Criterion,
    pub best: FitResult,
    /// Every `(p, q)` fit, ordered by parameter count then `p`.
    pub grid: Vec<FitResult>,
    /// `(p, q, error name)` for fits that failed.
    pub failures: Vec<(usize, usize, String)>,
}

impl ModelSelection {
    /// Best fit of the shared grid under another criterion.
    pub fn best_by(&self, criterion: Criterion) -> &FitResult {
        select(&self.grid, criterion)
    }

    /// CSV with header `p,q,mse,aic,bic`.
    pub fn write_grid_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["p", "q", "mse", "aic", "bic"]).map_err(csv_err)?;
        for f in &self.grid {
            wtr.write_record([
                f.p.to_string(),
                f.q.to_string(),
                f.mse.to_string(),
                f.aic.to_string(),
                f.bic.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// First minimum in grid order, so ties go to the smaller model.
fn select(grid: &[FitResult], criterion: Criterion) -> &FitResult {
    grid.iter().fold(&grid[0], |best, f| if f.score(criterion) < best.score(criterion) { f } else { best })
}

/// Every `(p, q)` with `p + q + 1 <= max_params`.
pub fn order_grid(max_params: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 1..=max_params {
        for p in 0..total {
            out.push((p, total - 1 - p));
        }
    }
    out
}

/// Fit every order with `p + q + 1 <= max_params` and pick the one that
/// minimizes `criterion`. Fits run in parallel; each is deterministic.
pub fn model_select(
    dataset: &QnsDataset,
    max_params: usize,
    criterion: Criterion,
    background: Option<&dyn PowerSpectrum>,
    opts: &FitOptions,
) -> Result<ModelSelection> {
    if max_params == 0 {
        return Err(QnsError::InvalidCounts("max_params must be at least 1".into()));
    }
    let problem = FitProblem::with_intervals(dataset, background, opts.intervals)?;
    let orders = order_grid(max_params);
    let results: Vec<(usize, usize, Result<FitResult>)> = orders
        .par_iter()
        .map(|&(p, q)| (p, q, fit_problem(&problem, dataset, p, q, None, background, opts)))
        .collect();
    let mut grid = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (p, q, r) in results {
        match r {
            Ok(f) => grid.push(f),
            Err(e) => {
                failures.push((p, q, e.name().to_string()));
                first_err.get_or_insert(e);
            }
        }
    }
    if grid.is_empty() {
        return Err(first_err.expect("at least one order was tried"));
    }
    let best = select(&grid, criterion).clone();
    Ok(ModelSelection { criterion, best, grid, failures })
}

/// Native spectrum in a composite model.
#[derive(Debug, Clone, PartialEq)]
pub enum NativeSpectrum {
    Model(ArmaModel),
    Estimate(SpectrumEstimate),
}

impl PowerSpectrum for NativeSpectrum {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        match self {
            NativeSpectrum::Model(m) => m.power_on(freqs),
            NativeSpectrum::Estimate(s) => s.power_on(freqs),
        }
    }
}

/// `beta * S_nat + S_inj`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpec {
    pub native: NativeSpectrum,
    pub beta: f64,
    pub injected: ArmaModel,
}

impl CompositeSpec {
    pub fn new(native: NativeSpectrum, beta: f64, injected: ArmaModel) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(QnsError::InvalidArgument(format!("beta must be non-negative, got {beta}")));
        }
        Ok(CompositeSpec { native, beta, injected })
    }
}

impl PowerSpectrum for CompositeSpec {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        let nat = self.native.power_on(freqs)?;
        let inj = self.injected.power_on(freqs)?;
        Ok(nat.iter().zip(inj).map(|(n, i)| self.beta * n + i).collect())
    }
}

pub const BETA_TOL: f64 = 1e-8;

/// Native scale `beta >= 0` minimizing the MSE of
/// `predict_survival(beta S_nat + S_inj)` against the data.
pub fn fit_beta(
    native: &dyn PowerSpectrum,
    injected: &dyn PowerSpectrum,
    dataset: &QnsDataset,
) -> Result<f64> {
    let bank = FilterBank::with_default_grid(dataset.sequences());
    let chi_nat = bank.chi(native)?;
    let chi_inj = bank.chi(injected)?;
    let probs = dataset.probs();
    let mse = |beta: f64| -> f64 {
        chi_nat
            .iter()
            .zip(&chi_inj)
            .zip(probs)
            .map(|((n, i), p)| (survival_from_chi(beta * n + i) - p).powi(2))
            .sum::<f64>()
    };
    // Linearized guess from the mean overlaps.
    let chi_obs: f64 = probs.iter().map(|&p| -(2.0 * (p - 0.5)).max(1e-12).ln()).sum();
    let guess = (chi_obs - chi_inj.iter().sum::<f64>()) / chi_nat.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let (beta, _) = minimize_nonneg(mse, guess, 1.0, BETA_TOL);
    Ok(beta)
}

/// Fit the injected model with `beta * S_nat` held as a fixed background.
pub fn fit_composite(
    native: &dyn PowerSpectrum,
    beta: f64,
    dataset: &QnsDataset,
    p: usize,
    q: usize,
    opts: &FitOptions,
) -> Result<FitResult> {
    let scaled = crate::arma::SpectrumSum::new().with(beta, native);
    fit(dataset, p, q, None, Some(&scaled), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::generate_fttps;
    use crate::sim::expected_dataset;

    fn exact(model: &ArmaModel) -> QnsDataset {
        expected_dataset(model, &generate_fttps(64, 64).unwrap(), 0, 11).unwrap()
    }

    #[test]
    fn criteria_examples() {
        let (aic, bic) = information_criteria(0.01, 64, 3, CriterionForm::Standard);
        assert!((aic - (64.0 * 0.01f64.ln() + 6.0)).abs() < 1e-12);
        assert!((aic + 288.731).abs() < 1e-3);
        assert!((bic + 282.254).abs() < 1e-3);
        assert!((bic - (64.0 * 0.01f64.ln() + 3.0 * 64f64.ln())).abs() < 1e-12);
        let (aic_p, _) = information_criteria(0.01, 64, 3, CriterionForm::AsPrinted);
        assert!((aic_p - (64.0 * 0.01f64.ln() - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let model = ArmaModel::white(0.05);
        let data = exact(&model);
        assert!(loss(&model, &data, None).unwrap() < 1e-30);
        let half = data.with_probs(vec![0.5; 64]).unwrap();
        let silent = ArmaModel::white(0.0);
        assert!((loss(&silent, &half, None).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let truth = ArmaModel::new(vec![-0.5, 0.2], vec![0.1, 0.05]).unwrap();
        let data = exact(&truth);
        let model = ArmaModel::new(vec![-0.4, 0.1], vec![0.12, 0.02, -0.01]).unwrap();
        let problem = FitProblem::new(&data, None).unwrap();
        let (_, g) = problem.loss_and_gradient(&model).unwrap();
        let theta = model.params();
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let lu = problem.loss(&ArmaModel::from_params(2, 2, &up).unwrap()).unwrap();
            let ld = problem.loss(&ArmaModel::from_params(2, 2, &dn).unwrap()).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1e-12), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_fit_and_has_sign() {
        let truth = ArmaModel::white(0.05);
        let data = exact(&truth);
        let g = gradient(&truth, &data, None).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
        let g = gradient(&ArmaModel::white(0.04), &data, None).unwrap();
        assert!(g[0] < 0.0);
    }

    #[test]
    fn white_fit_recovers_power() {
        let data = exact(&ArmaModel::white(0.05));
        let r = fit(&data, 0, 0, None, None, &FitOptions::default()).unwrap();
        let b0 = r.model.ma()[0];
        assert!((b0 * b0 - 0.0025).abs() / 0.0025 < 1e-3, "{}", b0 * b0);
        assert_eq!(r.init_source, InitSource::Cepstral);
        assert!(r.mse <= r.init_mse);
    }

    #[test]
    fn order_grid_counts() {
        assert_eq!(order_grid(1), vec![(0, 0)]);
        assert_eq!(order_grid(3).len(), 6);
    }

    #[test]
    fn beta_recovery_noiseless() {
        let native = ArmaModel::new(vec![-0.7], vec![0.03]).unwrap();
        let injected = ArmaModel::resonance(1.2, 0.9, 0.02).unwrap();
        for beta in [0.0, 0.5, 1.0] {
            let spec = CompositeSpec::new(NativeSpectrum::Model(native.clone()), beta, injected.clone()).unwrap();
            let data = exact_spec(&spec);
            let b = fit_beta(&native, &injected, &data).unwrap();
            assert!((b - beta).abs() < 1e-4, "{beta}: {b}");
        }
    }

    fn exact_spec(spec: &CompositeSpec) -> QnsDataset {
        expected_dataset(spec, &generate_fttps(64, 64).unwrap(), 0, 5).unwrap()
    }

    #[test]
    fn random_init_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            assert!(is_stationary(&random_init(6, 2, 0.01, &mut rng)));
        }
    }
}
