//! ARMA noise models, their rational power spectra and autocovariances.
//!
//! Coefficients are stored so that the power spectrum is
//!
//! ```text
//!            | sum_{k=0}^{q} b_k e^{-ik w} |^2
//! S(w) = -----------------------------------
//!          | 1 + sum_{k=1}^{p} c_k e^{-ik w} |^2
//! ```
//!
//! verbatim. The matching time-domain recursion therefore subtracts the AR
//! terms: `y[k] = -sum_i c_i y[k-i] + sum_j b_j x[k-j]`, driven by
//! unit-variance Gaussian `x`. Signs of raw coefficients are a storage
//! convention only; compare models through their spectra.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{QnsError, Result};
use crate::spectral::{cosine_transform, uniform_grid, TRANSFORM_INTERVALS};
use crate::spline::NaturalCubicSpline;

/// Minimum `|A(e^{iw})|` accepted when evaluating a spectrum.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArma", into = "RawArma")]
pub struct ArmaModel {
    ar: Vec<f64>,
    ma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArma {
    #[serde(default)]
    ar: Vec<f64>,
    ma: Vec<f64>,
}

impl TryFrom<RawArma> for ArmaModel {
    type Error = QnsError;
    fn try_from(raw: RawArma) -> Result<Self> {
        ArmaModel::new(raw.ar, raw.ma)
    }
}

impl From<ArmaModel> for RawArma {
    fn from(m: ArmaModel) -> Self {
        RawArma { ar: m.ar, ma: m.ma }
    }
}

impl ArmaModel {
    /// `ar = [c_1..c_p]`, `ma = [b_0..b_q]`. `ma` must be non-empty.
    pub fn new(ar: Vec<f64>, ma: Vec<f64>) -> Result<Self> {
        if ma.is_empty() {
            return Err(QnsError::InvalidArgument("MA coefficients must contain b0".into()));
        }
        if ar.iter().chain(ma.iter()).any(|v| !v.is_finite()) {
            return Err(QnsError::InvalidArgument("ARMA coefficients must be finite".into()));
        }
        Ok(ArmaModel { ar, ma })
    }

    /// White noise with standard deviation `sigma` (an MA(0) model).
    pub fn white(sigma: f64) -> Self {
        ArmaModel { ar: Vec::new(), ma: vec![sigma] }
    }

    /// An AR(2) resonance whose spectrum peaks exactly at `center` with
    /// pole radius `radius` (0 < radius < 1) and drive amplitude `gain`.
    pub fn resonance(center: f64, radius: f64, gain: f64) -> Result<Self> {
        if !(0.0 < radius && radius < 1.0) || !(0.0..=PI).contains(&center) {
            return Err(QnsError::InvalidArgument(format!(
                "resonance needs 0 < radius < 1 and center in [0, pi], got {radius}, {center}"
            )));
        }
        // |A|^2 = const + 2 c1 (1 + c2) cos w + 4 c2 cos^2 w is minimised at
        // cos w = -c1 (1 + c2) / (4 c2); place that minimum at `center`.
        // |c1| < 2 radius always holds here, so the poles are a complex pair.
        let c2 = radius * radius;
        let c1 = -4.0 * c2 * center.cos() / (1.0 + c2);
        ArmaModel::new(vec![c1, c2], vec![gain])
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    /// AR order `p`.
    pub fn p(&self) -> usize {
        self.ar.len()
    }

    /// MA order `q`.
    pub fn q(&self) -> usize {
        self.ma.len() - 1
    }

    /// Number of free parameters, `p + q + 1`.
    pub fn num_params(&self) -> usize {
        self.ar.len() + self.ma.len()
    }

    /// Flattened parameter vector `[c_1..c_p, b_0..b_q]`.
    pub fn params(&self) -> Vec<f64> {
        self.ar.iter().chain(self.ma.iter()).copied().collect()
    }

    /// Rebuild a model of order `(p, q)` from a flattened parameter vector.
    pub fn from_params(p: usize, q: usize, params: &[f64]) -> Result<Self> {
        if params.len() != p + q + 1 {
            return Err(QnsError::InvalidArgument(format!(
                "expected {} parameters for ARMA({p},{q}), got {}",
                p + q + 1,
                params.len()
            )));
        }
        ArmaModel::new(params[..p].to_vec(), params[p..].to_vec())
    }

    /// Same AR part with the MA coefficients multiplied by `kappa`
    /// (spectrum scaled by `kappa^2`).
    pub fn scale_ma(&self, kappa: f64) -> Self {
        ArmaModel { ar: self.ar.clone(), ma: self.ma.iter().map(|b| b * kappa).collect() }
    }

    /// Numerator and denominator `(|B|^2, |A|^2)` at angular frequency `w`.
    pub fn power_parts(&self, w: f64) -> (f64, f64) {
        let z = Complex64::from_polar(1.0, -w);
        let horner = |coefs: &[f64]| {
            coefs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
        };
        let num = horner(&self.ma).norm_sqr();
        let den = (horner(&self.ar) * z + 1.0).norm_sqr();
        (num, den)
    }

    /// Spectrum values at `freqs` (no range checks).
    pub fn power_values(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        freqs
            .iter()
            .map(|&w| {
                let (num, den) = self.power_parts(w);
                if den < POLE_TOLERANCE * POLE_TOLERANCE || !den.is_finite() {
                    Err(QnsError::PoleOnGrid { freq: w, magnitude: den.sqrt() })
                } else {
                    Ok(num / den)
                }
            })
            .collect()
    }

    /// Roots of `z^p + c_1 z^{p-1} + ... + c_p`, i.e. the AR poles.
    pub fn ar_roots(&self) -> Vec<Complex64> {
        let p = self.ar.len();
        if p == 0 {
            return Vec::new();
        }
        let mut companion = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            companion[(0, j)] = -self.ar[j];
        }
        for i in 1..p {
            companion[(i, i - 1)] = 1.0;
        }
        companion.complex_eigenvalues().iter().copied().collect()
    }

    /// Reflect AR poles lying outside the unit circle to `1/conj(z)` and
    /// rescale the MA part so the power spectrum is unchanged.
    pub fn reflect_poles(&self) -> Result<Self> {
        if self.ar.is_empty() || is_stationary(self) {
            return Ok(self.clone());
        }
        let mut gain = 1.0;
        let roots: Vec<Complex64> = self
            .ar_roots()
            .into_iter()
            .map(|r| {
                let m = r.norm();
                if m > 1.0 {
                    gain *= m;
                    1.0 / r.conj()
                } else {
                    r
                }
            })
            .collect();
        if roots.iter().any(|r| (r.norm() - 1.0).abs() < 1e-12) {
            return Err(QnsError::NotStationary);
        }
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * r;
            }
            poly = next;
        }
        let ar = poly[1..].iter().map(|c| c.re).collect();
        ArmaModel::new(ar, self.ma.iter().map(|b| b / gain).collect())
    }
}

/// How a [`SpectrumEstimate`] is evaluated between its grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Values are band powers; off-grid queries take the nearest grid value.
    None,
    /// Natural cubic spline through the grid values, clamped at zero.
    CubicSpline,
}

/// Power values on a frequency grid in `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    freqs: Vec<f64>,
    power: Vec<f64>,
    interpolation: Interpolation,
}

impl SpectrumEstimate {
    pub fn new(freqs: Vec<f64>, power: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if freqs.len() != power.len() {
            return Err(QnsError::InvalidArgument(format!(
                "{} frequencies but {} power values",
                freqs.len(),
                power.len()
            )));
        }
        if freqs.is_empty() {
            return Err(QnsError::TooFewPoints { needed: 1, got: 0 });
        }
        check_grid(&freqs)?;
        if let Some((i, &v)) = power.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(QnsError::NegativePower { freq: freqs[i], value: v });
        }
        Ok(SpectrumEstimate { freqs, power, interpolation })
    }

    /// Constant spectrum `level` on `freqs`.
    pub fn flat(freqs: Vec<f64>, level: f64) -> Result<Self> {
        let power = vec![level; freqs.len()];
        SpectrumEstimate::new(freqs, power, Interpolation::CubicSpline)
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    /// Multiply every power value by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        SpectrumEstimate::new(
            self.freqs.clone(),
            self.power.iter().map(|v| v * factor).collect(),
            self.interpolation,
        )
    }

    /// Evaluate at arbitrary frequencies following the interpolation rule.
    pub fn evaluate(&self, at: &[f64]) -> Result<Vec<f64>> {
        let n = self.freqs.len();
        match self.interpolation {
            Interpolation::CubicSpline if n >= 2 => {
                let spline = NaturalCubicSpline::new(&self.freqs, &self.power)?;
                Ok(at.iter().map(|&w| spline.eval(w).max(0.0)).collect())
            }
            _ => Ok(at
                .iter()
                .map(|&w| {
                    let i = match self.freqs.binary_search_by(|v| v.total_cmp(&w)) {
                        Ok(i) => i,
                        Err(0) => 0,
                        Err(i) if i >= n => n - 1,
                        Err(i) => {
                            if w - self.freqs[i - 1] <= self.freqs[i] - w {
                                i - 1
                            } else {
                                i
                            }
                        }
                    };
                    self.power[i]
                })
                .collect()),
        }
    }

    /// Write as CSV with header `freq,power`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["freq", "power"]).map_err(csv_err)?;
        for (f, p) in self.freqs.iter().zip(&self.power) {
            wtr.write_record([f.to_string(), p.to_string()]).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a `freq,power` CSV. The result uses cubic-spline interpolation.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["freq", "power"] {
            return Err(QnsError::MalformedFile(format!(
                "expected header freq,power, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut freqs = Vec::new();
        let mut power = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            freqs.push(parse_f64(&rec[0])?);
            power.push(parse_f64(&rec[1])?);
        }
        SpectrumEstimate::new(freqs, power, Interpolation::CubicSpline)
            .map_err(|e| QnsError::MalformedFile(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> QnsError {
    QnsError::MalformedFile(e.to_string())
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| QnsError::MalformedFile(format!("not a number: {s:?}")))
}

fn check_grid(freqs: &[f64]) -> Result<()> {
    let tol = 1e-12;
    if let Some(w) = freqs.iter().find(|w| !(-tol..=PI + tol).contains(*w)) {
        return Err(QnsError::InvalidArgument(format!("frequency {w} outside [0, pi]")));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QnsError::InvalidArgument("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

/// Autocovariance lags `r[0..L-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSeq {
    lags: Vec<f64>,
}

impl AutocovarianceSeq {
    pub fn new(lags: Vec<f64>) -> Result<Self> {
        if lags.is_empty() {
            return Err(QnsError::TooFewPoints { needed: 1, got: 0 });
        }
        let r0 = lags[0];
        let slack = 1e-9 * r0.abs() + 1e-15;
        if !(r0 >= -slack) || lags.iter().any(|r| !r.is_finite() || r.abs() > r0 + slack) {
            return Err(QnsError::InvalidArgument(
                "autocovariance must satisfy r[0] >= |r[k]|".into(),
            ));
        }
        Ok(AutocovarianceSeq { lags })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Multiply every lag by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        AutocovarianceSeq::new(self.lags.iter().map(|r| r * c).collect())
    }
}

/// Anything with a non-negative power spectrum on `[0, pi]`.
pub trait PowerSpectrum: Sync {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>>;
}

impl PowerSpectrum for ArmaModel {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        self.power_values(freqs)
    }
}

impl PowerSpectrum for SpectrumEstimate {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(freqs)
    }
}

impl<T: PowerSpectrum + ?Sized> PowerSpectrum for &T {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        (**self).power_on(freqs)
    }
}

/// Non-negative weighted sum of spectra, e.g. `beta * S_nat + S_inj`.
#[derive(Default)]
pub struct SpectrumSum<'a> {
    parts: Vec<(f64, &'a dyn PowerSpectrum)>,
}

impl<'a> SpectrumSum<'a> {
    pub fn new() -> Self {
        SpectrumSum { parts: Vec::new() }
    }

    pub fn with(mut self, weight: f64, spectrum: &'a dyn PowerSpectrum) -> Self {
        self.parts.push((weight, spectrum));
        self
    }
}

impl PowerSpectrum for SpectrumSum<'_> {
    fn power_on(&self, freqs: &[f64]) -> Result<Vec<f64>> {
        let mut total = vec![0.0; freqs.len()];
        for (weight, s) in &self.parts {
            if *weight == 0.0 {
                continue;
            }
            for (t, v) in total.iter_mut().zip(s.power_on(freqs)?) {
                *t += weight * v;
            }
        }
        Ok(total)
    }
}

/// Evaluate the model spectrum on `freqs` (all in `[0, pi]`).
pub fn psd(model: &ArmaModel, freqs: &[f64]) -> Result<SpectrumEstimate> {
    check_grid(freqs)?;
    let power = model.power_values(freqs)?;
    SpectrumEstimate::new(freqs.to_vec(), power, Interpolation::CubicSpline)
}

/// Stationary autocovariance `r[0..num_lags-1]`.
///
/// Pure MA models use the closed form `r[k] = sum_{j>=k} b_j b_{j-k}`;
/// otherwise the spectrum is transformed on an 8192-point circle grid.
pub fn autocovariance(model: &ArmaModel, num_lags: usize) -> Result<AutocovarianceSeq> {
    if !is_stationary(model) {
        return Err(QnsError::NotStationary);
    }
    if num_lags == 0 {
        return Err(QnsError::InvalidArgument("num_lags must be positive".into()));
    }
    let lags = if model.ar.is_empty() {
        ma_autocovariance(&model.ma, num_lags)
    } else {
        if num_lags > TRANSFORM_INTERVALS {
            return Err(QnsError::InvalidArgument(format!(
                "at most {TRANSFORM_INTERVALS} lags are available"
            )));
        }
        let grid = uniform_grid(TRANSFORM_INTERVALS);
        cosine_transform(&model.power_values(&grid)?, num_lags)
    };
    AutocovarianceSeq::new(lags)
}

pub(crate) fn ma_autocovariance(b: &[f64], num_lags: usize) -> Vec<f64> {
    (0..num_lags)
        .map(|k| if k < b.len() { (k..b.len()).map(|j| b[j] * b[j - k]).sum() } else { 0.0 })
        .collect()
}

/// Stationarity via the step-down (Schur-Cohn) recursion: the AR polynomial
/// has all roots strictly inside the unit circle iff every reflection
/// coefficient has magnitude below one.
pub fn is_stationary(model: &ArmaModel) -> bool {
    let mut a: Vec<f64> = model.ar.clone();
    if a.iter().any(|v| !v.is_finite()) {
        return false;
    }
    while let Some(&k) = a.last() {
        if k.abs() >= 1.0 {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..m - 1).map(|i| (a[i] - k * a[m - 2 - i]) / denom).collect();
        a = next;
    }
    true
}

/// Reusable trajectory generator for one model.
pub struct TrajectorySampler<'a> {
    model: &'a ArmaModel,
    burn_in: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(model: &'a ArmaModel) -> Result<Self> {
        if !is_stationary(model) {
            return Err(QnsError::NotStationary);
        }
        Ok(TrajectorySampler { model, burn_in: burn_in(model), x: Vec::new(), y: Vec::new() })
    }

    /// Draw one trajectory of `length` samples after the burn-in, reusing
    /// internal buffers.
    pub fn sample<R: rand::Rng>(&mut self, rng: &mut R, length: usize) -> &[f64] {
        let total = self.burn_in + length;
        let (c, b) = (&self.model.ar, &self.model.ma);
        self.x.clear();
        self.x.extend((0..total).map(|_| -> f64 { StandardNormal.sample(rng) }));
        self.y.clear();
        self.y.resize(total, 0.0);
        for n in 0..total {
            let mut acc = 0.0;
            for (j, bj) in b.iter().enumerate().take(n + 1) {
                acc += bj * self.x[n - j];
            }
            for (i, ci) in c.iter().enumerate().take(n) {
                acc -= ci * self.y[n - 1 - i];
            }
            self.y[n] = acc;
        }
        &self.y[self.burn_in..]
    }
}

/// Samples discarded before a trajectory is returned.
pub fn burn_in(model: &ArmaModel) -> usize {
    1000.max(20 * (model.p() + model.q()))
}

/// One stationary trajectory `y[0..length-1]`, deterministic in `seed`.
pub fn sample_trajectory(model: &ArmaModel, length: usize, seed: u64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(QnsError::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let mut sampler = TrajectorySampler::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng, length).to_vec())
}
