//! Fixed-total-time pi-pulse probe sequences (FTTPS) and their filter
//! functions.
//!
//! A probe is a toggling-frame sign sequence `s[0..K-1]`. The accumulated
//! dephasing phase is `phi = sum_k s[k] y[k]`, so for Gaussian noise
//! `E[cos phi] = exp(-chi)` with
//!
//! ```text
//! chi = (1/2) s^T R s = (1/2pi) * integral_{-pi}^{pi} S(w) F(w) dw,
//! F(w) = (1/2) |sum_k s[k] e^{-ikw}|^2.
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::arma::{autocovariance, csv_err, ArmaModel, PowerSpectrum};
use crate::error::{QnsError, Result};
use crate::spectral::{trapezoid_weights, uniform_grid, QUAD_INTERVALS};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSequence {
    signs: Vec<f64>,
    index: usize,
}

impl ProbeSequence {
    /// FTTPS sequence `j` of length `K`: `s[k] = (-1)^floor(k j / K)`.
    pub fn fttps(gate_count: usize, index: usize) -> Result<Self> {
        if gate_count == 0 || index == 0 || index > gate_count {
            return Err(QnsError::InvalidCounts(format!(
                "need 1 <= j <= K, got j = {index}, K = {gate_count}"
            )));
        }
        let signs = (0..gate_count)
            .map(|k| if (k * index / gate_count) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Ok(ProbeSequence { signs, index })
    }

    /// Arbitrary toggling sequence labelled with harmonic `index`.
    pub fn from_signs(signs: Vec<f64>, index: usize) -> Result<Self> {
        if signs.is_empty() || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(QnsError::InvalidArgument("toggling signs must be +1 or -1".into()));
        }
        if index == 0 || index > signs.len() {
            return Err(QnsError::InvalidCounts(format!("index {index} out of range")));
        }
        Ok(ProbeSequence { signs, index })
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn gate_count(&self) -> usize {
        self.signs.len()
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Nominal filter peak `j * pi / K`.
    pub fn peak_freq(&self) -> f64 {
        self.index as f64 * PI / self.signs.len() as f64
    }

    /// `F(w) = |G(w)|^2 / 2` at one frequency.
    pub fn filter_at(&self, w: f64) -> f64 {
        let step = Complex64::from_polar(1.0, -w);
        let mut phase = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for &s in &self.signs {
            acc += phase * s;
            phase *= step;
        }
        0.5 * acc.norm_sqr()
    }
}

/// FTTPS sequences `j = 1..J`, all of length `K`.
pub fn generate_fttps(gate_count: usize, num_sequences: usize) -> Result<Vec<ProbeSequence>> {
    if num_sequences == 0 || num_sequences > gate_count {
        return Err(QnsError::InvalidCounts(format!(
            "need 1 <= J <= K, got J = {num_sequences}, K = {gate_count}"
        )));
    }
    (1..=num_sequences).map(|j| ProbeSequence::fttps(gate_count, j)).collect()
}

/// Serialized form of an FTTPS set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSet {
    pub gate_count: usize,
    pub indices: Vec<usize>,
}

impl ProbeSet {
    pub fn from_sequences(seqs: &[ProbeSequence]) -> Result<Self> {
        let gate_count = seqs.first().map(|s| s.gate_count()).unwrap_or(0);
        if seqs.iter().any(|s| s.gate_count() != gate_count) {
            return Err(QnsError::InvalidCounts("sequences differ in gate count".into()));
        }
        Ok(ProbeSet { gate_count, indices: seqs.iter().map(|s| s.index()).collect() })
    }

    pub fn sequences(&self) -> Result<Vec<ProbeSequence>> {
        self.indices.iter().map(|&j| ProbeSequence::fttps(self.gate_count, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterFunction {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
}

impl FilterFunction {
    /// CSV with header `freq,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["freq", "value"]).map_err(csv_err)?;
        for (f, v) in self.freqs.iter().zip(&self.values) {
            wtr.write_record([f.to_string(), v.to_string()]).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn filter_function(seq: &ProbeSequence, freqs: &[f64]) -> FilterFunction {
    FilterFunction { freqs: freqs.to_vec(), values: freqs.iter().map(|&w| seq.filter_at(w)).collect() }
}

/// Filter functions of a set of sequences on the uniform `[0, pi]`
/// quadrature grid, with trapezoid weights folded in. Row `k` holds
/// `w_n * F_k(omega_n)`, so `chi_k = sum_n row_k[n] * S(omega_n)`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    grid: Vec<f64>,
    rows: usize,
    weighted: Vec<f64>,
}

impl FilterBank {
    pub fn new(seqs: &[ProbeSequence], intervals: usize) -> Self {
        let grid = uniform_grid(intervals);
        let weights = trapezoid_weights(intervals);
        let cols = grid.len();
        let mut weighted = vec![0.0; seqs.len() * cols];
        for (k, seq) in seqs.iter().enumerate() {
            let row = &mut weighted[k * cols..(k + 1) * cols];
            for (n, (&w, &q)) in grid.iter().zip(&weights).enumerate() {
                row[n] = q * seq.filter_at(w);
            }
        }
        FilterBank { grid, rows: seqs.len(), weighted }
    }

    pub fn with_default_grid(seqs: &[ProbeSequence]) -> Self {
        FilterBank::new(seqs, QUAD_INTERVALS)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn num_sequences(&self) -> usize {
        self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let cols = self.grid.len();
        &self.weighted[k * cols..(k + 1) * cols]
    }

    /// Overlap integrals for a spectrum sampled on [`FilterBank::grid`].
    pub fn chi_from_power(&self, power: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|k| dot(self.row(k), power)).collect()
    }

    /// `sum_k coef_k * row_k`, the adjoint of [`FilterBank::chi_from_power`].
    pub fn adjoint(&self, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (k, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(self.row(k)) {
                *o += c * r;
            }
        }
        out
    }

    /// Overlap integrals for any spectrum.
    pub fn chi<S: PowerSpectrum + ?Sized>(&self, spectrum: &S) -> Result<Vec<f64>> {
        let power = spectrum.power_on(&self.grid)?;
        check_non_negative(&self.grid, &power)?;
        Ok(self.chi_from_power(&power))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_non_negative(grid: &[f64], power: &[f64]) -> Result<()> {
    match power.iter().position(|v| !(*v >= 0.0)) {
        Some(i) => Err(QnsError::NegativePower { freq: grid[i], value: power[i] }),
        None => Ok(()),
    }
}

/// Overlap integral `chi` by trapezoid quadrature on the default grid.
pub fn overlap_chi<S: PowerSpectrum + ?Sized>(spectrum: &S, seq: &ProbeSequence) -> Result<f64> {
    overlap_chi_on(spectrum, seq, QUAD_INTERVALS)
}

pub fn overlap_chi_on<S: PowerSpectrum + ?Sized>(
    spectrum: &S,
    seq: &ProbeSequence,
    intervals: usize,
) -> Result<f64> {
    let grid = uniform_grid(intervals);
    let weights = trapezoid_weights(intervals);
    let power = spectrum.power_on(&grid)?;
    check_non_negative(&grid, &power)?;
    Ok(grid
        .iter()
        .zip(&weights)
        .zip(&power)
        .map(|((&w, &q), &s)| q * s * seq.filter_at(w))
        .sum())
}

/// Time-domain overlap `(1/2) s^T R s` with `R` the Toeplitz
/// autocovariance matrix of a stationary model.
pub fn overlap_chi_time(model: &ArmaModel, seq: &ProbeSequence) -> Result<f64> {
    let k = seq.gate_count();
    let r = autocovariance(model, k)?;
    let r = r.lags();
    let s = seq.signs();
    // (1/2) sum_{i,j} s_i s_j r[|i-j|] = (1/2) (r[0] K + 2 sum_d r[d] a[d])
    let mut chi = 0.5 * r[0] * k as f64;
    for d in 1..k {
        let a: f64 = (0..k - d).map(|i| s[i] * s[i + d]).sum();
        chi += r[d] * a;
    }
    Ok(chi)
}

/// `p = 1/2 + exp(-chi)/2`.
pub fn survival_from_chi(chi: f64) -> f64 {
    0.5 + 0.5 * (-chi).exp()
}

pub fn predict_survival<S: PowerSpectrum + ?Sized>(spectrum: &S, seq: &ProbeSequence) -> Result<f64> {
    overlap_chi(spectrum, seq).map(survival_from_chi)
}
