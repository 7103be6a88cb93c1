//! Nonparametric spectrum estimation: survival probabilities to overlap
//! integrals, band filter matrix, NNLS inversion, spline interpolation and
//! autocovariance recovery.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::arma::{AutocovarianceSeq, Interpolation, SpectrumEstimate};
use crate::error::{QnsError, Result};
use crate::nnls::nnls;
use crate::probe::ProbeSequence;
use crate::sim::QnsDataset;
use crate::spectral::{cosine_transform, is_uniform_half_grid, uniform_grid, DENSE_INTERVALS};
use crate::spline::NaturalCubicSpline;

/// Smallest clipping margin used for exact (`shots = 0`) data.
pub const MIN_CLIP_EPS: f64 = 1e-6;
/// KKT tolerance of the NNLS solve.
pub const NNLS_TOL: f64 = 1e-10;

/// Overlap integrals recovered from survival probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiVector {
    pub values: Vec<f64>,
    /// Number of entries clipped at `chi_max = -ln(2 eps)`.
    pub clip_count: usize,
    pub clipped: Vec<bool>,
}

/// Clipping margin `eps = max(1/(2 shots), 1e-6)`.
pub fn clip_eps(shots: u64) -> f64 {
    if shots == 0 {
        MIN_CLIP_EPS
    } else {
        (0.5 / shots as f64).max(MIN_CLIP_EPS)
    }
}

/// `chi_k = -ln(2 (p_k - 1/2))`. Probabilities at or below `1/2 + eps`
/// carry no usable information and are clipped to `-ln(2 eps)`.
pub fn chi_from_probs(dataset: &QnsDataset) -> ChiVector {
    chi_from_probs_with(dataset.probs(), clip_eps(dataset.shots()))
}

pub fn chi_from_probs_with(probs: &[f64], eps: f64) -> ChiVector {
    let chi_max = -(2.0 * eps).ln();
    let mut clipped = vec![false; probs.len()];
    let values = probs
        .iter()
        .zip(clipped.iter_mut())
        .map(|(&p, c)| {
            if p > 0.5 + eps {
                (-(2.0 * (p - 0.5)).ln()).max(0.0)
            } else {
                *c = true;
                chi_max
            }
        })
        .collect();
    let clip_count = clipped.iter().filter(|&&c| c).count();
    ChiVector { values, clip_count, clipped }
}

/// Band filter matrix: `chi ~ F S` with `S` sampled at `freqs`.
#[derive(Debug, Clone)]
pub struct FilterMatrix {
    pub freqs: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// Quadrature weight of each column, `sum_j weights[j] S_j ~ r[0]`.
    pub weights: Vec<f64>,
}

impl FilterMatrix {
    /// `F S` for a band spectrum on [`FilterMatrix::freqs`].
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(power)).iter().copied().collect()
    }
}

/// Peak frequencies `j pi / K` of the sequences, ascending and deduplicated.
pub fn peak_grid(seqs: &[ProbeSequence]) -> Vec<f64> {
    let mut f: Vec<f64> = seqs.iter().map(|s| s.peak_freq()).collect();
    f.sort_by(f64::total_cmp);
    f.dedup();
    f
}

/// Trapezoid rule on the nodes `{0} + freqs + {pi}` over `[0, pi]`, with the
/// end nodes absent from `freqs` folded into the nearest column (the
/// spectrum is taken as constant there). On the full FTTPS grid this is
/// exact for white noise, since `F` is a trigonometric polynomial of
/// degree below `2K`.
pub fn build_filter_matrix(seqs: &[ProbeSequence], freqs: &[f64]) -> Result<FilterMatrix> {
    let n = freqs.len();
    if n == 0 || seqs.is_empty() {
        return Err(QnsError::InvalidArgument("filter matrix needs sequences and frequencies".into()));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) || freqs[0] < 0.0 || freqs[n - 1] > PI + 1e-12 {
        return Err(QnsError::InvalidArgument(
            "estimation frequencies must be strictly increasing within [0, pi]".into(),
        ));
    }
    let lead = freqs[0] > 0.0;
    let tail = freqs[n - 1] < PI;
    let mut nodes = Vec::with_capacity(n + 2);
    if lead {
        nodes.push(0.0);
    }
    nodes.extend_from_slice(freqs);
    if tail {
        nodes.push(PI);
    }
    let m = nodes.len();
    let node_weight = |i: usize| {
        let left = if i == 0 { 0.0 } else { nodes[i] - nodes[i - 1] };
        let right = if i + 1 == m { 0.0 } else { nodes[i + 1] - nodes[i] };
        (left + right) / (2.0 * PI)
    };
    let column_of = |i: usize| (i as isize - lead as isize).clamp(0, n as isize - 1) as usize;

    let mut matrix = DMatrix::<f64>::zeros(seqs.len(), n);
    let mut weights = vec![0.0; n];
    for i in 0..m {
        let wq = node_weight(i);
        let col = column_of(i);
        weights[col] += wq;
        for (k, seq) in seqs.iter().enumerate() {
            matrix[(k, col)] += wq * seq.filter_at(nodes[i]);
        }
    }
    Ok(FilterMatrix { freqs: freqs.to_vec(), matrix, weights })
}

/// NNLS solver diagnostics, serialized alongside the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsDiagnostics {
    pub residual: f64,
    pub iterations: usize,
    pub clip_count: usize,
}

#[derive(Debug, Clone)]
pub struct NnlsOutput {
    /// Band powers at the filter-matrix frequencies (no interpolation).
    pub spectrum: SpectrumEstimate,
    pub diagnostics: NnlsDiagnostics,
}

/// `argmin_{S >= 0} ||F S - chi||_2`, at most `3 * cols` outer iterations.
pub fn nnls_solve(f: &FilterMatrix, chi: &ChiVector) -> Result<NnlsOutput> {
    if f.matrix.nrows() != chi.values.len() {
        return Err(QnsError::InvalidArgument(format!(
            "filter matrix has {} rows but {} overlap values were given",
            f.matrix.nrows(),
            chi.values.len()
        )));
    }
    let b = DVector::from_column_slice(&chi.values);
    let sol = nnls(&f.matrix, &b, NNLS_TOL, 3 * f.matrix.ncols())?;
    let spectrum = SpectrumEstimate::new(f.freqs.clone(), sol.x.iter().copied().collect(), Interpolation::None)?;
    Ok(NnlsOutput {
        spectrum,
        diagnostics: NnlsDiagnostics {
            residual: sol.residual,
            iterations: sol.iterations,
            clip_count: chi.clip_count,
        },
    })
}

/// Full NNLS pipeline on the dataset's peak grid.
pub fn nnls_estimate(dataset: &QnsDataset) -> Result<NnlsOutput> {
    let chi = chi_from_probs(dataset);
    let f = build_filter_matrix(dataset.sequences(), &peak_grid(dataset.sequences()))?;
    nnls_solve(&f, &chi)
}

/// Natural cubic spline through `spec`, evaluated on `dense_freqs` and
/// clamped at zero.
pub fn interpolate(spec: &SpectrumEstimate, dense_freqs: &[f64]) -> Result<SpectrumEstimate> {
    let n = spec.freqs().len();
    if n < 4 {
        return Err(QnsError::TooFewPoints { needed: 4, got: n });
    }
    let spline = NaturalCubicSpline::new(spec.freqs(), spec.power())?;
    let power = dense_freqs.iter().map(|&w| spline.eval(w).max(0.0)).collect();
    SpectrumEstimate::new(dense_freqs.to_vec(), power, Interpolation::CubicSpline)
}

/// `r[k] = (1/pi) integral_0^pi S(w) cos(k w) dw`, by trapezoid on the
/// dense uniform grid (the spectrum is resampled there unless it already
/// lives on a uniform `[0, pi]` grid).
pub fn autocov_from_spectrum(spec: &SpectrumEstimate, num_lags: usize) -> Result<AutocovarianceSeq> {
    if num_lags == 0 {
        return Err(QnsError::InvalidArgument("num_lags must be positive".into()));
    }
    let values = if is_uniform_half_grid(spec.freqs()) {
        spec.power().to_vec()
    } else {
        spec.evaluate(&uniform_grid(DENSE_INTERVALS))?
    };
    let intervals = values.len() - 1;
    if num_lags > intervals {
        return Err(QnsError::InvalidArgument(format!("at most {intervals} lags are available")));
    }
    AutocovarianceSeq::new(cosine_transform(&values, num_lags))
}

/// White-noise power `2 mean(chi) / K` over unclipped sequences.
pub fn mean_power_estimate(dataset: &QnsDataset) -> Result<f64> {
    let chi = chi_from_probs(dataset);
    let kept: Vec<(f64, usize)> = chi
        .values
        .iter()
        .zip(&chi.clipped)
        .zip(dataset.sequences())
        .filter(|((_, c), _)| !**c)
        .map(|((&v, _), s)| (v, s.gate_count()))
        .collect();
    if kept.is_empty() {
        return Err(QnsError::AllClipped);
    }
    let mean: f64 = kept.iter().map(|(v, k)| 2.0 * v / *k as f64).sum::<f64>() / kept.len() as f64;
    Ok(mean)
}
