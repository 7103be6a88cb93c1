//! Experiment recipes built from the estimators: reconstruction error
//! metrics and the peak-localization (superresolution) sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::arma::{csv_err, ArmaModel, PowerSpectrum};
use crate::error::Result;
use crate::gradfit::{fit, FitOptions};
use crate::invert::nnls_estimate;
use crate::probe::generate_fttps;
use crate::sim::{expected_dataset, simulate_qns, substream_seed, QnsDataset};
use crate::spectral::{local_maxima, refined_argmax, uniform_grid};

/// Grid used for spectrum reconstruction errors.
pub const ERROR_INTERVALS: usize = 1024;

/// `||S_est - S_true||_2 / ||S_true||_2` on the uniform `[0, pi]` grid.
pub fn relative_l2(estimate: &dyn PowerSpectrum, truth: &dyn PowerSpectrum) -> Result<f64> {
    let grid = uniform_grid(ERROR_INTERVALS);
    let e = estimate.power_on(&grid)?;
    let t = truth.power_on(&grid)?;
    let num: f64 = e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = t.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

/// Frequency of the spectrum maximum on a dense grid, refined by a parabola.
pub fn spectrum_peak(spec: &dyn PowerSpectrum, intervals: usize) -> Result<f64> {
    let grid = uniform_grid(intervals);
    let values = spec.power_on(&grid)?;
    Ok(refined_argmax(&grid, &values))
}

/// Interior local maxima of a spectrum on a dense grid, each refined by a
/// parabola, ascending in frequency.
pub fn spectrum_maxima(spec: &dyn PowerSpectrum, intervals: usize) -> Result<Vec<f64>> {
    let grid = uniform_grid(intervals);
    let values = spec.power_on(&grid)?;
    Ok(local_maxima(&values, 1e-12)
        .into_iter()
        .map(|i| refined_argmax(&grid[i - 1..=i + 1], &values[i - 1..=i + 1]))
        .collect())
}

/// Where a sweep point's data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub gate_count: usize,
    pub num_sequences: usize,
    /// Lower FTTPS bin `j`; centers run from `j w*` towards `(j+1) w*`.
    pub bin: usize,
    /// Number of sub-bin steps; centers are `(j + i/steps) w*` for
    /// `i = 0..points`.
    pub steps: usize,
    pub points: usize,
    pub radius: f64,
    pub gain: f64,
    pub shots: u64,
    /// `0` uses the exact infinite-trajectory probabilities.
    pub trajectories: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn centers(&self) -> Vec<f64> {
        let w_star = PI / self.gate_count as f64;
        (0..self.points)
            .map(|i| (self.bin as f64 + i as f64 / self.steps.max(1) as f64) * w_star)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub true_freq: f64,
    pub nnls_peak: f64,
    pub schwarma_peak: f64,
    pub abs_err_nnls: f64,
    pub abs_err_schwarma: f64,
    /// Error name if this point failed; the peaks are NaN then.
    pub error: Option<String>,
}

/// Synthetic dataset for one resonance, exact or Monte Carlo.
pub fn resonance_dataset(model: &ArmaModel, spec: &SweepSpec, seed: u64) -> Result<QnsDataset> {
    let seqs = generate_fttps(spec.gate_count, spec.num_sequences)?;
    if spec.trajectories == 0 {
        expected_dataset(model, &seqs, spec.shots, seed)
    } else {
        simulate_qns(std::slice::from_ref(model), &seqs, spec.trajectories, spec.shots, seed)
    }
}

/// One sweep point: NNLS argmax bin and AR(2) SchWARMA psd peak.
pub fn sweep_point(center: f64, spec: &SweepSpec, seed: u64, opts: &FitOptions) -> Result<SweepRow> {
    let model = ArmaModel::resonance(center, spec.radius, spec.gain)?;
    let data = resonance_dataset(&model, spec, seed)?;
    let band = nnls_estimate(&data)?.spectrum;
    let (i, _) = band
        .power()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let nnls_peak = band.freqs()[i];
    let fitted = fit(&data, 2, 0, None, None, opts)?;
    let schwarma_peak = spectrum_peak(&fitted.model, 8192)?;
    Ok(SweepRow {
        true_freq: center,
        nnls_peak,
        schwarma_peak,
        abs_err_nnls: (nnls_peak - center).abs(),
        abs_err_schwarma: (schwarma_peak - center).abs(),
        error: None,
    })
}

/// Run every sweep point; failures are recorded per row and do not stop
/// the sweep. Point `i` uses the substream seed `(seed, i)`.
pub fn superres_sweep(spec: &SweepSpec, opts: &FitOptions) -> Vec<SweepRow> {
    spec.centers()
        .par_iter()
        .enumerate()
        .map(|(i, &center)| {
            let seed = substream_seed(spec.seed, &[i as u64]);
            sweep_point(center, spec, seed, opts).unwrap_or_else(|e| SweepRow {
                true_freq: center,
                nnls_peak: f64::NAN,
                schwarma_peak: f64::NAN,
                abs_err_nnls: f64::NAN,
                abs_err_schwarma: f64::NAN,
                error: Some(e.name().to_string()),
            })
        })
        .collect()
}

/// CSV `true_freq,nnls_peak,schwarma_peak,abs_err_nnls,abs_err_schwarma`,
/// frequencies multiplied by `freq_scale` (1 for radians/sample).
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], freq_scale: f64, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["true_freq", "nnls_peak", "schwarma_peak", "abs_err_nnls", "abs_err_schwarma"])
        .map_err(csv_err)?;
    for r in rows {
        wtr.write_record(
            [r.true_freq, r.nnls_peak, r.schwarma_peak, r.abs_err_nnls, r.abs_err_schwarma]
                .map(|v| (v * freq_scale).to_string()),
        )
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}
