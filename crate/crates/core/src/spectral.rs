//! Uniform half-band grids and the even-extension cosine transform.
//!
//! Every spectrum in this crate is real and even, so it is stored on
//! `[0, pi]`. A grid of `intervals + 1` points `omega_n = n*pi/intervals`
//! with trapezoid weights is the same quadrature as a rectangle rule on
//! `2*intervals` points around the full circle, which is spectrally
//! accurate for the smooth periodic integrands that show up here.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

/// Default number of quadrature intervals on `[0, pi]` for overlap integrals.
pub const QUAD_INTERVALS: usize = 4096;

/// Default number of intervals on `[0, pi]` for the autocovariance and
/// cepstrum transforms (an 8192-point transform around the full circle).
pub const TRANSFORM_INTERVALS: usize = 4096;

/// Dense grid used when a band spectrum is resampled before transforming.
pub const DENSE_INTERVALS: usize = 4096;

/// `intervals + 1` uniformly spaced frequencies covering `[0, pi]`.
pub fn uniform_grid(intervals: usize) -> Vec<f64> {
    assert!(intervals > 0, "grid needs at least one interval");
    (0..=intervals)
        .map(|n| {
            if n == intervals {
                PI
            } else {
                n as f64 * PI / intervals as f64
            }
        })
        .collect()
}

/// Weights `w_n` such that `sum_n w_n f(omega_n)` approximates
/// `(1/pi) * integral_0^pi f`, i.e. the full-circle mean of an even `f`.
pub fn trapezoid_weights(intervals: usize) -> Vec<f64> {
    let mut w = vec![1.0 / intervals as f64; intervals + 1];
    w[0] *= 0.5;
    w[intervals] *= 0.5;
    w
}

/// True when `freqs` is exactly the uniform `[0, pi]` grid with
/// `freqs.len() - 1` intervals (to within rounding).
pub fn is_uniform_half_grid(freqs: &[f64]) -> bool {
    if freqs.len() < 3 {
        return false;
    }
    let intervals = freqs.len() - 1;
    let step = PI / intervals as f64;
    freqs
        .iter()
        .enumerate()
        .all(|(n, &w)| (w - n as f64 * step).abs() <= 1e-9 * step.max(1.0))
}

/// Even-extension cosine transform of samples on the uniform `[0, pi]` grid:
///
/// `out[k] = sum_n w_n * values[n] * cos(k * omega_n)` for `k < num_lags`,
///
/// with trapezoid weights `w_n`. This is the inverse DFT of the even
/// extension of `values` to the full circle.
pub fn cosine_transform(values: &[f64], num_lags: usize) -> Vec<f64> {
    let intervals = values.len() - 1;
    let n = 2 * intervals;
    let mut buf: Vec<Complex64> = Vec::with_capacity(n);
    buf.extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
    buf.extend(values[1..intervals].iter().rev().map(|&v| Complex64::new(v, 0.0)));
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    (0..num_lags)
        .map(|k| buf[k % n].re * scale)
        .collect()
}

/// 3-point parabolic interpolation around a sampled maximum at index `i`
/// of a uniformly spaced series with spacing `step`. Returns the offset of
/// the vertex from `i` in units of frequency, clamped to half a step.
pub fn parabolic_offset(left: f64, center: f64, right: f64, step: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    let delta = 0.5 * (left - right) / denom;
    delta.clamp(-0.5, 0.5) * step
}

/// Locate the global maximum of `values` sampled on uniform `freqs`,
/// refined with a parabola through the neighbouring samples.
pub fn refined_argmax(freqs: &[f64], values: &[f64]) -> f64 {
    let (i, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if i == 0 || i + 1 >= values.len() {
        return freqs[i];
    }
    let step = freqs[i + 1] - freqs[i];
    freqs[i] + parabolic_offset(values[i - 1], values[i], values[i + 1], step)
}

/// Indices of strict interior local maxima, ignoring ripples smaller than
/// `rel_tol` relative to the peak value.
pub fn local_maxima(values: &[f64], rel_tol: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let v = values[i];
        let margin = rel_tol * v.abs();
        if v - values[i - 1] > margin && v - values[i + 1] >= margin && v.is_finite() {
            out.push(i);
        }
    }
    out
}
