//! Autocovariance-based estimators: Yule-Walker AR fits, MA spectral
//! factorization, cepstral ARMA with kappa rescaling, and MUSIC.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arma::{ma_autocovariance, ArmaModel, AutocovarianceSeq, Interpolation, PowerSpectrum, SpectrumEstimate};
use crate::error::{QnsError, Result};
use crate::invert::{autocov_from_spectrum, build_filter_matrix, nnls_estimate, peak_grid};
use crate::optim::minimize_nonneg;
use crate::probe::{survival_from_chi, FilterBank};
use crate::sim::QnsDataset;
use crate::spectral::{
    cosine_transform, is_uniform_half_grid, local_maxima, parabolic_offset, trapezoid_weights, uniform_grid,
    TRANSFORM_INTERVALS,
};

// ---------------------------------------------------------------- Yule-Walker

/// AR(p) fit from autocovariance lags.
///
/// The standard variant solves the `p x p` Toeplitz system by Levinson-Durbin;
/// the overdetermined variant uses every available lag `1..L-1` and solves
/// by QR least squares. In both, `b0^2 = r[0] + sum_k c_k r[k]`.
pub fn yule_walker(r: &AutocovarianceSeq, p: usize, overdetermined: bool) -> Result<ArmaModel> {
    let lags = r.lags();
    if lags.len() < p + 1 {
        return Err(QnsError::TooFewPoints { needed: p + 1, got: lags.len() });
    }
    let c = if p == 0 {
        Vec::new()
    } else if overdetermined {
        modified_yule_walker(r, p, 0)?
    } else {
        levinson(&lags[..=p])?
    };
    let b0_sq = lags[0] + c.iter().zip(&lags[1..]).map(|(ci, ri)| ci * ri).sum::<f64>();
    if b0_sq < -1e-12 * lags[0].abs() {
        return Err(QnsError::NegativeResidualVariance(b0_sq));
    }
    ArmaModel::new(c, vec![b0_sq.max(0.0).sqrt()])
}

/// Levinson-Durbin on `r[0..=p]`, returning stored-convention `c_1..c_p`.
fn levinson(r: &[f64]) -> Result<Vec<f64>> {
    let p = r.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for m in 1..=p {
        if !(err > 1e-14 * r[0]) {
            return Err(QnsError::SingularSystem(format!(
                "Toeplitz autocovariance matrix is singular at order {m}"
            )));
        }
        let acc: f64 = (0..m).map(|i| a[i] * r[m - i]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for i in 1..m {
            a[i] = prev[i] + k * prev[m - i];
        }
        a[m] = k;
        err *= 1.0 - k * k;
    }
    Ok(a[1..].to_vec())
}

/// AR coefficients of an ARMA(p, q) process from the extended Yule-Walker
/// equations `r[k] + sum_i c_i r[|k-i|] = 0` for `k = q+1 .. L-1`, which
/// hold exactly for lags beyond the MA order. Solved by QR least squares.
pub fn modified_yule_walker(r: &AutocovarianceSeq, p: usize, q: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Ok(Vec::new());
    }
    let lags = r.lags();
    let rows = lags.len().saturating_sub(q + 1);
    if rows < p {
        return Err(QnsError::TooFewPoints { needed: p + q + 1, got: lags.len() });
    }
    let m = DMatrix::from_fn(rows, p, |row, col| {
        let k = row + q + 1;
        lags[k.abs_diff(col + 1)]
    });
    let rhs = DVector::from_fn(rows, |row, _| -lags[row + q + 1]);
    least_squares(m, &rhs).map(|x| x.iter().copied().collect())
}

fn least_squares(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = m.qr();
    let r = qr.r();
    let diag = r.diagonal();
    let scale = diag.amax();
    if !(scale > 0.0) || diag.iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(QnsError::SingularSystem("least-squares system is rank deficient".into()));
    }
    let qtb = qr.q().tr_mul(rhs);
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| QnsError::SingularSystem("triangular solve failed".into()))
}

// ----------------------------------------------------------------- MA descent

/// Result of [`ma_fit`].
#[derive(Debug, Clone)]
pub struct MaFit {
    pub model: ArmaModel,
    /// `sum_{k<=q} (r[k] - sum_j b_j b_{j-k})^2` at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step of the
    /// returned descent; non-increasing.
    pub trace: Vec<f64>,
}

pub const MA_MAX_ITER: usize = 500;
pub const MA_GRAD_TOL: f64 = 1e-10;

/// MA(q) spectral factor of `r[0..=q]` by damped Newton (Levenberg-Marquardt)
/// descent on the quartic objective; accepted iterates never increase it.
/// Starts from `b0 = sqrt(max(r0 + 2 sum r_j, r0))`, falling back to
/// `b0 = sqrt(r0)`. Non-convergence is reported through the flag with the
/// best iterate returned.
pub fn ma_fit(r: &AutocovarianceSeq, q: usize) -> Result<MaFit> {
    let lags = r.lags();
    if lags.len() < q + 1 {
        return Err(QnsError::TooFewPoints { needed: q + 1, got: lags.len() });
    }
    let target = &lags[..=q];
    let sum: f64 = target[0] + 2.0 * target[1..].iter().sum::<f64>();
    let first = ma_descent(target, sum.max(target[0]).max(0.0).sqrt());
    let best = if first.converged {
        first
    } else {
        let second = ma_descent(target, target[0].max(0.0).sqrt());
        if second.converged || second.objective < first.objective {
            MaFitRaw { iterations: first.iterations + second.iterations, ..second }
        } else {
            MaFitRaw { iterations: first.iterations + second.iterations, ..first }
        }
    };
    let mut b = best.b;
    if b[0] < 0.0 {
        b.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(MaFit {
        model: ArmaModel::new(Vec::new(), b)?,
        objective: best.objective,
        iterations: best.iterations,
        converged: best.converged,
        trace: best.trace,
    })
}

struct MaFitRaw {
    b: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn ma_residual(b: &[f64], target: &[f64]) -> Vec<f64> {
    ma_autocovariance(b, target.len()).iter().zip(target).map(|(g, t)| g - t).collect()
}

fn ma_descent(target: &[f64], b0: f64) -> MaFitRaw {
    let n = target.len();
    let mut b = vec![0.0; n];
    b[0] = b0;
    let mut e = ma_residual(&b, target);
    let mut f: f64 = e.iter().map(|v| v * v).sum();
    let mut lambda = 0.0;
    let scale = target[0].abs().max(f64::MIN_POSITIVE);
    let mut trace = vec![f];
    for it in 0..MA_MAX_ITER {
        // d g_k / d b_m = b_{m-k} + b_{m+k}
        let jac = DMatrix::from_fn(n, n, |k, m| {
            let mut v = 0.0;
            if m >= k {
                v += b[m - k];
            }
            if m + k < n {
                v += b[m + k];
            }
            v
        });
        let ev = DVector::from_column_slice(&e);
        let grad = 2.0 * jac.tr_mul(&ev);
        if grad.norm() < MA_GRAD_TOL || f == 0.0 {
            return MaFitRaw { b, objective: f, iterations: it, converged: true, trace };
        }
        let jtj = jac.tr_mul(&jac);
        let jte = jac.tr_mul(&ev);
        let mut accepted = false;
        while lambda < 1e30 * scale {
            let mut sys = jtj.clone();
            for i in 0..n {
                sys[(i, i)] += lambda;
            }
            if let Some(step) = sys.lu().solve(&(-&jte)) {
                let trial: Vec<f64> = b.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
                let te = ma_residual(&trial, target);
                let tf: f64 = te.iter().map(|v| v * v).sum();
                if tf.is_finite() && tf < f {
                    b = trial;
                    e = te;
                    f = tf;
                    trace.push(f);
                    lambda *= 0.1;
                    if lambda < 1e-12 * scale {
                        lambda = 0.0;
                    }
                    accepted = true;
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-8 * scale } else { lambda * 10.0 };
        }
        if !accepted {
            // No descent direction left at working precision.
            let converged = f <= 1e-24 * scale * scale;
            return MaFitRaw { b, objective: f, iterations: it, converged, trace };
        }
    }
    MaFitRaw { b, objective: f, iterations: MA_MAX_ITER, converged: false, trace }
}

// ------------------------------------------------------------- cepstral ARMA

/// Relative floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Minimum number of autocovariance lags used for the AR part.
pub const CEPSTRAL_MIN_LAGS: usize = 64;

/// Spectrum values on the transform grid, floored at `LOG_FLOOR * max`.
fn floored_log_spectrum(spec: &dyn PowerSpectrum) -> Result<Vec<f64>> {
    let grid = uniform_grid(TRANSFORM_INTERVALS);
    let values = spec.power_on(&grid)?;
    let max = values.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(QnsError::DegenerateSpectrum { floored: values.len(), total: values.len() });
    }
    let floor = LOG_FLOOR * max;
    let floored = values.iter().filter(|&&v| v < floor).count();
    if floored * 10 > values.len() {
        return Err(QnsError::DegenerateSpectrum { floored, total: values.len() });
    }
    Ok(values.iter().map(|&v| v.max(floor).ln()).collect())
}

/// Real cepstrum `c[n] = (1/pi) integral_0^pi ln S(w) cos(n w) dw` for `n < len`.
pub fn cepstrum(spec: &dyn PowerSpectrum, len: usize) -> Result<Vec<f64>> {
    Ok(cosine_transform(&floored_log_spectrum(spec)?, len))
}

/// Normalized MA coefficients `b'_0 = 1, b'_1..b'_q` from the cepstrum and
/// the AR coefficients (`a_0 = 1`, `a_m = c_m`) by the recursion
///
/// ```text
/// k b'_k = k c_k - sum_{m=1}^{k-1} m b'_m a_{k-m} + sum_{m=1}^{k} m a_m b'_{k-m}
///          + sum_{j=1}^{k-1} j c_j sum_{m=0}^{k-j} a_m b'_{k-j-m}.
/// ```
pub fn cepstral_ma(ceps: &[f64], ar: &[f64], q: usize) -> Vec<f64> {
    let a = |m: usize| match m {
        0 => 1.0,
        m if m <= ar.len() => ar[m - 1],
        _ => 0.0,
    };
    let mut bp = vec![1.0];
    for k in 1..=q {
        let kf = k as f64;
        let mut t = kf * ceps[k];
        t -= (1..k).map(|m| m as f64 * bp[m] * a(k - m)).sum::<f64>();
        t += (1..=k).map(|m| m as f64 * a(m) * bp[k - m]).sum::<f64>();
        for j in 1..k {
            let inner: f64 = (0..=k - j).map(|m| a(m) * bp[k - j - m]).sum();
            t += j as f64 * ceps[j] * inner;
        }
        bp.push(t / kf);
    }
    bp
}

/// ARMA(p, q) with `b'_0 = 1`: AR part from the extended Yule-Walker
/// equations on the spectrum's autocovariance, MA part from the cepstrum.
pub fn cepstral_arma_unscaled(spec: &SpectrumEstimate, p: usize, q: usize) -> Result<ArmaModel> {
    let ceps = cepstrum(spec, q + 1)?;
    let ar = if p == 0 {
        Vec::new()
    } else {
        let lags = CEPSTRAL_MIN_LAGS.max(2 * (p + q) + 2);
        modified_yule_walker(&autocov_from_spectrum(spec, lags)?, p, q)?
    };
    let ma = cepstral_ma(&ceps, &ar, q);
    ArmaModel::new(ar, ma)
}

/// [`cepstral_arma_unscaled`] followed by `b = kappa b'` with `kappa^2` the
/// ratio of mean powers of `spec` and the unscaled model.
pub fn cepstral_arma(spec: &SpectrumEstimate, p: usize, q: usize) -> Result<ArmaModel> {
    let unscaled = cepstral_arma_unscaled(spec, p, q)?;
    let k2 = kappa_initial(&unscaled, spec)?;
    Ok(unscaled.scale_ma(k2.sqrt()))
}

/// Trapezoid mean of a spectrum over `[0, pi]` on the transform grid.
fn mean_power(spec: &dyn PowerSpectrum) -> Result<f64> {
    let grid = uniform_grid(TRANSFORM_INTERVALS);
    let w = trapezoid_weights(TRANSFORM_INTERVALS);
    Ok(spec.power_on(&grid)?.iter().zip(&w).map(|(s, w)| s * w).sum())
}

/// `kappa^2 = mean(reference) / mean(|B'|^2/|A|^2)`.
pub fn kappa_initial(unscaled: &ArmaModel, reference: &dyn PowerSpectrum) -> Result<f64> {
    let model_power = mean_power(unscaled)?;
    let ref_power = mean_power(reference)?;
    if !(model_power > 0.0) {
        return Err(QnsError::DegenerateSpectrum { floored: 1, total: 1 });
    }
    Ok(ref_power / model_power)
}

#[derive(Debug, Clone)]
pub struct KappaFit {
    pub model: ArmaModel,
    pub kappa2: f64,
    pub kappa2_init: f64,
    pub mse: f64,
}

pub const KAPPA_TOL: f64 = 1e-8;

/// Rescale the MA part so that the predicted survival probabilities best
/// match the data. `kappa^2` starts from the band-power ratio against the
/// NNLS estimate and is refined by golden-section search over `[0, inf)`.
pub fn kappa_optimize(unscaled: &ArmaModel, dataset: &QnsDataset) -> Result<KappaFit> {
    let seqs = dataset.sequences();
    let init = match nnls_estimate(dataset) {
        Ok(est) => {
            let f = build_filter_matrix(seqs, &peak_grid(seqs))?;
            let nnls_power: f64 = est.spectrum.power().iter().zip(&f.weights).map(|(s, w)| s * w).sum();
            let model_power: f64 =
                unscaled.power_values(&f.freqs)?.iter().zip(&f.weights).map(|(s, w)| s * w).sum();
            if model_power > 0.0 {
                nnls_power / model_power
            } else {
                1.0
            }
        }
        Err(_) => 1.0,
    };
    let chi_unit = FilterBank::with_default_grid(seqs).chi(unscaled)?;
    let probs = dataset.probs();
    let mse = |k2: f64| -> f64 {
        chi_unit
            .iter()
            .zip(probs)
            .map(|(c, p)| (survival_from_chi(k2 * c) - p).powi(2))
            .sum::<f64>()
            / probs.len() as f64
    };
    let (kappa2, best) = minimize_nonneg(mse, init, 1.0, KAPPA_TOL);
    Ok(KappaFit { model: unscaled.scale_ma(kappa2.sqrt()), kappa2, kappa2_init: init, mse: best })
}

// ---------------------------------------------------------------------- MUSIC

/// MUSIC pseudo-spectrum and peak locations.
#[derive(Debug, Clone)]
pub struct MusicResult {
    /// Pseudo-spectrum on the `[0, pi]` grid.
    pub pseudo: SpectrumEstimate,
    /// The largest local maxima over `(-pi, pi)` excluding zero, ascending.
    /// For real data every tone appears as a `+-` pair.
    pub peak_freqs: Vec<f64>,
    /// Fewer than the requested number of maxima exist.
    pub too_few_maxima: bool,
}

impl MusicResult {
    pub fn positive_peaks(&self) -> Vec<f64> {
        self.peak_freqs.iter().copied().filter(|w| *w > 0.0).collect()
    }
}

/// Serialized MUSIC summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MusicReport {
    pub peaks: Vec<f64>,
    pub pseudo_csv: String,
    pub too_few_maxima: bool,
}

/// Relative eigenvalue gap below which eigenvalues count as tied.
const EIG_TIE: f64 = 1e-10;
/// Relative ripple below which a grid maximum is not a peak.
const PEAK_RIPPLE: f64 = 1e-12;

/// MUSIC on the `J x J` Toeplitz matrix of `r` (`J = len(r)`).
pub fn music(r: &AutocovarianceSeq, num_components: usize, grid: &[f64]) -> Result<MusicResult> {
    let lags = r.lags();
    let j = lags.len();
    let mat = DMatrix::from_fn(j, j, |a, b| Complex64::new(lags[a.abs_diff(b)], 0.0));
    music_matrix(&mat, num_components, grid)
}

/// MUSIC on an arbitrary Hermitian covariance matrix. `grid` must be a
/// uniform `[0, pi]` grid; the scan mirrors it onto `(-pi, 0)`.
///
/// If the eigenvalues straddling the signal/noise split are tied, the noise
/// projector gives the tied eigenspace the weight of its noise share, which
/// keeps the pseudo-spectrum independent of the eigenvector basis chosen
/// inside that space (white data gives a flat pseudo-spectrum).
pub fn music_matrix(r: &DMatrix<Complex64>, num_components: usize, grid: &[f64]) -> Result<MusicResult> {
    let j = r.nrows();
    if r.ncols() != j || j <= num_components {
        return Err(QnsError::InvalidCounts(format!(
            "MUSIC needs a square matrix larger than the component count ({num_components}), got {j}x{}",
            r.ncols()
        )));
    }
    if !is_uniform_half_grid(grid) {
        return Err(QnsError::InvalidArgument("MUSIC grid must be uniform on [0, pi]".into()));
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let tie = EIG_TIE * lam.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

    // Noise weight per sorted eigenvector.
    let mut weight = vec![0.0; j];
    for (i, w) in weight.iter_mut().enumerate() {
        *w = if i >= num_components { 1.0 } else { 0.0 };
    }
    if num_components > 0 {
        let split = lam[num_components - 1];
        if (split - lam[num_components]).abs() <= tie {
            let cluster: Vec<usize> = (0..j).filter(|&i| (lam[i] - split).abs() <= tie).collect();
            let noise_share = cluster.iter().filter(|&&i| i >= num_components).count() as f64;
            let w = noise_share / cluster.len() as f64;
            for &i in &cluster {
                weight[i] = w;
            }
        }
    }

    // Noise projector P, then t[d] = sum_{b - a = d} P[a, b] so that
    // e(w)^H P e(w) = sum_d t[d] e^{i w d}.
    let mut proj = DMatrix::<Complex64>::zeros(j, j);
    for (rank, &col) in order.iter().enumerate() {
        if weight[rank] == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(col);
        proj += (&v * v.adjoint()) * Complex64::new(weight[rank], 0.0);
    }
    let mut diag_sums = vec![Complex64::new(0.0, 0.0); 2 * j - 1];
    for a in 0..j {
        for b in 0..j {
            diag_sums[b + j - 1 - a] += proj[(a, b)];
        }
    }
    let denom = |w: f64| -> f64 {
        diag_sums
            .iter()
            .enumerate()
            .map(|(idx, t)| (t * Complex64::from_polar(1.0, w * (idx as f64 - (j as f64 - 1.0)))).re)
            .sum::<f64>()
    };
    let pseudo_of = |w: f64| -> f64 {
        let d = denom(w);
        if d > 0.0 {
            1.0 / d
        } else {
            f64::MAX
        }
    };

    // Circle scan: -grid reversed (without 0 and -pi) then grid.
    let n = grid.len();
    let mut circle: Vec<f64> = grid[1..n - 1].iter().rev().map(|w| -w).collect();
    circle.extend_from_slice(grid);
    let values: Vec<f64> = circle.iter().map(|&w| pseudo_of(w)).collect();
    let step = grid[1] - grid[0];
    let zero_idx = n - 2;
    let mut maxima: Vec<(f64, f64)> = local_maxima(&values, PEAK_RIPPLE)
        .into_iter()
        .filter(|&i| i != zero_idx)
        .map(|i| {
            let w = circle[i] + parabolic_offset(values[i - 1], values[i], values[i + 1], step);
            (w, values[i])
        })
        .collect();
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1));
    let too_few = maxima.len() < num_components;
    maxima.truncate(num_components);
    let mut peak_freqs: Vec<f64> = maxima.into_iter().map(|(w, _)| w).collect();
    peak_freqs.sort_by(f64::total_cmp);

    let pseudo_vals = values[n - 2..].to_vec();
    let pseudo = SpectrumEstimate::new(grid.to_vec(), pseudo_vals, Interpolation::CubicSpline)?;
    Ok(MusicResult { pseudo, peak_freqs, too_few_maxima: too_few })
}

/// Steering vector `e(w) = (1, e^{iw}, ..., e^{i(J-1)w})`.
pub fn steering(w: f64, len: usize) -> DVector<Complex64> {
    DVector::from_fn(len, |k, _| Complex64::from_polar(1.0, w * k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arma::{autocovariance, psd};
    use std::f64::consts::PI;
    use crate::probe::generate_fttps;
    use crate::sim::expected_dataset;

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn yw_recovers_ar1() {
        let r = AutocovarianceSeq::new(vec![4.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]).unwrap();
        for over in [false, true] {
            let m = yule_walker(&r, 1, over).unwrap();
            assert!((m.ar()[0] + 0.5).abs() < 1e-12);
            assert!((m.ma()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn yw_white_gives_zero_ar() {
        let r = AutocovarianceSeq::new(vec![0.09, 0.0, 0.0]).unwrap();
        let m = yule_walker(&r, 1, false).unwrap();
        assert_eq!(m.ar(), &[0.0]);
        assert!((m.ma()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn yw_recovers_resonant_ar2() {
        // Poles 0.9 e^{+-0.3 i pi}: A(z) = 1 - 2 (0.9) cos(0.3 pi) z^-1 + 0.81 z^-2.
        let c = vec![-1.8 * (0.3 * PI).cos(), 0.81];
        let model = ArmaModel::new(c.clone(), vec![1.0]).unwrap();
        let r = autocovariance(&model, 40).unwrap();
        for over in [false, true] {
            let m = yule_walker(&r, 2, over).unwrap();
            for (a, b) in m.ar().iter().zip(&c) {
                assert!((a - b).abs() < 1e-6, "{over}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn yw_rejects_singular() {
        let r = AutocovarianceSeq::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(yule_walker(&r, 2, false), Err(QnsError::SingularSystem(_))));
    }

    #[test]
    fn modified_yw_is_unbiased_for_arma() {
        let model = ArmaModel::new(vec![-0.7, 0.2], vec![1.0, 0.6]).unwrap();
        let r = autocovariance(&model, 30).unwrap();
        let c = modified_yule_walker(&r, 2, 1).unwrap();
        assert!((c[0] + 0.7).abs() < 1e-8 && (c[1] - 0.2).abs() < 1e-8);
    }

    #[test]
    fn ma_examples() {
        let fit = ma_fit(&AutocovarianceSeq::new(vec![1.25, 0.5]).unwrap(), 1).unwrap();
        assert!(fit.converged);
        assert!((fit.model.ma()[0] - 1.0).abs() < 1e-9 && (fit.model.ma()[1] - 0.5).abs() < 1e-9);
        let fit = ma_fit(&AutocovarianceSeq::new(vec![4.0, 0.0, 0.0]).unwrap(), 0).unwrap();
        assert!((fit.model.ma()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ma_fit_reaches_zero_objective() {
        let b = [0.8, -0.4, 0.3, 0.15];
        let r = AutocovarianceSeq::new(ma_autocovariance(&b, 4)).unwrap();
        let fit = ma_fit(&r, 3).unwrap();
        assert!(fit.converged);
        assert!(fit.objective < 1e-12, "{}", fit.objective);
    }

    /// `b' = A H` with `H` the minimum-phase factor `n h_n = sum m c_m h_{n-m}`.
    fn ma_by_factor(ceps: &[f64], ar: &[f64], q: usize) -> Vec<f64> {
        let mut h = vec![1.0];
        for n in 1..=q {
            let v: f64 = (1..=n).map(|m| m as f64 * ceps[m] * h[n - m]).sum();
            h.push(v / n as f64);
        }
        (0..=q)
            .map(|k| (0..=k.min(ar.len())).map(|i| if i == 0 { h[k] } else { ar[i - 1] * h[k - i] }).sum())
            .collect()
    }

    #[test]
    fn recursion_matches_factor_oracle() {
        let model = ArmaModel::new(vec![-0.5, 0.3], vec![2.0, 0.4, -0.3, 0.1]).unwrap();
        let spec = psd(&model, &uniform_grid(TRANSFORM_INTERVALS)).unwrap();
        let ceps = cepstrum(&spec, 5).unwrap();
        let rec = cepstral_ma(&ceps, model.ar(), 4);
        let oracle = ma_by_factor(&ceps, model.ar(), 4);
        for (a, b) in rec.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn cepstral_round_trip_arma11() {
        let model = ArmaModel::new(vec![-0.5], vec![1.0, 0.3]).unwrap();
        let grid = uniform_grid(1024);
        let spec = psd(&model, &grid).unwrap();
        let fit = cepstral_arma(&spec, 1, 1).unwrap();
        let back = fit.power_values(&grid).unwrap();
        assert!(rel_l2(&back, spec.power()) < 1e-3);
    }

    #[test]
    fn cepstral_white_and_ma2() {
        let grid = uniform_grid(256);
        let flat = SpectrumEstimate::flat(grid.clone(), 1.0).unwrap();
        let m = cepstral_arma(&flat, 0, 0).unwrap();
        assert!((m.ma()[0] - 1.0).abs() < 1e-12);

        let ma2 = ArmaModel::new(vec![], vec![0.5, 0.3, 0.2]).unwrap();
        let spec = psd(&ma2, &grid).unwrap();
        let m = cepstral_arma(&spec, 0, 2).unwrap();
        assert!(rel_l2(&m.power_values(&grid).unwrap(), spec.power()) < 1e-3);
    }

    #[test]
    fn cepstral_rejects_degenerate() {
        let grid = uniform_grid(64);
        let mut p = vec![1.0; 65];
        p[..20].iter_mut().for_each(|v| *v = 0.0);
        let spec = SpectrumEstimate::new(grid, p, Interpolation::None).unwrap();
        assert!(matches!(cepstral_arma(&spec, 0, 1), Err(QnsError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn kappa_recovers_scale() {
        let seqs = generate_fttps(64, 64).unwrap();
        let shape = ArmaModel::new(vec![-0.6], vec![1.0, 0.2]).unwrap();
        let k0: f64 = 0.004;
        let data = expected_dataset(&shape.scale_ma(k0.sqrt()), &seqs, 0, 3).unwrap();
        let fit = kappa_optimize(&shape, &data).unwrap();
        assert!((fit.kappa2 - k0).abs() < 1e-4 * k0, "{}", fit.kappa2);

        let flat = ArmaModel::white(1.0);
        assert!((kappa_initial(&flat, &flat).unwrap() - 1.0).abs() < 1e-14);

        let silent = QnsDataset::new(seqs.clone(), vec![1.0; 64], 0, 0, 0).unwrap();
        assert_eq!(kappa_optimize(&shape, &silent).unwrap().kappa2, 0.0);
    }

    #[test]
    fn music_rank_one_peak() {
        let j = 8;
        let w0 = 1.1;
        let e = steering(w0, j);
        let r = &e * e.adjoint() * Complex64::new(2.0, 0.0)
            + DMatrix::<Complex64>::identity(j, j) * Complex64::new(0.1, 0.0);
        let grid = uniform_grid(2048);
        let res = music_matrix(&r, 1, &grid).unwrap();
        assert_eq!(res.peak_freqs.len(), 1);
        assert!((res.peak_freqs[0] - w0).abs() < PI / 2048.0);
    }

    #[test]
    fn music_white_is_flat() {
        let r = AutocovarianceSeq::new(vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let res = music(&r, 2, &uniform_grid(512)).unwrap();
        let v = res.pseudo.power();
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min) / max < 1e-6);
        assert!(res.too_few_maxima);
    }

    #[test]
    fn music_real_tone() {
        let w0 = 0.3 * PI;
        let lags: Vec<f64> =
            (0..12).map(|k| 0.5 * (k as f64 * w0).cos() + if k == 0 { 0.05 } else { 0.0 }).collect();
        let res = music(&AutocovarianceSeq::new(lags).unwrap(), 2, &uniform_grid(4096)).unwrap();
        assert_eq!(res.peak_freqs.len(), 2);
        assert!((res.peak_freqs[0] + w0).abs() < 1e-3);
        assert_eq!(res.positive_peaks().len(), 1);
        assert!((res.positive_peaks()[0] - w0).abs() < 1e-3);
    }
}
