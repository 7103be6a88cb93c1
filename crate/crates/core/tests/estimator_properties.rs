//! Invariants of the inversion and classical estimators.

mod common;

use common::{ar_model, lag_oracle, stationary_model};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qns_core::arma::{autocovariance, psd, AutocovarianceSeq};
use qns_core::classical::{cepstral_arma, ma_fit, music, yule_walker};
use qns_core::experiment::relative_l2;
use qns_core::invert::autocov_from_spectrum;
use qns_core::nnls::nnls;
use qns_core::spectral::uniform_grid;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, rows * cols),
        prop::collection::vec(-1.0f64..1.0, rows),
    )
        .prop_map(move |(a, b)| (DMatrix::from_vec(rows, cols, a), DVector::from_vec(b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nnls_satisfies_kkt((a, b) in (3usize..12, 1usize..8).prop_flat_map(|(m, n)| matrix(m, n))) {
        let s = nnls(&a, &b, 1e-12, 100).unwrap();
        let grad = a.tr_mul(&(&a * &s.x - &b));
        for j in 0..s.x.len() {
            prop_assert!(s.x[j] >= 0.0);
            if s.x[j] == 0.0 {
                prop_assert!(grad[j] >= -1e-8, "active {}: {}", j, grad[j]);
            } else {
                prop_assert!(grad[j].abs() <= 1e-8, "free {}: {}", j, grad[j]);
            }
        }
    }

    #[test]
    fn autocov_of_dense_psd_matches_model(model in stationary_model(6, 6, 0.95)) {
        let spec = psd(&model, &uniform_grid(4096)).unwrap();
        let got = autocov_from_spectrum(&spec, 11).unwrap();
        let want = autocovariance(&model, 11).unwrap();
        let r0 = want.lags()[0];
        for (g, w) in got.lags().iter().zip(want.lags()) {
            prop_assert!((g - w).abs() <= 1e-4 * r0);
        }
    }

    #[test]
    fn yule_walker_recovers_ar_exactly(model in ar_model(8, 0.95)) {
        let p = model.p();
        let r = AutocovarianceSeq::new(lag_oracle(&model, 2 * p + 2)).unwrap();
        for over in [false, true] {
            let est = yule_walker(&r, p, over).unwrap();
            let err = relative_l2(&est, &model).unwrap();
            prop_assert!(err < 1e-6, "overdetermined = {}: {} for {:?}", over, err, model);
        }
    }

    #[test]
    fn ma_descent_never_increases_objective(
        model in stationary_model(0, 6, 0.9),
        jitter in prop::collection::vec(-0.1f64..0.1, 7),
    ) {
        let q = model.q();
        let exact = autocovariance(&model, q + 1).unwrap();
        // Perturbed lags need not have an exact factor; monotonicity must hold anyway.
        let r0 = exact.lags()[0];
        let lags: Vec<f64> = exact.lags().iter().zip(&jitter).map(|(r, j)| r + j * r0).collect();
        for r in [exact, AutocovarianceSeq::new(lags).unwrap()] {
            let fit = ma_fit(&r, q).unwrap();
            prop_assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(*fit.trace.last().unwrap(), fit.objective);
        }
    }

    #[test]
    fn music_is_scale_invariant(w0 in 0.1f64..3.0, noise in 0.01f64..1.0, c in 0.01f64..100.0) {
        let lags: Vec<f64> = (0..12).map(|k| (k as f64 * w0).cos() + if k == 0 { noise } else { 0.0 }).collect();
        let base = AutocovarianceSeq::new(lags).unwrap();
        let grid = uniform_grid(2048);
        let a = music(&base, 2, &grid).unwrap();
        let b = music(&base.scaled(c).unwrap(), 2, &grid).unwrap();
        prop_assert_eq!(a.peak_freqs.len(), b.peak_freqs.len());
        for (x, y) in a.peak_freqs.iter().zip(&b.peak_freqs) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        // Compare noise-projection norms (reciprocal pseudo-spectra): near a
        // peak the pseudo-spectrum itself is a ratio of rounding errors.
        let da: Vec<f64> = a.pseudo.power().iter().map(|v| 1.0 / v).collect();
        let db: Vec<f64> = b.pseudo.power().iter().map(|v| 1.0 / v).collect();
        let top = da.iter().cloned().fold(0.0, f64::max);
        let at = da.iter().position(|&v| v == top).unwrap();
        let ratio = db[at] / da[at];
        for (x, y) in da.iter().zip(&db) {
            prop_assert!((y / ratio - x).abs() <= 1e-9 * top);
        }
        // Power-of-two scaling is exact in floating point.
        let exact = music(&base.scaled(8.0).unwrap(), 2, &grid).unwrap();
        prop_assert_eq!(&exact.peak_freqs, &a.peak_freqs);
    }

    #[test]
    fn cepstral_round_trip(model in stationary_model(4, 4, 0.9)) {
        let spec = psd(&model, &uniform_grid(4096)).unwrap();
        let fit = cepstral_arma(&spec, model.p(), model.q()).unwrap();
        prop_assert!(relative_l2(&fit, &model).unwrap() < 1e-3);
    }
}

#[test]
fn ma_monotonicity_holds_from_the_fallback_start() {
    // A lag sequence with no MA(1) factor forces the second descent.
    let r = AutocovarianceSeq::new(vec![1.0, 0.9]).unwrap();
    let fit = ma_fit(&r, 1).unwrap();
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.objective > 0.0);
}
