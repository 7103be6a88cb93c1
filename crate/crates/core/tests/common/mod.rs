#![allow(dead_code)]

use proptest::prelude::*;
use qns_core::arma::ArmaModel;

/// Monic polynomial with `n` roots: conjugate pairs `r e^{+-i theta}` and,
/// for odd `n`, one real root; radii come from `roots`.
fn poly_from_roots(n: usize, roots: &[(f64, f64)]) -> Vec<f64> {
    let mut poly = vec![1.0];
    let mul = |poly: &Vec<f64>, f: &[f64]| {
        let mut out = vec![0.0; poly.len() + f.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    for &(r, theta) in roots.iter().take(n / 2) {
        poly = mul(&poly, &[1.0, -2.0 * r * theta.cos(), r * r]);
    }
    if n % 2 == 1 {
        let (r, theta) = roots[n / 2];
        poly = mul(&poly, &[1.0, -r * theta.cos().signum()]);
    }
    poly[1..].to_vec()
}

fn roots(max_len: usize, bound: f64) -> impl Strategy<Value = (usize, Vec<(f64, f64)>)> {
    (0..=max_len, prop::collection::vec((0.05..bound, 0.0..std::f64::consts::PI), max_len.div_ceil(2)))
}

/// Stationary ARMA with `p <= max_p`, `q <= max_q`, every pole and zero of
/// modulus below `bound`, and `b0` in `[0.05, 0.5]`.
pub fn stationary_model(max_p: usize, max_q: usize, bound: f64) -> impl Strategy<Value = ArmaModel> {
    (roots(max_p, bound), roots(max_q, bound), 0.05f64..0.5).prop_map(|((p, rp), (q, rq), b0)| {
        let mut ma = vec![b0];
        ma.extend(poly_from_roots(q, &rq).iter().map(|v| b0 * v));
        ArmaModel::new(poly_from_roots(p, &rp), ma).unwrap()
    })
}

/// Stationary AR(p) with `1 <= p <= max_p` and poles of modulus below `bound`.
pub fn ar_model(max_p: usize, bound: f64) -> impl Strategy<Value = ArmaModel> {
    (roots(max_p, bound), 0.05f64..0.5).prop_filter_map("p >= 1", |((p, r), b0)| {
        (p >= 1).then(|| ArmaModel::new(poly_from_roots(p, &r), vec![b0]).unwrap())
    })
}

/// Impulse response `h[0..len)` of the stored recursion.
pub fn impulse(model: &ArmaModel, len: usize) -> Vec<f64> {
    let (c, b) = (model.ar(), model.ma());
    let mut h = vec![0.0; len];
    for n in 0..len {
        let mut v = b.get(n).copied().unwrap_or(0.0);
        for (i, ci) in c.iter().enumerate().take(n) {
            v -= ci * h[n - 1 - i];
        }
        h[n] = v;
    }
    h
}

/// Autocovariance `r[k] = sum_n h[n] h[n+k]` from a long impulse response;
/// independent of the library's transform-based routine and accurate for
/// poles up to radius ~0.9998.
pub fn lag_oracle(model: &ArmaModel, lags: usize) -> Vec<f64> {
    let h = impulse(model, 200_000);
    (0..lags).map(|k| h.iter().zip(&h[k..]).map(|(a, b)| a * b).sum()).collect()
}
