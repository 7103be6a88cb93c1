//! Acceptance suite. Runs every criterion, prints one `criterion N: PASS|FAIL`
//! line each, and exits non-zero if any failed. Seeds are fixed up front.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use qns_core::arma::{autocovariance, psd, ArmaModel, PowerSpectrum, SpectrumSum};
use qns_core::classical::{cepstral_arma, ma_fit, yule_walker};
use qns_core::experiment::{relative_l2, spectrum_maxima, sweep_point, SweepSpec};
use qns_core::gradfit::{
    fit, fit_beta, model_select, random_init, Criterion, FitOptions, FitProblem,
};
use qns_core::invert::{interpolate, nnls_estimate};
use qns_core::probe::{generate_fttps, FilterBank, ProbeSequence};
use qns_core::sim::{expected_dataset, simulate_qns, substream_seed};
use qns_core::spectral::uniform_grid;
use qns_core::stats::wilcoxon_signed_rank;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fttps() -> Vec<ProbeSequence> {
    generate_fttps(K, K).unwrap()
}

fn w_star() -> f64 {
    PI / K as f64
}

/// `(1/2) s^T R s` with `R` from a truncated impulse response, independent
/// of the library's autocovariance routine.
fn chi_oracle(model: &ArmaModel, s: &[f64]) -> f64 {
    let len = 4000;
    let (c, b) = (model.ar(), model.ma());
    let mut h = vec![0.0; len];
    for n in 0..len {
        let mut v = if n < b.len() { b[n] } else { 0.0 };
        for (i, ci) in c.iter().enumerate() {
            if n > i {
                v -= ci * h[n - 1 - i];
            }
        }
        h[n] = v;
    }
    let r: Vec<f64> = (0..s.len()).map(|k| (0..len - k).map(|n| h[n] * h[n + k]).sum()).collect();
    let mut chi = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            chi += s[i] * s[j] * r[i.abs_diff(j)];
        }
    }
    0.5 * chi
}

fn criterion_1() -> Outcome {
    let seqs = fttps();
    let bank = FilterBank::with_default_grid(&seqs);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (p, q) = (case % 7, (case / 7) % 7);
        let model = random_init(p, q, 0.01, &mut rng);
        let chi = bank.chi(&model).unwrap();
        for (k, seq) in seqs.iter().enumerate() {
            let oracle = chi_oracle(&model, seq.signs());
            worst = worst.max((chi[k] - oracle).abs() / oracle.abs());
        }
    }
    outcome(worst < 1e-4, format!("50 models x {K} sequences, worst relative error {worst:.2e} (< 1e-4)"))
}

fn criterion_2() -> Outcome {
    let seqs = fttps();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (p, q) = (case % 5, (case / 5) % 5);
        let truth = random_init(p, q, 0.01, &mut rng);
        let model = random_init(p, q, 0.01, &mut rng);
        let data = expected_dataset(&truth, &seqs, 0, case as u64).unwrap();
        let problem = FitProblem::new(&data, None).unwrap();
        let (_, g) = problem.loss_and_gradient(&model).unwrap();
        let theta = model.params();
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let h = 1e-6;
                let mut up = theta.clone();
                up[i] += h;
                let mut dn = theta.clone();
                dn[i] -= h;
                let lu = problem.loss(&ArmaModel::from_params(p, q, &up).unwrap()).unwrap();
                let ld = problem.loss(&ArmaModel::from_params(p, q, &dn).unwrap()).unwrap();
                (lu - ld) / (2.0 * h)
            })
            .collect();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-9 * norm));
        }
    }
    outcome(worst < 1e-5, format!("100 cases, worst componentwise relative error {worst:.2e} (< 1e-5)"))
}

fn criterion_3() -> Outcome {
    let seqs = fttps();
    let sigma = 0.15;
    let truth = sigma * sigma;
    let mut errors = Vec::new();
    for run in 0..25u64 {
        let data = simulate_qns(&[ArmaModel::white(sigma)], &seqs, 1000, 1000, 3000 + run).unwrap();
        let f = fit(&data, 0, 0, None, None, &FitOptions::default()).unwrap();
        let b0 = f.model.ma()[0];
        errors.push((b0 * b0 - truth).abs() / truth);
    }
    let hits = errors.iter().filter(|&&e| e < 0.03).count();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(
        hits * 10 >= 25 * 9,
        format!("{hits}/25 runs within 3% of the white power (need >= 90%), worst {:.2}%", 100.0 * worst),
    )
}

fn criterion_4() -> Outcome {
    let grid = uniform_grid(1024);
    let mut notes = Vec::new();
    let mut pass = true;

    let ar = ArmaModel::new(vec![-1.2, 0.8, -0.3, 0.1], vec![0.2]).unwrap();
    let est = yule_walker(&autocovariance(&ar, 5).unwrap(), 4, false).unwrap();
    let (t, e) = (ar.power_on(&grid).unwrap(), est.power_on(&grid).unwrap());
    let yw_err = t.iter().zip(&e).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    pass &= yw_err < 1e-6;
    notes.push(format!("YW psd {yw_err:.1e}"));

    let ma = ArmaModel::new(vec![], vec![1.0, 0.5, -0.3, 0.2]).unwrap();
    let m = ma_fit(&autocovariance(&ma, 4).unwrap(), 3).unwrap();
    pass &= m.objective < 1e-12;
    notes.push(format!("MA objective {:.1e}", m.objective));

    let arma = ArmaModel::new(vec![-0.9, 0.4], vec![0.3, 0.15]).unwrap();
    let dense = psd(&arma, &uniform_grid(4096)).unwrap();
    let rt = cepstral_arma(&dense, 2, 1).unwrap();
    let ceps_err = relative_l2(&rt, &arma).unwrap();
    pass &= ceps_err < 1e-3;
    notes.push(format!("cepstral L2 {ceps_err:.1e}"));

    outcome(pass, notes.join(", ") + " (bounds 1e-6, 1e-12, 1e-3)")
}

/// Bandlimited AR(4) spectrum: two pole pairs spanning roughly 0.35 pi to
/// 0.45 pi.
fn band_model() -> ArmaModel {
    let pair = |angle: f64, r: f64| (-2.0 * r * angle.cos(), r * r);
    let (a1, a2) = pair(0.35 * PI, 0.9);
    let (b1, b2) = pair(0.45 * PI, 0.9);
    ArmaModel::new(vec![a1 + b1, a2 + b2 + a1 * b1, a1 * b2 + a2 * b1, a2 * b2], vec![0.01]).unwrap()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_5() -> Outcome {
    let seqs = fttps();
    let truth = band_model();
    let dense = uniform_grid(4096);
    let (mut e_bic, mut e_nnls, mut orders) = (Vec::new(), Vec::new(), Vec::new());
    for run in 0..25u64 {
        let data = simulate_qns(std::slice::from_ref(&truth), &seqs, 1000, 1000, 5000 + run).unwrap();
        let spline = interpolate(&nnls_estimate(&data).unwrap().spectrum, &dense).unwrap();
        e_nnls.push(relative_l2(&spline, &truth).unwrap());
        let sel = model_select(&data, 6, Criterion::Bic, None, &FitOptions::default()).unwrap();
        e_bic.push(relative_l2(&sel.best.model, &truth).unwrap());
        orders.push(format!("({},{})", sel.best.p, sel.best.q));
    }
    let (mb, mn) = (median(&e_bic), median(&e_nnls));
    let w = wilcoxon_signed_rank(&e_bic, &e_nnls);
    orders.sort();
    orders.dedup();
    outcome(
        mb < mn && w.p_value < 0.05,
        format!(
            "median L2 error BIC {mb:.3} vs spline NNLS {mn:.3}, Wilcoxon p = {:.2e} (< 0.05), selected orders {}",
            w.p_value,
            orders.join(" ")
        ),
    )
}

fn sweep(shots: u64, trajectories: usize) -> SweepSpec {
    SweepSpec {
        gate_count: K,
        num_sequences: K,
        bin: 20,
        steps: 2,
        points: 2,
        radius: 0.95,
        gain: 0.02,
        shots,
        trajectories,
        seed: 0,
    }
}

fn criterion_6() -> Outcome {
    let ws = w_star();
    let center = 20.5 * ws;
    let opts = FitOptions::default();
    let exact = sweep_point(center, &sweep(0, 0), 6000, &opts).unwrap();
    let exact_ok = exact.abs_err_schwarma < ws / 10.0 && (exact.abs_err_nnls - ws / 2.0).abs() < 1e-9;
    let spec = sweep(1000, 1000);
    let errors: Vec<f64> = (0..25u64)
        .map(|run| sweep_point(center, &spec, 6100 + run, &opts).unwrap().abs_err_schwarma / ws)
        .collect();
    let hits = errors.iter().filter(|&&e| e < 0.2).count();
    outcome(
        exact_ok && hits * 5 >= 25 * 4,
        format!(
            "exact: SchWARMA {:.1e} w*, NNLS {:.3} w*; 1000 shots: {hits}/25 within w*/5 (need >= 80%), worst {:.3} w*",
            exact.abs_err_schwarma / ws,
            exact.abs_err_nnls / ws,
            errors.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn criterion_7() -> Outcome {
    let ws = w_star();
    let a = ArmaModel::resonance(16.5 * ws, 0.95, 0.015).unwrap();
    let b = ArmaModel::resonance(40.5 * ws, 0.95, 0.015).unwrap();
    let sum = SpectrumSum::new().with(1.0, &a).with(1.0, &b);
    let truth = spectrum_maxima(&sum, 8192).unwrap();
    let data = expected_dataset(&sum, &fttps(), 0, 7000).unwrap();
    let mut lower = Vec::new();
    for p in [2, 4, 6, 8, 10] {
        let f = fit(&data, p, 0, None, None, &FitOptions::default()).unwrap();
        lower.push(format!("AR({p}):{}", spectrum_maxima(&f.model, 8192).unwrap().len()));
    }
    let f = fit(&data, 12, 0, None, None, &FitOptions::default()).unwrap();
    let found = spectrum_maxima(&f.model, 8192).unwrap();
    let worst = truth
        .iter()
        .map(|t| found.iter().map(|m| (m - t).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    outcome(
        truth.len() == 2 && found.len() == 2 && worst < ws / 5.0,
        format!(
            "AR(12) maxima {}, worst offset {:.4} w* (< 0.2); maxima at lower orders {}",
            found.len(),
            worst / ws,
            lower.join(" ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let seqs = fttps();
    let native = ArmaModel::new(vec![-0.7], vec![0.03]).unwrap();
    let injected = ArmaModel::resonance(1.2, 0.9, 0.02).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, beta) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let total = SpectrumSum::new().with(beta, &native).with(1.0, &injected);
        let exact = expected_dataset(&total, &seqs, 0, 8000).unwrap();
        let b_exact = fit_beta(&native, &injected, &exact).unwrap();
        let models = [native.scale_ma(beta.sqrt()), injected.clone()];
        let noisy = simulate_qns(&models, &seqs, 1000, 10_000, substream_seed(8100, &[i as u64])).unwrap();
        let b_noisy = fit_beta(&native, &injected, &noisy).unwrap();
        // Relative 5% for beta > 0; absolute 0.05 at beta = 0.
        let noisy_ok = (b_noisy - beta).abs() <= 0.05 * beta.max(1.0);
        pass &= (b_exact - beta).abs() < 1e-3 && noisy_ok;
        notes.push(format!("beta {beta}: exact {b_exact:.5}, 10000 shots {b_noisy:.4}"));
    }
    outcome(pass, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let only: Vec<usize> = std::env::var("QNS_ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| outcome(false, "panicked".into()));
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {n}: {} {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
