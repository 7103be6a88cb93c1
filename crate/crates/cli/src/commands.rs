//! The five verbs. Each resolves its config, validates it, runs the
//! pipeline and writes its artifacts plus `config.json` into the output
//! directory. Re-running with that `config.json` reproduces the outputs.

use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::Path;

use qns_core::classical::{cepstral_arma_unscaled, kappa_optimize, ma_fit, music, yule_walker};
use qns_core::experiment::{superres_sweep, write_sweep_csv, SweepSpec};
use qns_core::gradfit::{fit_beta, fit_composite, ModelSelection};
use qns_core::invert::{autocov_from_spectrum, interpolate, nnls_estimate};
use qns_core::sim::{expected_dataset, load_dataset, save_dataset, simulate_qns};
use qns_core::spectral::{uniform_grid, DENSE_INTERVALS};
use qns_core::{
    fit, generate_fttps, model_select, ArmaModel, AutocovarianceSeq, Criterion, FitResult, PowerSpectrum,
    QnsDataset, SpectrumEstimate, SpectrumSum,
};

use crate::config::{ExperimentConfig, Method, NativeConfig, Needs, Overrides};
use crate::CliError;

/// Intervals of the grid on which fitted models are reported.
const REPORT_INTERVALS: usize = 1024;

type Outcome = Result<(), CliError>;

fn prepare(o: &Overrides, needs: Needs) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::resolve(o).map_err(CliError::config)?;
    cfg.validate(needs).map_err(CliError::config)?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    write_json(&cfg.output_dir.join("config.json"), &cfg)?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("config types serialize");
    fs::write(path, text + "\n").map_err(|e| CliError::Estimator(e.into()))
}

/// `freq,power` CSV with frequencies in the reporting unit.
fn write_spectrum(path: &Path, spec: &SpectrumEstimate, freq_scale: f64) -> Outcome {
    let mut out = String::from("freq,power\n");
    for (f, p) in spec.freqs().iter().zip(spec.power()) {
        out.push_str(&format!("{},{}\n", f * freq_scale, p));
    }
    fs::write(path, out).map_err(|e| CliError::Estimator(e.into()))
}

fn model_spectrum(model: &dyn PowerSpectrum) -> Result<SpectrumEstimate, CliError> {
    let grid = uniform_grid(REPORT_INTERVALS);
    let power = model.power_on(&grid)?;
    Ok(SpectrumEstimate::new(grid, power, qns_core::Interpolation::CubicSpline)?)
}

fn dataset(cfg: &ExperimentConfig) -> Result<QnsDataset, CliError> {
    let path = cfg.dataset.as_ref().expect("validated");
    load_dataset(path).map_err(CliError::input)
}

pub fn simulate(o: &Overrides) -> Outcome {
    let cfg = prepare(o, Needs::Models)?;
    let seqs = generate_fttps(cfg.gate_count, cfg.num_sequences).map_err(CliError::input)?;
    let data = if cfg.trajectories == 0 {
        let sum = cfg.models.iter().fold(SpectrumSum::new(), |s, m| s.with(1.0, m));
        expected_dataset(&sum, &seqs, cfg.shots, cfg.seed)?
    } else {
        simulate_qns(&cfg.models, &seqs, cfg.trajectories, cfg.shots, cfg.seed)?
    };
    save_dataset(&data, &cfg.output_dir.join("dataset.csv"))?;
    Ok(())
}

/// NNLS band estimate resampled by spline onto the dense uniform grid.
fn dense_estimate(data: &QnsDataset) -> Result<SpectrumEstimate, CliError> {
    let band = nnls_estimate(data)?.spectrum;
    Ok(interpolate(&band, &uniform_grid(DENSE_INTERVALS))?)
}

fn autocov(data: &QnsDataset, lags: usize) -> Result<AutocovarianceSeq, CliError> {
    Ok(autocov_from_spectrum(&dense_estimate(data)?, lags)?)
}

pub fn estimate(o: &Overrides) -> Outcome {
    let cfg = prepare(o, Needs::Dataset)?;
    let data = dataset(&cfg)?;
    let est = &cfg.estimator;
    let dir = &cfg.output_dir;
    let scale = cfg.freq_scale();
    match est.method {
        Method::Nnls => {
            let out = nnls_estimate(&data)?;
            write_spectrum(&dir.join("spectrum.csv"), &out.spectrum, scale)?;
            write_json(&dir.join("nnls.json"), &out.diagnostics)
        }
        Method::Yw => {
            let needed = if est.overdetermined { 2 * est.p + 2 } else { est.p + 1 };
            let lags = est.lags.unwrap_or(needed);
            let model = yule_walker(&autocov(&data, lags)?, est.p, est.overdetermined)?;
            write_spectrum(&dir.join("spectrum.csv"), &model_spectrum(&model)?, scale)?;
            write_json(
                &dir.join("yw.json"),
                &json!({ "model": model, "lags": lags, "overdetermined": est.overdetermined }),
            )
        }
        Method::Ma => {
            let lags = est.lags.unwrap_or(est.q + 1);
            let m = ma_fit(&autocov(&data, lags)?, est.q)?;
            write_spectrum(&dir.join("spectrum.csv"), &model_spectrum(&m.model)?, scale)?;
            write_json(
                &dir.join("ma.json"),
                &json!({
                    "model": m.model,
                    "objective": m.objective,
                    "iterations": m.iterations,
                    "converged": m.converged,
                }),
            )
        }
        Method::Cepstral => {
            let shape = cepstral_arma_unscaled(&dense_estimate(&data)?, est.p, est.q)?;
            let k = kappa_optimize(&shape, &data)?;
            write_spectrum(&dir.join("spectrum.csv"), &model_spectrum(&k.model)?, scale)?;
            write_json(
                &dir.join("cepstral.json"),
                &json!({ "model": k.model, "kappa2": k.kappa2, "kappa2_init": k.kappa2_init, "mse": k.mse }),
            )
        }
        Method::Music => {
            let lags = est.lags.unwrap_or(16.max(est.components + 2));
            let res = music(&autocov(&data, lags)?, est.components, &uniform_grid(DENSE_INTERVALS))?;
            write_spectrum(&dir.join("spectrum.csv"), &res.pseudo, scale)?;
            let peaks: Vec<f64> = res.peak_freqs.iter().map(|w| w * scale).collect();
            let report = qns_core::classical::MusicReport {
                peaks,
                pseudo_csv: "spectrum.csv".into(),
                too_few_maxima: res.too_few_maxima,
            };
            write_json(&dir.join("music.json"), &report)
        }
        Method::Schwarma => match est.select {
            Some(criterion) => run_select(&cfg, &data, criterion),
            None => {
                let r = fit(&data, est.p, est.q, None, None, &est.fit)?;
                write_fit(&cfg, &r)
            }
        },
    }
}

fn write_fit(cfg: &ExperimentConfig, r: &FitResult) -> Outcome {
    write_spectrum(&cfg.output_dir.join("spectrum.csv"), &model_spectrum(&r.model)?, cfg.freq_scale())?;
    write_json(&cfg.output_dir.join("fit_result.json"), r)
}

fn run_select(cfg: &ExperimentConfig, data: &QnsDataset, criterion: Criterion) -> Outcome {
    let est = &cfg.estimator;
    let sel: ModelSelection = model_select(data, est.max_params, criterion, None, &est.fit)?;
    write_fit(cfg, &sel.best)?;
    let grid = fs::File::create(cfg.output_dir.join("grid.csv")).map_err(|e| CliError::Estimator(e.into()))?;
    sel.write_grid_csv(std::io::BufWriter::new(grid))?;
    let failures: Vec<_> =
        sel.failures.iter().map(|(p, q, name)| json!({ "p": p, "q": q, "error": name })).collect();
    write_json(
        &cfg.output_dir.join("selection.json"),
        &json!({ "criterion": criterion, "p": sel.best.p, "q": sel.best.q, "failures": failures }),
    )
}

pub fn select(o: &Overrides) -> Outcome {
    let cfg = prepare(o, Needs::Dataset)?;
    let data = dataset(&cfg)?;
    run_select(&cfg, &data, cfg.estimator.select.unwrap_or(Criterion::Bic))
}

pub fn composite(o: &Overrides) -> Outcome {
    let cfg = prepare(o, Needs::Composite)?;
    let data = dataset(&cfg)?;
    let comp = cfg.composite.as_ref().expect("validated");
    let native: Box<dyn PowerSpectrum> = match &comp.native {
        NativeConfig::Model(m) => Box::new(m.clone()),
        NativeConfig::Spectrum(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::input(e.into()))?;
            Box::new(SpectrumEstimate::read_csv(file).map_err(CliError::input)?)
        }
    };
    let beta = fit_beta(native.as_ref(), &comp.injected, &data)?;
    let fitted: Option<FitResult> = match comp.fit_order {
        Some((p, q)) => Some(fit_composite(native.as_ref(), beta, &data, p, q, &cfg.estimator.fit)?),
        None => None,
    };
    let injected: &ArmaModel = fitted.as_ref().map_or(&comp.injected, |f| &f.model);
    let total = SpectrumSum::new().with(beta, native.as_ref()).with(1.0, injected);
    write_spectrum(&cfg.output_dir.join("spectrum.csv"), &model_spectrum(&total)?, cfg.freq_scale())?;
    write_json(&cfg.output_dir.join("composite.json"), &json!({ "beta": beta, "fit": fitted }))
}

pub fn superres(o: &Overrides) -> Outcome {
    let cfg = prepare(o, Needs::Sweep)?;
    let s = &cfg.sweep;
    let spec = SweepSpec {
        gate_count: cfg.gate_count,
        num_sequences: cfg.num_sequences,
        bin: s.bin,
        steps: s.steps,
        points: s.points,
        radius: s.radius,
        gain: s.gain,
        shots: cfg.shots,
        trajectories: cfg.trajectories,
        seed: cfg.seed,
    };
    let rows = superres_sweep(&spec, &cfg.estimator.fit);
    let file = fs::File::create(cfg.output_dir.join("sweep.csv")).map_err(|e| CliError::Estimator(e.into()))?;
    write_sweep_csv(&rows, cfg.freq_scale(), std::io::BufWriter::new(file))?;
    let failed: Vec<_> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.error.as_ref().map(|e| json!({ "point": i, "error": e })))
        .collect();
    for f in &failed {
        eprintln!("warning: sweep point failed: {f}");
    }
    write_json(&cfg.output_dir.join("superres.json"), &json!({ "points": rows.len(), "failures": failed }))
}
