//! Experiment configuration: a JSON file overlaid with command-line flags.
//! Unknown keys are rejected; every field has a default.

use clap::{Args, ValueEnum};
use qns_core::arma::is_stationary;
use qns_core::{ArmaModel, Criterion, CriterionForm, FitOptions};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nnls,
    Yw,
    Ma,
    Cepstral,
    Music,
    Schwarma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub method: Method,
    pub p: usize,
    pub q: usize,
    /// Order search criterion for `schwarma`; `None` fits `(p, q)` only.
    pub select: Option<Criterion>,
    pub max_params: usize,
    /// MUSIC signal-subspace dimension.
    pub components: usize,
    /// Autocovariance lags for `yw`, `ma` and `music`; `None` picks the
    /// smallest count the method needs (16 for MUSIC).
    pub lags: Option<usize>,
    pub overdetermined: bool,
    pub fit: FitOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Nnls,
            p: 2,
            q: 0,
            select: None,
            max_params: 6,
            components: 2,
            lags: None,
            overdetermined: false,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum NativeConfig {
    Model(ArmaModel),
    /// `freq,power` CSV on `[0, pi]`.
    Spectrum(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeConfig {
    pub native: NativeConfig,
    pub injected: ArmaModel,
    /// Also fit the injected model with `beta * S_nat` as background.
    #[serde(default)]
    pub fit_order: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub bin: usize,
    pub steps: usize,
    pub points: usize,
    pub radius: f64,
    pub gain: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { bin: 20, steps: 5, points: 6, radius: 0.95, gain: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Independent noise sources; the simulated spectrum is their sum.
    pub models: Vec<ArmaModel>,
    pub gate_count: usize,
    pub num_sequences: usize,
    /// `0` records exact probabilities.
    pub shots: u64,
    /// `0` uses the analytic infinite-trajectory limit.
    pub trajectories: usize,
    pub seed: u64,
    /// Input dataset for `estimate`, `select` and `composite`.
    pub dataset: Option<PathBuf>,
    pub estimator: EstimatorConfig,
    pub composite: Option<CompositeConfig>,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
    /// Report frequencies in Hz for this gate rate instead of rad/sample.
    pub sample_rate_hz: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: Vec::new(),
            gate_count: 64,
            num_sequences: 64,
            shots: 1000,
            trajectories: 1000,
            seed: 0,
            dataset: None,
            estimator: EstimatorConfig::default(),
            composite: None,
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("qns-out"),
            sample_rate_hz: None,
        }
    }
}

/// Command-line overrides; each flag mirrors the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags given alongside it take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise models as a JSON array of `{"ar": [...], "ma": [...]}`.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub gate_count: Option<usize>,
    #[arg(long)]
    pub num_sequences: Option<usize>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Order-selection criterion: mse, aic or bic.
    #[arg(long, value_parser = parse_criterion)]
    pub select: Option<Criterion>,
    #[arg(long)]
    pub max_params: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub overdetermined: bool,
    /// Information-criterion form: standard or as-printed.
    #[arg(long, value_parser = parse_form)]
    pub form: Option<CriterionForm>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Native spectrum as an ARMA JSON object.
    #[arg(long, conflicts_with = "native_spectrum")]
    pub native_model: Option<String>,
    /// Native spectrum as a `freq,power` CSV.
    #[arg(long)]
    pub native_spectrum: Option<PathBuf>,
    /// Injected spectrum as an ARMA JSON object.
    #[arg(long)]
    pub injected: Option<String>,
    /// Fit the injected model at this order, as `p,q`.
    #[arg(long, value_parser = parse_order)]
    pub fit_order: Option<(usize, usize)>,
    #[arg(long)]
    pub bin: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub sample_rate_hz: Option<f64>,
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown criterion {s:?}"))
}

fn parse_form(s: &str) -> Result<CriterionForm, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown form {s:?}"))
}

fn parse_order(s: &str) -> Result<(usize, usize), String> {
    let (p, q) = s.split_once(',').ok_or_else(|| format!("expected p,q, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad order {s:?}"));
    Ok((num(p)?, num(q)?))
}

fn json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

/// Which inputs a verb needs before it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Models,
    Dataset,
    Composite,
    Sweep,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        json(&format!("config {}", path.display()), &text)
    }

    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(o: &Overrides) -> Result<Self, String> {
        let mut c = match &o.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(m) = &o.models {
            c.models = json("--models", m)?;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = o.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set!(
            gate_count => gate_count,
            num_sequences => num_sequences,
            shots => shots,
            trajectories => trajectories,
            seed => seed,
            method => estimator.method,
            p => estimator.p,
            q => estimator.q,
            max_params => estimator.max_params,
            components => estimator.components,
            form => estimator.fit.form,
            max_steps => estimator.fit.max_steps,
            bin => sweep.bin,
            steps => sweep.steps,
            points => sweep.points,
            radius => sweep.radius,
            gain => sweep.gain,
            output_dir => output_dir,
        );
        if o.dataset.is_some() {
            c.dataset = o.dataset.clone();
        }
        if o.select.is_some() {
            c.estimator.select = o.select;
        }
        if o.lags.is_some() {
            c.estimator.lags = o.lags;
        }
        if o.overdetermined {
            c.estimator.overdetermined = true;
        }
        if o.sample_rate_hz.is_some() {
            c.sample_rate_hz = o.sample_rate_hz;
        }
        let native = match (&o.native_model, &o.native_spectrum) {
            (Some(m), _) => Some(NativeConfig::Model(json("--native-model", m)?)),
            (_, Some(p)) => Some(NativeConfig::Spectrum(p.clone())),
            _ => None,
        };
        let injected: Option<ArmaModel> = o.injected.as_deref().map(|m| json("--injected", m)).transpose()?;
        if native.is_some() || injected.is_some() || o.fit_order.is_some() {
            let base = c.composite.take();
            let native = native.or_else(|| base.as_ref().map(|b| b.native.clone()));
            let injected = injected.or_else(|| base.as_ref().map(|b| b.injected.clone()));
            match (native, injected) {
                (Some(native), Some(injected)) => {
                    let fit_order = o.fit_order.or(base.and_then(|b| b.fit_order));
                    c.composite = Some(CompositeConfig { native, injected, fit_order });
                }
                _ => return Err("composite needs both a native and an injected spectrum".into()),
            }
        }
        Ok(c)
    }

    pub fn validate(&self, needs: Needs) -> Result<(), String> {
        if self.gate_count == 0 {
            return Err("gate_count must be positive".into());
        }
        if self.num_sequences == 0 || self.num_sequences > self.gate_count {
            return Err(format!("num_sequences must be in 1..={}", self.gate_count));
        }
        if let Some(hz) = self.sample_rate_hz {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err("sample_rate_hz must be positive".into());
            }
        }
        if self.estimator.max_params == 0 {
            return Err("max_params must be positive".into());
        }
        match needs {
            Needs::Models => {
                if self.models.is_empty() {
                    return Err("simulate needs at least one model".into());
                }
                if let Some(i) = self.models.iter().position(|m| !is_stationary(m)) {
                    return Err(format!("model {i} is not stationary"));
                }
            }
            Needs::Dataset | Needs::Composite => {
                let path = self.dataset.as_ref().ok_or("no dataset given")?;
                if !path.is_file() {
                    return Err(format!("dataset {} does not exist", path.display()));
                }
                if needs == Needs::Composite {
                    let comp = self.composite.as_ref().ok_or("composite settings missing")?;
                    if let NativeConfig::Spectrum(p) = &comp.native {
                        if !p.is_file() {
                            return Err(format!("native spectrum {} does not exist", p.display()));
                        }
                    }
                }
            }
            Needs::Sweep => {
                let s = &self.sweep;
                if s.points == 0 || s.steps == 0 {
                    return Err("sweep needs positive points and steps".into());
                }
                if !(0.0 < s.radius && s.radius < 1.0) || !(s.gain > 0.0) {
                    return Err("sweep radius must be in (0, 1) and gain positive".into());
                }
                let last = s.bin as f64 + (s.points - 1) as f64 / s.steps as f64;
                if last > self.gate_count as f64 {
                    return Err("sweep runs past the last FTTPS bin".into());
                }
            }
        }
        Ok(())
    }

    /// Multiplier from rad/sample to the reporting unit.
    pub fn freq_scale(&self) -> f64 {
        self.sample_rate_hz.map_or(1.0, |hz| hz / (2.0 * std::f64::consts::PI))
    }
}
