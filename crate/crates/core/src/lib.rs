//! Model-based qubit noise spectroscopy.
//!
//! Noise spectra are ARMA (SchWARMA) models evaluated on `[0, pi]` in
//! radians per gate. Probe sequences act on them through filter functions,
//! the simulator turns spectra into survival probabilities, and the
//! estimators invert probabilities back into spectra: band NNLS, the
//! classical Yule-Walker / MA / cepstral / MUSIC family, and gradient
//! fits of the full model with information-criterion order selection.

pub mod arma;
pub mod classical;
pub mod error;
pub mod experiment;
pub mod gradfit;
pub mod invert;
pub mod nnls;
pub mod optim;
pub mod probe;
pub mod sim;
pub mod spectral;
pub mod spline;
pub mod stats;

pub use arma::{
    autocovariance, is_stationary, psd, sample_trajectory, ArmaModel, AutocovarianceSeq, Interpolation,
    PowerSpectrum, SpectrumEstimate, SpectrumSum,
};
pub use error::{QnsError, Result};
pub use gradfit::{
    fit, model_select, CompositeSpec, Criterion, CriterionForm, FitOptions, FitResult, InitSource,
    ModelSelection, NativeSpectrum,
};
pub use invert::{nnls_estimate, NnlsOutput};
pub use probe::{generate_fttps, overlap_chi, predict_survival, FilterBank, ProbeSequence};
pub use sim::{expected_dataset, load_dataset, save_dataset, simulate_qns, QnsDataset};
