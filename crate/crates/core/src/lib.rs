//! Spectral shrinkage features and shared-covariance LDA for decoding
//! discrete targets from multichannel trials.
//!
//! The pipeline per trial: slice a window of `T` samples after a delay `D`,
//! take the lowest `L` real Fourier frequencies of every channel, shrink
//! them (truncation or Pinsker weights), concatenate channels, then
//! PCA -> ZCA -> LDA. [`harness`] wraps this in leave-one-out evaluation
//! over EDC clusters; [`synth`] generates trials from the matching
//! smooth-signal-plus-white-noise model.

// NaN must fail parameter checks, hence `!(x >= 0.0)` style comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod config;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod harness;
mod linalg;
pub mod rng;
pub mod spectral;
pub mod synth;

pub use config::{ExperimentConfig, Grouping};
pub use dataset::{Dataset, DatasetManifest, SampleEncoding};
pub use decoder::{
    fit_decoder, fit_lda, fit_pca, fit_zca, predict, DecoderModel, DecoderSettings, Fingerprint,
    LdaModel, PcaTransform, Prediction, TrainingStats, ZcaTransform,
};
pub use error::{Error, Result};
pub use harness::{
    binomial_se, cluster_edcs, directional_summary, loocv, relative_gain, sweep, ClusteredDataset,
    ConfusionMatrix, EdcEntry, EdcTable, LoocvReport, SweepCell, SweepDataset,
};
pub use spectral::{
    apply_shrinkage, extract_features, fourier_coefficients, pinsker_weights, reconstruct,
    truncation_weights, EllipsoidWeights, FeatureFlavor, FeatureSpec, FeatureVector,
    SequenceCoefficients, ShrinkageKind, ShrinkagePlan, ShrinkageSpec,
};
pub use synth::{
    generate_dataset, generate_trial, make_signal_bank, noise_diagnostic, BankParams,
    ClassSignalBank, DatasetParams, NoiseDiagnostic, SyntheticDataset, TrialRecord,
};
