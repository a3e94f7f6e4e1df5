//! Real Fourier basis, sequence coefficients and diagonal shrinkage.
//!
//! Coefficients are ordered `[DC, cos_1, sin_1, cos_2, sin_2, ...]` and use
//! the inner product `(1/T) * sum_{t=1..T}` over the grid `x = t/T`, under
//! which the basis `1, sqrt(2)cos(2 pi l x), sqrt(2)sin(2 pi l x)` is
//! orthonormal for every frequency below Nyquist.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::TrialRecord;

/// Largest number of frequencies (DC included) whose basis columns stay
/// linearly independent on a window of `len` samples.
pub fn max_frequencies(len: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len - 1) / 2 + 1
    }
}

/// Coefficient count for `frequencies` frequencies.
pub fn coefficient_count(frequencies: usize) -> usize {
    2 * frequencies - 1
}

/// Frequency of the 0-based coefficient `index` (0 for DC).
pub fn frequency_of(index: usize) -> usize {
    index.div_ceil(2)
}

/// Value of the 0-based basis function `index` at `x`.
pub fn basis_value(index: usize, x: f64) -> f64 {
    if index == 0 {
        return 1.0;
    }
    let arg = 2.0 * PI * frequency_of(index) as f64 * x;
    if index % 2 == 1 {
        SQRT_2 * arg.cos()
    } else {
        SQRT_2 * arg.sin()
    }
}

/// `cos(2 pi j / len)` and `sin(2 pi j / len)` for `j = 0..len`.
///
/// Indexing by `(l * t) mod len` keeps every phase argument reduced, so
/// large frequencies lose no accuracy.
struct TwiddleTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TwiddleTable {
    fn new(len: usize) -> Self {
        let (cos, sin) = (0..len)
            .map(|j| {
                let arg = 2.0 * PI * j as f64 / len as f64;
                (arg.cos(), arg.sin())
            })
            .unzip();
        TwiddleTable { cos, sin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCoefficients {
    values: Vec<f64>,
    window_len: usize,
    channel: usize,
}

impl SequenceCoefficients {
    pub fn new(values: Vec<f64>, window_len: usize, channel: usize) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "coefficient vector length must be odd, got {}",
                values.len()
            )));
        }
        if values.len() > coefficient_count(max_frequencies(window_len)) {
            return Err(Error::Shape(format!(
                "{} coefficients exceed what a {window_len}-sample window represents",
                values.len()
            )));
        }
        Ok(SequenceCoefficients {
            values,
            window_len,
            channel,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn channel(&self) -> usize {
        self.channel
    }

    pub fn num_frequencies(&self) -> usize {
        self.values.len().div_ceil(2)
    }

    pub fn with_channel(mut self, channel: usize) -> Self {
        self.channel = channel;
        self
    }

    /// Per-frequency amplitudes: `|y_1|`, then `sqrt(cos_l^2 + sin_l^2)`.
    pub fn amplitudes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_frequencies());
        out.push(self.values[0].abs());
        out.extend(self.values[1..].chunks_exact(2).map(|p| p[0].hypot(p[1])));
        out
    }
}

/// Coefficients of `signal` on the first `num_frequencies` frequencies.
pub fn fourier_coefficients(
    signal: &[f64],
    num_frequencies: usize,
) -> Result<SequenceCoefficients> {
    let len = signal.len();
    if len < 3 {
        return Err(Error::param(format!(
            "window must hold at least 3 samples, got {len}"
        )));
    }
    if num_frequencies == 0 || num_frequencies > max_frequencies(len) {
        return Err(Error::param(format!(
            "num_frequencies = {num_frequencies} outside 1..={} for a {len}-sample window",
            max_frequencies(len)
        )));
    }
    let table = TwiddleTable::new(len);
    Ok(coefficients_with_table(signal, num_frequencies, &table))
}

fn coefficients_with_table(
    signal: &[f64],
    num_frequencies: usize,
    table: &TwiddleTable,
) -> SequenceCoefficients {
    let len = signal.len();
    let scale = 1.0 / len as f64;
    let mut values = Vec::with_capacity(coefficient_count(num_frequencies));
    values.push(signal.iter().sum::<f64>() * scale);
    for l in 1..num_frequencies {
        let (mut c, mut s) = (0.0, 0.0);
        // t runs 1..=len; phase index (l * t) mod len
        let mut j = l % len;
        for &y in signal {
            c += table.cos[j] * y;
            s += table.sin[j] * y;
            j += l;
            if j >= len {
                j -= len;
            }
        }
        values.push(SQRT_2 * c * scale);
        values.push(SQRT_2 * s * scale);
    }
    SequenceCoefficients {
        values,
        window_len: len,
        channel: 0,
    }
}

/// Time-domain expansion `sum_l y_l phi_l(t/T)` for `t = 1..=len`.
pub fn reconstruct(coeffs: &SequenceCoefficients, len: usize) -> Result<Vec<f64>> {
    if len != coeffs.window_len {
        return Err(Error::Shape(format!(
            "coefficients come from a {}-sample window, asked for {len}",
            coeffs.window_len
        )));
    }
    Ok(synthesize(coeffs.values(), len))
}

/// Evaluates an expansion with arbitrary (odd-length) coefficients on `len` samples.
pub(crate) fn synthesize(values: &[f64], len: usize) -> Vec<f64> {
    let table = TwiddleTable::new(len);
    let mut out = vec![values.first().copied().unwrap_or(0.0); len];
    for (k, pair) in values.get(1..).unwrap_or(&[]).chunks(2).enumerate() {
        let l = k + 1;
        let (a, b) = (
            pair[0] * SQRT_2,
            pair.get(1).copied().unwrap_or(0.0) * SQRT_2,
        );
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let mut j = l % len;
        for v in out.iter_mut() {
            *v += a * table.cos[j] + b * table.sin[j];
            j += l;
            if j >= len {
                j -= len;
            }
        }
    }
    out
}

/// Sobolev ellipsoid axes `a_1 = 1`, `a_{2l} = a_{2l+1} = (2l)^alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidWeights {
    smoothness: f64,
    values: Vec<f64>,
}

impl EllipsoidWeights {
    pub fn new(smoothness: f64, len: usize) -> Self {
        let values = (0..len)
            .map(|j| match frequency_of(j) {
                0 => 1.0,
                l => (2.0 * l as f64).powf(smoothness),
            })
            .collect();
        EllipsoidWeights { smoothness, values }
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sum_l a_l^2 theta_l^2`, over as many entries as both vectors hold.
    pub fn norm_sq(&self, theta: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(theta)
            .map(|(a, t)| (a * t) * (a * t))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageKind {
    Pinsker { smoothness: f64, radius: f64 },
    Truncation { frequencies: usize },
}

/// Diagonal shrinkage weights, one per coefficient index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkagePlan {
    weights: Vec<f64>,
    kind: ShrinkageKind,
}

impl ShrinkagePlan {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> ShrinkageKind {
        self.kind
    }

    /// Weight for coefficient `index`; zero past the end of the plan.
    pub fn weight(&self, index: usize) -> f64 {
        self.weights.get(index).copied().unwrap_or(0.0)
    }
}

/// Pinsker weights `c_l = max(0, 1 - a_l / mu)` over `len` coefficients.
pub fn pinsker_weights(smoothness: f64, radius: f64, len: usize) -> Result<ShrinkagePlan> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param(format!(
            "Pinsker radius mu must be positive, got {radius}"
        )));
    }
    if !(smoothness >= 1.0) || !smoothness.is_finite() {
        return Err(Error::param(format!(
            "smoothness alpha must be >= 1, got {smoothness}"
        )));
    }
    if len.is_multiple_of(2) {
        return Err(Error::param(format!(
            "coefficient count must be odd, got {len}"
        )));
    }
    let weights = EllipsoidWeights::new(smoothness, len)
        .values
        .iter()
        .map(|a| (1.0 - a / radius).max(0.0))
        .collect();
    Ok(ShrinkagePlan {
        weights,
        kind: ShrinkageKind::Pinsker { smoothness, radius },
    })
}

/// Truncation weights: ones on the first `2L - 1` of `len` entries.
pub fn truncation_weights(frequencies: usize, len: usize) -> Result<ShrinkagePlan> {
    if frequencies == 0 {
        return Err(Error::param("truncation needs at least one frequency"));
    }
    let keep = coefficient_count(frequencies);
    let weights = (0..len).map(|j| if j < keep { 1.0 } else { 0.0 }).collect();
    Ok(ShrinkagePlan {
        weights,
        kind: ShrinkageKind::Truncation { frequencies },
    })
}

/// `theta_hat_l = c_l * y_l`.
pub fn apply_shrinkage(y: &SequenceCoefficients, plan: &ShrinkagePlan) -> SequenceCoefficients {
    let values = y
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| plan.weight(j) * v)
        .collect();
    SequenceCoefficients {
        values,
        window_len: y.window_len,
        channel: y.channel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFlavor {
    #[serde(alias = "complex")]
    ComplexSpectrum,
    #[serde(alias = "power")]
    PowerSpectrum,
}

impl FeatureFlavor {
    pub fn name(self) -> &'static str {
        match self {
            FeatureFlavor::ComplexSpectrum => "complex_spectrum",
            FeatureFlavor::PowerSpectrum => "power_spectrum",
        }
    }

    pub fn per_channel_len(self, frequencies: usize) -> usize {
        match self {
            FeatureFlavor::ComplexSpectrum => coefficient_count(frequencies),
            FeatureFlavor::PowerSpectrum => frequencies,
        }
    }
}

impl std::str::FromStr for FeatureFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" | "complex_spectrum" => Ok(FeatureFlavor::ComplexSpectrum),
            "power" | "power_spectrum" => Ok(FeatureFlavor::PowerSpectrum),
            other => Err(Error::param(format!("unknown feature flavor {other:?}"))),
        }
    }
}

/// Which diagonal estimator feeds the features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageSpec {
    #[default]
    Truncation,
    Pinsker {
        smoothness: f64,
        radius: f64,
    },
}

impl ShrinkageSpec {
    pub fn plan(&self, frequencies: usize) -> Result<ShrinkagePlan> {
        let len = coefficient_count(frequencies);
        match *self {
            ShrinkageSpec::Truncation => truncation_weights(frequencies, len),
            ShrinkageSpec::Pinsker { smoothness, radius } => {
                pinsker_weights(smoothness, radius, len)
            }
        }
    }
}

/// Window, delay and spectral settings shared by every trial of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub window_len: usize,
    pub delay: usize,
    pub frequencies: usize,
    pub flavor: FeatureFlavor,
    #[serde(default)]
    pub shrinkage: ShrinkageSpec,
    #[serde(default)]
    pub log_power: bool,
}

impl FeatureSpec {
    pub fn truncation(
        window_len: usize,
        delay: usize,
        frequencies: usize,
        flavor: FeatureFlavor,
    ) -> Self {
        FeatureSpec {
            window_len,
            delay,
            frequencies,
            flavor,
            shrinkage: ShrinkageSpec::Truncation,
            log_power: false,
        }
    }

    pub fn feature_dim(&self, num_channels: usize) -> usize {
        num_channels * self.flavor.per_channel_len(self.frequencies)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies == 0 {
            return Err(Error::param("L must be at least 1"));
        }
        if self.window_len < 3 {
            return Err(Error::param(format!(
                "window T must be at least 3, got {}",
                self.window_len
            )));
        }
        if self.frequencies > max_frequencies(self.window_len) {
            return Err(Error::param(format!(
                "L = {} exceeds the {} frequencies a {}-sample window represents",
                self.frequencies,
                max_frequencies(self.window_len),
                self.window_len
            )));
        }
        self.shrinkage.plan(self.frequencies).map(|_| ())
    }
}

/// Concatenated per-channel spectral features of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    flavor: FeatureFlavor,
    per_channel_len: usize,
    num_channels: usize,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flavor(&self) -> FeatureFlavor {
        self.flavor
    }

    pub fn per_channel_len(&self) -> usize {
        self.per_channel_len
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const LOG_POWER_FLOOR: f64 = 1e-12;

/// Features of `trial` over samples `[D+1, D+T]` of every channel.
pub fn extract_features(trial: &TrialRecord, spec: &FeatureSpec) -> Result<FeatureVector> {
    FeatureExtractor::new(spec)?.extract(trial)
}

/// Reusable extractor; caches the twiddle table and shrinkage plan.
pub struct FeatureExtractor {
    spec: FeatureSpec,
    plan: ShrinkagePlan,
    table: TwiddleTable,
}

impl FeatureExtractor {
    pub fn new(spec: &FeatureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(FeatureExtractor {
            spec: *spec,
            plan: spec.shrinkage.plan(spec.frequencies)?,
            table: TwiddleTable::new(spec.window_len),
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn extract(&self, trial: &TrialRecord) -> Result<FeatureVector> {
        let spec = &self.spec;
        let end = spec.delay + spec.window_len;
        if end > trial.len() {
            return Err(Error::param(format!(
                "trial {}: window D + T = {end} overruns its {} samples",
                trial.trial_id(),
                trial.len()
            )));
        }
        let per_channel_len = spec.flavor.per_channel_len(spec.frequencies);
        let mut values = Vec::with_capacity(per_channel_len * trial.num_channels());
        for (channel, row) in trial.channels().enumerate() {
            let raw = coefficients_with_table(&row[spec.delay..end], spec.frequencies, &self.table)
                .with_channel(channel);
            let shrunk = apply_shrinkage(&raw, &self.plan);
            match spec.flavor {
                FeatureFlavor::ComplexSpectrum => values.extend_from_slice(shrunk.values()),
                FeatureFlavor::PowerSpectrum if spec.log_power => values.extend(
                    shrunk
                        .amplitudes()
                        .iter()
                        .map(|a| (a * a + LOG_POWER_FLOOR).ln()),
                ),
                FeatureFlavor::PowerSpectrum => values.extend(shrunk.amplitudes()),
            }
        }
        Ok(FeatureVector {
            values,
            flavor: spec.flavor,
            per_channel_len,
            num_channels: trial.num_channels(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cos_signal(len: usize, shift: usize) -> Vec<f64> {
        (1..=len)
            .map(|t| SQRT_2 * (2.0 * PI * ((t + shift) % len) as f64 / len as f64).cos())
            .collect()
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let y = fourier_coefficients(&[3.0; 20], 5).unwrap();
        assert_abs_diff_eq!(y.values()[0], 3.0, epsilon = 1e-12);
        for v in &y.values()[1..] {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_cosine_hits_single_coefficient() {
        let y = fourier_coefficients(&cos_signal(650, 0), 10).unwrap();
        for (j, v) in y.values().iter().enumerate() {
            let expected = if j == 1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn nyquist_bound_enforced() {
        assert_eq!(max_frequencies(8), 4);
        assert_eq!(max_frequencies(65), 33);
        assert!(fourier_coefficients(&[0.0; 8], 4).is_ok());
        assert!(matches!(
            fourier_coefficients(&[0.0; 8], 5),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            fourier_coefficients(&[0.0; 8], 0),
            Err(Error::Parameter(_))
        ));
        assert!(fourier_coefficients(&[0.0; 2], 1).is_err());
    }

    #[test]
    fn dc_only_reconstructs_constant() {
        let c = SequenceCoefficients::new(vec![2.5, 0.0, 0.0], 9, 0).unwrap();
        assert_eq!(reconstruct(&c, 9).unwrap(), vec![2.5; 9]);
        assert!(matches!(reconstruct(&c, 10), Err(Error::Shape(_))));
    }

    #[test]
    fn pinsker_reference_values() {
        let plan = pinsker_weights(1.0, 4.0, 7).unwrap();
        assert_eq!(plan.weights(), &[0.75, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let plan = pinsker_weights(1.0, 1e12, 9).unwrap();
        assert!(plan.weights().iter().all(|w| (w - 1.0).abs() < 1e-9));
        let plan = pinsker_weights(1.0, 1.0, 5).unwrap();
        assert!(plan.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn pinsker_rejects_bad_parameters() {
        assert!(matches!(
            pinsker_weights(1.0, 0.0, 7),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            pinsker_weights(1.0, -2.0, 7),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            pinsker_weights(1.0, 4.0, 6),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn shrinkage_examples() {
        let y = SequenceCoefficients::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 20, 0).unwrap();
        let t = apply_shrinkage(&y, &truncation_weights(2, 7).unwrap());
        assert_eq!(t.values(), &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);

        let ones = ShrinkagePlan {
            weights: vec![1.0; 7],
            kind: ShrinkageKind::Truncation { frequencies: 4 },
        };
        assert_eq!(apply_shrinkage(&y, &ones), y);

        let y = SequenceCoefficients::new(vec![1.0; 5], 20, 0).unwrap();
        let p = apply_shrinkage(&y, &pinsker_weights(1.0, 4.0, 5).unwrap());
        assert_eq!(p.values(), &[0.75, 0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn short_plan_pads_with_zeros() {
        let y = SequenceCoefficients::new(vec![1.0; 5], 20, 0).unwrap();
        let plan = truncation_weights(1, 1).unwrap();
        assert_eq!(
            apply_shrinkage(&y, &plan).values(),
            &[1.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn ellipsoid_axes() {
        let a = EllipsoidWeights::new(1.0, 7);
        assert_eq!(a.values(), &[1.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0]);
        let a = EllipsoidWeights::new(2.0, 5);
        assert_eq!(a.values(), &[1.0, 4.0, 4.0, 16.0, 16.0]);
        assert_eq!(a.norm_sq(&[1.0, 1.0]), 17.0);
    }

    #[test]
    fn amplitudes_pair_cos_and_sin() {
        let c = SequenceCoefficients::new(vec![-2.0, 3.0, 4.0], 9, 0).unwrap();
        assert_eq!(c.amplitudes(), vec![2.0, 5.0]);
    }

    #[test]
    fn flavor_parsing() {
        assert_eq!(
            "power".parse::<FeatureFlavor>().unwrap(),
            FeatureFlavor::PowerSpectrum
        );
        assert_eq!(
            "complex_spectrum".parse::<FeatureFlavor>().unwrap(),
            FeatureFlavor::ComplexSpectrum
        );
        assert!("phase".parse::<FeatureFlavor>().is_err());
    }
}
