//! Synthetic trials: smooth class-specific signals plus white Gaussian noise.
//!
//! Each class owns one mean coefficient vector per channel inside a Sobolev
//! ellipsoid; a trial jitters those coefficients, expands them on the real
//! Fourier basis over `t/T, t = 1..T`, and adds i.i.d. noise.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{self, coefficient_count, EllipsoidWeights};

/// Generator parameters for a [`ClassSignalBank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankParams {
    pub num_classes: usize,
    pub num_channels: usize,
    /// Frequencies per class mean (DC included).
    pub frequencies: usize,
    pub smoothness: f64,
    /// Ellipsoid radius; means satisfy `sum a_l^2 theta_l^2 <= radius^2`.
    pub radius: f64,
    /// Minimum Euclidean distance between class means (all channels stacked).
    pub separation: f64,
    /// Per-trial coefficient jitter standard deviation.
    pub jitter: f64,
}

impl BankParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::param(format!(
                "need K >= 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.num_channels == 0 {
            return Err(Error::param("need at least one channel"));
        }
        if self.frequencies == 0 {
            return Err(Error::param("bank needs at least one frequency"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::param(format!(
                "ellipsoid radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.smoothness >= 1.0) {
            return Err(Error::param(format!(
                "smoothness must be >= 1, got {}",
                self.smoothness
            )));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::param(format!(
                "separation must be >= 0, got {}",
                self.separation
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::param(format!(
                "jitter must be >= 0, got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Class-mean coefficients for every `(class, channel)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignalBank {
    num_classes: usize,
    num_channels: usize,
    frequencies: usize,
    smoothness: f64,
    radius: f64,
    jitter: f64,
    /// `[class][channel][coefficient]`, flattened.
    means: Vec<f64>,
}

impl ClassSignalBank {
    /// Builds a bank from explicit means, `means[class][channel]` each of
    /// length `2 * frequencies - 1`.
    pub fn new(
        means: Vec<Vec<Vec<f64>>>,
        smoothness: f64,
        radius: f64,
        jitter: f64,
    ) -> Result<Self> {
        let num_classes = means.len();
        let num_channels = means.first().map_or(0, Vec::len);
        let width = means.first().and_then(|c| c.first()).map_or(0, Vec::len);
        if width.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "coefficient vectors must have odd length, got {width}"
            )));
        }
        for class in &means {
            if class.len() != num_channels || class.iter().any(|c| c.len() != width) {
                return Err(Error::Shape("ragged class-mean array".into()));
            }
        }
        let bank = ClassSignalBank {
            num_classes,
            num_channels,
            frequencies: width.div_ceil(2),
            smoothness,
            radius,
            jitter,
            means: means.into_iter().flatten().flatten().collect(),
        };
        bank.params(0.0).validate()?;
        let axes = bank.axes();
        for k in 1..=num_classes {
            for c in 0..num_channels {
                let norm = axes.norm_sq(bank.mean(k, c));
                if norm > radius * radius {
                    return Err(Error::param(format!(
                        "class {k} channel {c}: mean outside the ellipsoid ({norm} > {})",
                        radius * radius
                    )));
                }
            }
        }
        if bank.min_pairwise_distance() <= 0.0 {
            return Err(Error::param("class means must be pairwise distinct"));
        }
        Ok(bank)
    }

    fn params(&self, separation: f64) -> BankParams {
        BankParams {
            num_classes: self.num_classes,
            num_channels: self.num_channels,
            frequencies: self.frequencies,
            smoothness: self.smoothness,
            radius: self.radius,
            separation,
            jitter: self.jitter,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    pub fn coefficients_per_channel(&self) -> usize {
        coefficient_count(self.frequencies)
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn axes(&self) -> EllipsoidWeights {
        EllipsoidWeights::new(self.smoothness, self.coefficients_per_channel())
    }

    fn class_block(&self, class: usize) -> &[f64] {
        let w = self.num_channels * self.coefficients_per_channel();
        &self.means[(class - 1) * w..class * w]
    }

    /// Mean coefficients of `class` (1-based) on `channel`.
    pub fn mean(&self, class: usize, channel: usize) -> &[f64] {
        let m = self.coefficients_per_channel();
        &self.class_block(class)[channel * m..(channel + 1) * m]
    }

    /// All channels of `class` stacked channel-major.
    pub fn class_mean(&self, class: usize) -> &[f64] {
        self.class_block(class)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 1..=self.num_classes {
            for j in i + 1..=self.num_classes {
                best = best.min(distance(self.class_mean(i), self.class_mean(j)));
            }
        }
        best
    }

    /// Convex blend `(1 - weight) * self + weight * other`.
    pub fn blend(&self, other: &ClassSignalBank, weight: f64) -> Result<ClassSignalBank> {
        if self.means.len() != other.means.len() || self.frequencies != other.frequencies {
            return Err(Error::Shape(
                "cannot blend banks of different shapes".into(),
            ));
        }
        let mut out = self.clone();
        for (m, o) in out.means.iter_mut().zip(&other.means) {
            *m = (1.0 - weight) * *m + weight * o;
        }
        Ok(out)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scales `theta` toward the origin until it lies inside the ellipsoid.
fn pull_inside(theta: &mut [f64], axes: &EllipsoidWeights, radius: f64) {
    let limit = radius * radius;
    let norm = axes.norm_sq(theta);
    if norm <= limit {
        return;
    }
    let scale = (limit / norm).sqrt();
    theta.iter_mut().for_each(|v| *v *= scale);
    // rounding can leave us one ulp outside
    while axes.norm_sq(theta) > limit {
        theta
            .iter_mut()
            .for_each(|v| *v *= 1.0 - 4.0 * f64::EPSILON);
    }
}

const MAX_REPAIR_ROUNDS: usize = 10_000;

/// Samples class means i.i.d. standard normal, scales them into the
/// ellipsoid, then pushes violating pairs apart until every pair is at
/// least `separation` apart.
pub fn make_signal_bank(params: &BankParams, seed: u64) -> Result<ClassSignalBank> {
    params.validate()?;
    let mut rng = rng::stream(seed, 0);
    let m = coefficient_count(params.frequencies);
    let axes = EllipsoidWeights::new(params.smoothness, m);
    let block = params.num_channels * m;

    let mut means: Vec<f64> = (0..params.num_classes * block)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for theta in means.chunks_exact_mut(m) {
        pull_inside(theta, &axes, params.radius);
    }

    let target = params.separation;
    let dim = block;
    let mut satisfied = false;
    for _ in 0..MAX_REPAIR_ROUNDS {
        let mut moved = false;
        for i in 0..params.num_classes {
            for j in i + 1..params.num_classes {
                let (lo, hi) = means.split_at_mut(j * block);
                let a = &mut lo[i * block..(i + 1) * block];
                let b = &mut hi[..block];
                let d = distance(a, b);
                if d >= target && d > 0.0 {
                    continue;
                }
                moved = true;
                // half the deficit each way, plus a hair to clear rounding
                let step = 0.5 * (target - d) * (1.0 + 1e-9) + f64::EPSILON;
                for k in 0..dim {
                    let dir = if d > 0.0 {
                        (a[k] - b[k]) / d
                    } else if k == 0 {
                        1.0
                    } else {
                        0.0
                    };
                    a[k] += step * dir;
                    b[k] -= step * dir;
                }
            }
        }
        for theta in means.chunks_exact_mut(m) {
            pull_inside(theta, &axes, params.radius);
        }
        if !moved {
            satisfied = true;
            break;
        }
    }
    let bank = ClassSignalBank {
        num_classes: params.num_classes,
        num_channels: params.num_channels,
        frequencies: params.frequencies,
        smoothness: params.smoothness,
        radius: params.radius,
        jitter: params.jitter,
        means,
    };
    let min_dist = bank.min_pairwise_distance();
    if !satisfied || min_dist < target || min_dist <= 0.0 {
        return Err(Error::param(format!(
            "separation {target} unattainable inside an ellipsoid of radius {} (reached {min_dist})",
            params.radius
        )));
    }
    Ok(bank)
}

/// One multichannel trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    trial_id: String,
    session_id: String,
    label: usize,
    depth: Vec<f64>,
    num_channels: usize,
    /// Row-major `num_channels x len`.
    samples: Vec<f64>,
}

impl TrialRecord {
    pub fn new(
        trial_id: impl Into<String>,
        session_id: impl Into<String>,
        label: usize,
        depth: Vec<f64>,
        num_channels: usize,
        samples: Vec<f64>,
    ) -> Result<Self> {
        let trial_id = trial_id.into();
        if label == 0 {
            return Err(Error::param(format!(
                "trial {trial_id}: labels are 1-based"
            )));
        }
        if num_channels == 0 || samples.is_empty() || !samples.len().is_multiple_of(num_channels) {
            return Err(Error::Shape(format!(
                "trial {trial_id}: {} samples do not split into {num_channels} channels",
                samples.len()
            )));
        }
        if depth.len() != num_channels {
            return Err(Error::Shape(format!(
                "trial {trial_id}: depth vector has {} entries for {num_channels} channels",
                depth.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("trial {trial_id}: non-finite sample")));
        }
        Ok(TrialRecord {
            trial_id,
            session_id: session_id.into(),
            label,
            depth,
            num_channels,
            samples,
        })
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.num_channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let len = self.len();
        &self.samples[channel * len..(channel + 1) * len]
    }

    pub fn channels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.len())
    }

    pub fn with_label(mut self, label: usize) -> Self {
        assert!(label >= 1, "labels are 1-based");
        self.label = label;
        self
    }

    pub fn with_ids(mut self, trial_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        self.trial_id = trial_id.into();
        self.session_id = session_id.into();
        self
    }

    pub fn with_depth(mut self, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != self.num_channels {
            return Err(Error::Shape(format!(
                "depth vector has {} entries for {} channels",
                depth.len(),
                self.num_channels
            )));
        }
        self.depth = depth;
        Ok(self)
    }
}

/// Draws one trial of `class` (1-based): jittered coefficients expanded on
/// `len` samples plus `noise_sd` white noise.
pub fn generate_trial(
    bank: &ClassSignalBank,
    class: usize,
    noise_sd: f64,
    len: usize,
    seed: u64,
) -> Result<TrialRecord> {
    if class == 0 || class > bank.num_classes {
        return Err(Error::param(format!(
            "class {class} outside 1..={}",
            bank.num_classes
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::param(format!(
            "noise sd must be >= 0, got {noise_sd}"
        )));
    }
    if len < 3 || bank.frequencies > spectral::max_frequencies(len) {
        return Err(Error::param(format!(
            "T = {len} too short for a bank with {} frequencies",
            bank.frequencies
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let mut samples = Vec::with_capacity(bank.num_channels * len);
    let mut theta = vec![0.0; bank.coefficients_per_channel()];
    for channel in 0..bank.num_channels {
        for (t, m) in theta.iter_mut().zip(bank.mean(class, channel)) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *t = m + bank.jitter * z;
        }
        let clean = spectral::synthesize(&theta, len);
        samples.extend(clean.into_iter().map(|f| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f + noise_sd * z
        }));
    }
    TrialRecord::new(
        format!("trial-{seed:016x}"),
        "synthetic",
        class,
        vec![0.0; bank.num_channels],
        bank.num_channels,
        samples,
    )
}

/// Parameters for a whole synthetic dataset spread over several EDCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub bank: BankParams,
    pub noise_sd: f64,
    pub trial_len: usize,
    pub num_trials: usize,
    pub num_edcs: usize,
    /// 0 gives every EDC the shared bank; 1 gives each its own.
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default = "default_base_depth")]
    pub base_depth_mm: f64,
    #[serde(default = "default_depth_step")]
    pub depth_step_mm: f64,
    #[serde(default = "default_depth_jitter")]
    pub depth_jitter_mm: f64,
}

fn default_base_depth() -> f64 {
    1.0
}

fn default_depth_step() -> f64 {
    0.25
}

fn default_depth_jitter() -> f64 {
    0.1
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        if self.num_trials == 0 {
            return Err(Error::param("number of trials must be positive"));
        }
        if self.num_edcs == 0 || self.num_edcs > self.num_trials {
            return Err(Error::param(format!(
                "need 1..={} EDCs, got {}",
                self.num_trials, self.num_edcs
            )));
        }
        if !(0.0..=1.0).contains(&self.heterogeneity) {
            return Err(Error::param(format!(
                "heterogeneity must lie in [0, 1], got {}",
                self.heterogeneity
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::param(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if !(self.depth_jitter_mm >= 0.0) {
            return Err(Error::param("depth jitter must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcInfo {
    pub edc_id: String,
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub edcs: Vec<EdcInfo>,
    /// EDC index of every trial, parallel to `trials`.
    pub trial_edc: Vec<usize>,
    pub trials: Vec<TrialRecord>,
}

const BANK_STREAM: u64 = 1;
const DEPTH_STREAM: u64 = 2;
const TRIAL_STREAM: u64 = 3;

/// Generates `num_trials` trials split into contiguous, class-balanced EDC blocks.
pub fn generate_dataset(params: &DatasetParams, seed: u64) -> Result<SyntheticDataset> {
    params.validate()?;
    let shared = make_signal_bank(&params.bank, seed)?;
    let bank_seed = rng::derive_seed(seed, BANK_STREAM);
    let depth_seed = rng::derive_seed(seed, DEPTH_STREAM);
    let trial_seed = rng::derive_seed(seed, TRIAL_STREAM);

    let base = params.num_trials / params.num_edcs;
    let extra = params.num_trials % params.num_edcs;
    let mut edcs = Vec::with_capacity(params.num_edcs);
    let mut trials = Vec::with_capacity(params.num_trials);
    let mut trial_edc = Vec::with_capacity(params.num_trials);

    for e in 0..params.num_edcs {
        let bank = if params.heterogeneity > 0.0 {
            let own = make_signal_bank(&params.bank, rng::derive_seed(bank_seed, e as u64))?;
            shared.blend(&own, params.heterogeneity)?
        } else {
            shared.clone()
        };
        let mut depth_rng = rng::stream(depth_seed, e as u64);
        let depth: Vec<f64> = (0..params.bank.num_channels)
            .map(|_| {
                let u: f64 = depth_rng.random_range(-1.0..=1.0);
                params.base_depth_mm + e as f64 * params.depth_step_mm + params.depth_jitter_mm * u
            })
            .collect();
        let edc_id = format!("edc-{e:03}");
        let count = base + usize::from(e < extra);
        for local in 0..count {
            let index = trials.len();
            let label = 1 + local % params.bank.num_classes;
            let trial = generate_trial(
                &bank,
                label,
                params.noise_sd,
                params.trial_len,
                rng::derive_seed(trial_seed, index as u64),
            )?
            .with_ids(format!("trial-{index:05}"), format!("session-{e:03}"))
            .with_depth(depth.clone())?;
            trials.push(trial);
            trial_edc.push(e);
        }
        edcs.push(EdcInfo { edc_id, depth });
    }
    Ok(SyntheticDataset {
        edcs,
        trial_edc,
        trials,
    })
}

/// Residual covariance after removing the `L`-frequency truncation estimate.
#[derive(Debug, Clone)]
pub struct NoiseDiagnostic {
    pub covariance: DMatrix<f64>,
    /// Mean |off-diagonal| over mean diagonal.
    pub diagonal_dominance: f64,
    pub window_len: usize,
}

/// Empirical `T x T` covariance of truncation residuals on `channel`,
/// pooled across trials.
pub fn noise_diagnostic(
    trials: &[TrialRecord],
    channel: usize,
    frequencies: usize,
) -> Result<NoiseDiagnostic> {
    if trials.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "noise diagnostic needs at least 2 trials, got {}",
            trials.len()
        )));
    }
    if frequencies == 0 {
        return Err(Error::param("L must be at least 1"));
    }
    let len = trials[0].len();
    let n = trials.len();
    let mut residuals = DMatrix::<f64>::zeros(n, len);
    for (i, trial) in trials.iter().enumerate() {
        if trial.len() != len {
            return Err(Error::Shape(format!(
                "trial {} has {} samples, expected {len}",
                trial.trial_id(),
                trial.len()
            )));
        }
        if channel >= trial.num_channels() {
            return Err(Error::param(format!(
                "channel {channel} out of range for trial {}",
                trial.trial_id()
            )));
        }
        let raw = trial.channel(channel);
        let coeffs = spectral::fourier_coefficients(raw, frequencies)?;
        let fitted = spectral::reconstruct(&coeffs, len)?;
        for (t, (y, f)) in raw.iter().zip(&fitted).enumerate() {
            residuals[(i, t)] = y - f;
        }
    }
    for mut col in residuals.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut covariance = residuals.transpose() * &residuals;
    covariance /= (n - 1) as f64;
    // symmetrize exactly
    for i in 0..len {
        for j in i + 1..len {
            let v = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = v;
            covariance[(j, i)] = v;
        }
    }
    let diag_mean = covariance.diagonal().mean();
    let off_sum: f64 = covariance.iter().map(|v| v.abs()).sum::<f64>()
        - covariance.diagonal().iter().map(|v| v.abs()).sum::<f64>();
    let off_mean = if len > 1 {
        off_sum / (len * (len - 1)) as f64
    } else {
        0.0
    };
    let diagonal_dominance = if diag_mean > 0.0 {
        off_mean / diag_mean
    } else {
        0.0
    };
    Ok(NoiseDiagnostic {
        covariance,
        diagonal_dominance,
        window_len: len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> BankParams {
        BankParams {
            num_classes: 2,
            num_channels: 1,
            frequencies: 2,
            smoothness: 1.0,
            radius: 10.0,
            separation: 0.0,
            jitter: 0.0,
        }
    }

    #[test]
    fn small_bank_lies_in_ellipsoid() {
        let bank = make_signal_bank(&small_params(), 7).unwrap();
        assert_eq!(bank.mean(1, 0).len(), 3);
        assert!(bank.min_pairwise_distance() > 0.0);
        let axes = bank.axes();
        for k in 1..=2 {
            assert!(axes.norm_sq(bank.mean(k, 0)) <= 100.0);
        }
    }

    #[test]
    fn separation_is_enforced() {
        let params = BankParams {
            separation: 5.0,
            ..small_params()
        };
        let bank = make_signal_bank(&params, 7).unwrap();
        assert!(bank.min_pairwise_distance() >= 5.0);
        let axes = bank.axes();
        for k in 1..=2 {
            assert!(axes.norm_sq(bank.mean(k, 0)) <= 100.0);
        }
    }

    #[test]
    fn unattainable_separation_is_reported() {
        let params = BankParams {
            separation: 1000.0,
            ..small_params()
        };
        assert!(matches!(
            make_signal_bank(&params, 7),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn bank_parameter_errors() {
        let mut p = small_params();
        p.num_classes = 1;
        assert!(matches!(make_signal_bank(&p, 0), Err(Error::Parameter(_))));
        let mut p = small_params();
        p.radius = 0.0;
        assert!(matches!(make_signal_bank(&p, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn bank_is_deterministic() {
        let params = BankParams {
            num_classes: 8,
            num_channels: 32,
            frequencies: 4,
            smoothness: 1.0,
            radius: 10.0,
            separation: 0.0,
            jitter: 0.1,
        };
        assert_eq!(
            make_signal_bank(&params, 99).unwrap(),
            make_signal_bank(&params, 99).unwrap()
        );
    }

    #[test]
    fn noiseless_trial_equals_expansion() {
        let bank = make_signal_bank(&small_params(), 3).unwrap();
        let trial = generate_trial(&bank, 2, 0.0, 50, 11).unwrap();
        let expected = spectral::synthesize(bank.mean(2, 0), 50);
        assert_eq!(trial.channel(0), expected.as_slice());
        assert_eq!(trial.label(), 2);
    }

    #[test]
    fn trial_errors() {
        let bank = make_signal_bank(&small_params(), 3).unwrap();
        assert!(matches!(
            generate_trial(&bank, 0, 1.0, 50, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_trial(&bank, 3, 1.0, 50, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_trial(&bank, 1, 1.0, 2, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn trial_record_rejects_bad_input() {
        assert!(TrialRecord::new("t", "s", 0, vec![0.0], 1, vec![1.0]).is_err());
        assert!(TrialRecord::new("t", "s", 1, vec![0.0], 1, vec![f64::NAN]).is_err());
        assert!(TrialRecord::new("t", "s", 1, vec![0.0; 2], 1, vec![1.0]).is_err());
        assert!(TrialRecord::new("t", "s", 1, vec![0.0; 2], 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn diagnostic_needs_two_trials() {
        let bank = make_signal_bank(&small_params(), 3).unwrap();
        let trial = generate_trial(&bank, 1, 1.0, 30, 0).unwrap();
        assert!(matches!(
            noise_diagnostic(&[trial], 0, 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn zero_noise_residual_covariance_vanishes() {
        let bank = make_signal_bank(&small_params(), 3).unwrap();
        let trials: Vec<_> = (0..5)
            .map(|i| generate_trial(&bank, 1 + i % 2, 0.0, 40, i as u64).unwrap())
            .collect();
        let diag = noise_diagnostic(&trials, 0, 2).unwrap();
        assert!(diag.covariance.iter().all(|v| v.abs() < 1e-20));
        assert!(diag.diagonal_dominance.is_finite());
    }

    #[test]
    fn dataset_blocks_are_balanced() {
        let params = DatasetParams {
            bank: BankParams {
                num_classes: 4,
                num_channels: 3,
                frequencies: 2,
                smoothness: 1.0,
                radius: 5.0,
                separation: 0.0,
                jitter: 0.0,
            },
            noise_sd: 1.0,
            trial_len: 20,
            num_trials: 22,
            num_edcs: 3,
            heterogeneity: 0.5,
            base_depth_mm: 1.0,
            depth_step_mm: 0.5,
            depth_jitter_mm: 0.1,
        };
        let ds = generate_dataset(&params, 5).unwrap();
        assert_eq!(ds.trials.len(), 22);
        assert_eq!(ds.edcs.len(), 3);
        assert_eq!(ds.trial_edc.iter().filter(|&&e| e == 0).count(), 8);
        assert_eq!(ds.trial_edc.iter().filter(|&&e| e == 2).count(), 7);
        assert_eq!(ds.trials[0].depth(), ds.edcs[0].depth.as_slice());
        assert_eq!(ds, generate_dataset(&params, 5).unwrap());
    }
}
