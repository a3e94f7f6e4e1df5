//! PCA projection, ZCA whitening and shared-covariance LDA.
//!
//! Every stage is fitted from [`TrainingStats`] (count, mean, scatter and
//! per-class moments) rather than from raw rows. `fit_*` on a data matrix
//! builds the statistics first; leave-one-out evaluation downdates them.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_rows, symmetric_eigen_desc};
use crate::spectral::{FeatureSpec, FeatureVector};

/// Relative eigenvalue floor below which a covariance direction counts as null.
const RANK_TOLERANCE: f64 = 1e-12;

/// First and second moments of a labelled sample.
#[derive(Debug, Clone)]
pub struct TrainingStats {
    n: usize,
    mean: DVector<f64>,
    /// Total centered scatter `sum (x - mean)(x - mean)^T`.
    scatter: DMatrix<f64>,
    class_counts: Vec<usize>,
    class_means: Vec<DVector<f64>>,
    /// Pooled within-class scatter.
    within: DMatrix<f64>,
}

impl TrainingStats {
    /// Statistics of the rows of `x`; `labels` are 1-based classes in `1..=num_classes`.
    pub fn from_rows(x: &DMatrix<f64>, labels: &[usize], num_classes: usize) -> Result<Self> {
        let (n, dim) = x.shape();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} rows but {} labels",
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > num_classes) {
            return Err(Error::param(format!(
                "label {bad} outside 1..={num_classes}"
            )));
        }
        let mean = DVector::from_fn(dim, |j, _| x.column(j).mean());
        let mut class_counts = vec![0usize; num_classes];
        let mut class_means = vec![DVector::zeros(dim); num_classes];
        for (row, &l) in x.row_iter().zip(labels) {
            class_counts[l - 1] += 1;
            class_means[l - 1] += row.transpose();
        }
        for (m, &c) in class_means.iter_mut().zip(&class_counts) {
            if c > 0 {
                *m /= c as f64;
            }
        }
        let mut centered = x.clone();
        let mut within_centered = x.clone();
        for (i, &l) in labels.iter().enumerate() {
            for j in 0..dim {
                centered[(i, j)] -= mean[j];
                within_centered[(i, j)] -= class_means[l - 1][j];
            }
        }
        let mut scatter = centered.tr_mul(&centered);
        let mut within = within_centered.tr_mul(&within_centered);
        linalg::symmetrize(&mut scatter);
        linalg::symmetrize(&mut within);
        Ok(TrainingStats {
            n,
            mean,
            scatter,
            class_counts,
            class_means,
            within,
        })
    }

    /// Statistics with the single row `x` of class `label` removed.
    pub fn without(&self, x: &[f64], label: usize) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "row of length {} for {}-dim stats",
                x.len(),
                self.dim()
            )));
        }
        if label == 0 || label > self.num_classes() || self.class_counts[label - 1] == 0 {
            return Err(Error::param(format!("no row of class {label} to remove")));
        }
        if self.n < 2 {
            return Err(Error::InsufficientData("cannot remove the last row".into()));
        }
        let x = DVector::from_column_slice(x);
        let mut out = self.clone();
        let n = self.n as f64;
        let dev = &x - &self.mean;
        linalg::rank_one_sub(&mut out.scatter, &dev, n / (n - 1.0));
        out.mean = (&self.mean * n - &x) / (n - 1.0);
        out.n -= 1;

        let k = label - 1;
        let nk = self.class_counts[k] as f64;
        out.class_counts[k] -= 1;
        if out.class_counts[k] == 0 {
            out.class_means[k].fill(0.0);
        } else {
            let dev = &x - &self.class_means[k];
            linalg::rank_one_sub(&mut out.within, &dev, nk / (nk - 1.0));
            out.class_means[k] = (&self.class_means[k] * nk - &x) / (nk - 1.0);
        }
        linalg::symmetrize(&mut out.scatter);
        linalg::symmetrize(&mut out.within);
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased covariance `scatter / (n - 1)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scatter / (self.n.saturating_sub(1).max(1) as f64)
    }

    pub fn within_scatter(&self) -> &DMatrix<f64> {
        &self.within
    }

    pub fn class_means(&self) -> &[DVector<f64>] {
        &self.class_means
    }
}

/// Projection onto the leading principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    mean: Vec<f64>,
    /// `feature_dim x P`, orthonormal columns.
    #[serde(with = "matrix_rows")]
    basis: DMatrix<f64>,
    explained_variance: Vec<f64>,
}

impl PcaTransform {
    pub fn from_stats(stats: &TrainingStats, modes: usize) -> Result<Self> {
        let n = stats.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "PCA needs at least 2 rows, got {n}"
            )));
        }
        let max = (n - 1).min(stats.dim());
        if modes == 0 || modes > max {
            return Err(Error::param(format!(
                "P = {modes} outside 1..={max} (n = {n}, feature_dim = {})",
                stats.dim()
            )));
        }
        let eig = symmetric_eigen_desc(&stats.covariance());
        Ok(PcaTransform {
            mean: stats.mean().as_slice().to_vec(),
            basis: eig.vectors.columns(0, modes).into_owned(),
            explained_variance: eig.values[..modes].to_vec(),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn modes(&self) -> usize {
        self.basis.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Projects each row of `x`.
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered * &self.basis
    }
}

/// Fits PCA with `modes` components on the rows of `x`.
pub fn fit_pca(x: &DMatrix<f64>, modes: usize) -> Result<PcaTransform> {
    let labels = vec![1; x.nrows()];
    PcaTransform::from_stats(&TrainingStats::from_rows(x, &labels, 1)?, modes)
}

/// Symmetric whitening `(Cov + eps I)^(-1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZcaTransform {
    #[serde(with = "matrix_rows")]
    whitener: DMatrix<f64>,
    epsilon: f64,
}

impl ZcaTransform {
    pub fn from_covariance(covariance: &DMatrix<f64>, n: usize, epsilon: f64) -> Result<Self> {
        let dim = covariance.nrows();
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::param(format!(
                "ZCA epsilon must be >= 0, got {epsilon}"
            )));
        }
        if epsilon == 0.0 && n <= dim {
            return Err(Error::param(format!(
                "ZCA with epsilon = 0 needs more rows ({n}) than dimensions ({dim})"
            )));
        }
        let mut regularized = covariance.clone();
        for i in 0..dim {
            regularized[(i, i)] += epsilon;
        }
        let eig = symmetric_eigen_desc(&regularized);
        let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        let floor = top * RANK_TOLERANCE * dim as f64;
        let rank = eig.values.iter().filter(|&&v| v > floor && v > 0.0).count();
        if rank < dim {
            return Err(Error::IllConditioned { rank, dim });
        }
        let inv_sqrt = DVector::from_iterator(dim, eig.values.iter().map(|v| 1.0 / v.sqrt()));
        let mut whitener =
            &eig.vectors * DMatrix::from_diagonal(&inv_sqrt) * eig.vectors.transpose();
        linalg::symmetrize(&mut whitener);
        Ok(ZcaTransform { whitener, epsilon })
    }

    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Whitens each row of `x` (rows are not re-centered).
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.whitener
    }
}

/// Fits a ZCA whitener on the rows of `x`.
pub fn fit_zca(x: &DMatrix<f64>, epsilon: f64) -> Result<ZcaTransform> {
    let labels = vec![1; x.nrows()];
    let stats = TrainingStats::from_rows(x, &labels, 1)?;
    ZcaTransform::from_covariance(&stats.covariance(), stats.len(), epsilon)
}

/// Gaussian classes with a shared covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LdaParts", into = "LdaParts")]
pub struct LdaModel {
    parts: LdaParts,
    /// Row k holds `Sigma^-1 mu_k`.
    coefficients: DMatrix<f64>,
    /// `-1/2 mu_k^T Sigma^-1 mu_k + ln prior_k`.
    intercepts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LdaParts {
    means: Vec<Vec<f64>>,
    #[serde(with = "matrix_rows")]
    covariance: DMatrix<f64>,
    priors: Vec<f64>,
    ridge: f64,
}

impl TryFrom<LdaParts> for LdaModel {
    type Error = Error;

    fn try_from(parts: LdaParts) -> Result<Self> {
        let dim = parts.covariance.nrows();
        if parts.covariance.ncols() != dim || parts.means.iter().any(|m| m.len() != dim) {
            return Err(Error::Shape(
                "LDA means and covariance disagree in dimension".into(),
            ));
        }
        if parts.priors.len() != parts.means.len() {
            return Err(Error::Shape("one prior per class mean required".into()));
        }
        let chol = Cholesky::new(parts.covariance.clone()).ok_or_else(|| {
            let eig = symmetric_eigen_desc(&parts.covariance);
            Error::IllConditioned {
                rank: eig.values.iter().filter(|&&v| v > 0.0).count(),
                dim,
            }
        })?;
        let k = parts.means.len();
        let mut coefficients = DMatrix::zeros(k, dim);
        let mut intercepts = Vec::with_capacity(k);
        for (i, (mean, prior)) in parts.means.iter().zip(&parts.priors).enumerate() {
            let mu = DVector::from_column_slice(mean);
            let w = chol.solve(&mu);
            intercepts.push(-0.5 * mu.dot(&w) + prior.ln());
            coefficients.set_row(i, &w.transpose());
        }
        Ok(LdaModel {
            parts,
            coefficients,
            intercepts,
        })
    }
}

impl From<LdaModel> for LdaParts {
    fn from(model: LdaModel) -> Self {
        model.parts
    }
}

impl PartialEq for LdaModel {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts
    }
}

impl LdaModel {
    /// Pooled-covariance model from class moments. `ridge = None` adds
    /// `1e-6 * trace(Sigma) / dim`.
    pub fn from_moments(
        class_means: &[DVector<f64>],
        class_counts: &[usize],
        within_scatter: &DMatrix<f64>,
        ridge: Option<f64>,
    ) -> Result<Self> {
        let missing: Vec<usize> = class_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(k, _)| k + 1)
            .collect();
        if !missing.is_empty() {
            return Err(Error::InsufficientData(format!(
                "classes absent from training data: {missing:?}"
            )));
        }
        let thin: Vec<usize> = class_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < 2)
            .map(|(k, _)| k + 1)
            .collect();
        if !thin.is_empty() {
            return Err(Error::InsufficientData(format!(
                "classes with fewer than 2 samples: {thin:?}"
            )));
        }
        let n: usize = class_counts.iter().sum();
        let k = class_counts.len();
        if n <= k {
            return Err(Error::InsufficientData(format!(
                "n - K must be >= 1 (n = {n}, K = {k})"
            )));
        }
        let dim = within_scatter.nrows();
        let mut covariance = within_scatter / (n - k) as f64;
        let ridge = match ridge {
            Some(r) if r >= 0.0 && r.is_finite() => r,
            Some(r) => return Err(Error::param(format!("ridge must be >= 0, got {r}"))),
            None => 1e-6 * covariance.trace() / dim.max(1) as f64,
        };
        for i in 0..dim {
            covariance[(i, i)] += ridge;
        }
        linalg::symmetrize(&mut covariance);
        let parts = LdaParts {
            means: class_means.iter().map(|m| m.as_slice().to_vec()).collect(),
            covariance,
            priors: class_counts.iter().map(|&c| c as f64 / n as f64).collect(),
            ridge,
        };
        LdaModel::try_from(parts)
    }

    pub fn num_classes(&self) -> usize {
        self.parts.means.len()
    }

    pub fn dim(&self) -> usize {
        self.parts.covariance.nrows()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.parts.means
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.parts.covariance
    }

    pub fn priors(&self) -> &[f64] {
        &self.parts.priors
    }

    pub fn ridge(&self) -> f64 {
        self.parts.ridge
    }

    /// Linear discriminant scores `mu_k^T S^-1 z - 1/2 mu_k^T S^-1 mu_k + ln prior_k`.
    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        let lin = &self.coefficients * z;
        lin.iter()
            .zip(&self.intercepts)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Highest-scoring class (1-based); ties go to the lowest index.
    pub fn classify(&self, z: &[f64]) -> Prediction {
        let scores = self.scores(z);
        Prediction {
            class: argmax(&scores) + 1,
            scores,
        }
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fits LDA on rows `z` with 1-based `labels`.
pub fn fit_lda(
    z: &DMatrix<f64>,
    labels: &[usize],
    num_classes: usize,
    ridge: Option<f64>,
) -> Result<LdaModel> {
    let stats = TrainingStats::from_rows(z, labels, num_classes)?;
    LdaModel::from_moments(
        stats.class_means(),
        stats.class_counts(),
        stats.within_scatter(),
        ridge,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// 1-based class index.
    pub class: usize,
    pub scores: Vec<f64>,
}

/// Dimensionality reduction and classifier settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderSettings {
    /// Retained principal modes `P`.
    pub modes: usize,
    /// Run PCA + ZCA before LDA.
    pub whiten: bool,
    pub zca_epsilon: f64,
    /// Fixed pooled-covariance ridge; `None` picks `1e-6 * trace / P`.
    pub ridge: Option<f64>,
}

/// Settings a model was fitted under; checked again at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub features: FeatureSpec,
    pub num_channels: usize,
    pub feature_dim: usize,
    pub modes: usize,
    pub whiten: bool,
}

/// Fitted PCA -> ZCA -> LDA chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct DecoderModel {
    fingerprint: Fingerprint,
    pca: Option<PcaTransform>,
    zca: Option<ZcaTransform>,
    lda: LdaModel,
    /// Combined `feature_dim x P` map `basis * whitener` (identity without whitening).
    projection: Option<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    fingerprint: Fingerprint,
    pca: Option<PcaTransform>,
    zca: Option<ZcaTransform>,
    lda: LdaModel,
}

impl TryFrom<ModelDocument> for DecoderModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        DecoderModel::assemble(doc.fingerprint, doc.pca, doc.zca, doc.lda)
    }
}

impl From<DecoderModel> for ModelDocument {
    fn from(m: DecoderModel) -> Self {
        ModelDocument {
            fingerprint: m.fingerprint,
            pca: m.pca,
            zca: m.zca,
            lda: m.lda,
        }
    }
}

impl DecoderModel {
    fn assemble(
        fingerprint: Fingerprint,
        pca: Option<PcaTransform>,
        zca: Option<ZcaTransform>,
        lda: LdaModel,
    ) -> Result<Self> {
        let projection = match (&pca, &zca) {
            (Some(p), Some(z)) => {
                if p.modes() != z.whitener().nrows() || z.whitener().nrows() != lda.dim() {
                    return Err(Error::Shape(
                        "PCA, ZCA and LDA dimensions do not chain".into(),
                    ));
                }
                Some(p.basis() * z.whitener())
            }
            (None, None) => None,
            _ => {
                return Err(Error::Shape(
                    "PCA and ZCA must both be present or both absent".into(),
                ))
            }
        };
        let input = pca.as_ref().map_or(lda.dim(), PcaTransform::input_dim);
        if input != fingerprint.feature_dim {
            return Err(Error::Shape(format!(
                "model consumes {input} features, fingerprint says {}",
                fingerprint.feature_dim
            )));
        }
        Ok(DecoderModel {
            fingerprint,
            pca,
            zca,
            lda,
            projection,
        })
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn pca(&self) -> Option<&PcaTransform> {
        self.pca.as_ref()
    }

    pub fn zca(&self) -> Option<&ZcaTransform> {
        self.zca.as_ref()
    }

    pub fn lda(&self) -> &LdaModel {
        &self.lda
    }

    /// Maps raw features to the LDA input space.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.fingerprint.feature_dim {
            return Err(Error::Shape(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.fingerprint.feature_dim
            )));
        }
        match (&self.pca, &self.projection) {
            (Some(pca), Some(proj)) => {
                let centered =
                    DVector::from_iterator(x.len(), x.iter().zip(pca.mean()).map(|(v, m)| v - m));
                Ok((proj.tr_mul(&centered)).as_slice().to_vec())
            }
            _ => Ok(x.to_vec()),
        }
    }

    pub fn predict_values(&self, x: &[f64]) -> Result<Prediction> {
        Ok(self.lda.classify(&self.embed(x)?))
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.flavor() != self.fingerprint.features.flavor
            || x.num_channels() != self.fingerprint.num_channels
        {
            return Err(Error::Shape(format!(
                "feature vector ({}, {} channels) does not match model ({}, {} channels)",
                x.flavor().name(),
                x.num_channels(),
                self.fingerprint.features.flavor.name(),
                self.fingerprint.num_channels
            )));
        }
        self.predict_values(x.values())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Fits the whole chain from precomputed statistics.
pub fn fit_from_stats(
    stats: &TrainingStats,
    settings: &DecoderSettings,
    fingerprint: Fingerprint,
) -> Result<DecoderModel> {
    if stats.dim() != fingerprint.feature_dim {
        return Err(Error::Shape(format!(
            "statistics are {}-dimensional, fingerprint says {}",
            stats.dim(),
            fingerprint.feature_dim
        )));
    }
    if !settings.whiten {
        let lda = LdaModel::from_moments(
            stats.class_means(),
            stats.class_counts(),
            stats.within_scatter(),
            settings.ridge,
        )?;
        return DecoderModel::assemble(fingerprint, None, None, lda);
    }
    let pca = PcaTransform::from_stats(stats, settings.modes)?;
    let basis = pca.basis();
    let mut projected_cov = basis.tr_mul(&stats.covariance()) * basis;
    linalg::symmetrize(&mut projected_cov);
    let zca = ZcaTransform::from_covariance(&projected_cov, stats.len(), settings.zca_epsilon)?;
    let map = basis * zca.whitener();
    let means: Vec<DVector<f64>> = stats
        .class_means()
        .iter()
        .map(|m| map.tr_mul(&(m - stats.mean())))
        .collect();
    let mut within = map.tr_mul(stats.within_scatter()) * &map;
    linalg::symmetrize(&mut within);
    let lda = LdaModel::from_moments(&means, stats.class_counts(), &within, settings.ridge)?;
    DecoderModel::assemble(fingerprint, Some(pca), Some(zca), lda)
}

/// Fits the whole chain on feature rows `x`.
pub fn fit_decoder(
    x: &DMatrix<f64>,
    labels: &[usize],
    num_classes: usize,
    settings: &DecoderSettings,
    fingerprint: Fingerprint,
) -> Result<DecoderModel> {
    let stats = TrainingStats::from_rows(x, labels, num_classes)?;
    fit_from_stats(&stats, settings, fingerprint)
}

/// Predicts the class of a feature vector under a fitted model.
pub fn predict(model: &DecoderModel, x: &FeatureVector) -> Result<Prediction> {
    model.predict(x)
}
