//! EDC clustering, leave-one-out evaluation, parameter sweeps and summaries.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Grouping};
use crate::decoder::{fit_from_stats, Fingerprint, TrainingStats};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::FeatureExtractor;
use crate::synth::TrialRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcEntry {
    pub edc_id: String,
    pub depth: Vec<f64>,
    pub trial_ids: Vec<String>,
}

/// Electrode depth configurations and the trials recorded at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcTable {
    entries: Vec<EdcEntry>,
}

impl EdcTable {
    pub fn new(entries: Vec<EdcEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut trials = HashSet::new();
        for e in &entries {
            if !ids.insert(e.edc_id.as_str()) {
                return Err(Error::param(format!("duplicate EDC id {:?}", e.edc_id)));
            }
            for t in &e.trial_ids {
                if !trials.insert(t.as_str()) {
                    return Err(Error::param(format!(
                        "trial {t:?} belongs to more than one EDC"
                    )));
                }
            }
        }
        Ok(EdcTable { entries })
    }

    pub fn entries(&self) -> &[EdcEntry] {
        &self.entries
    }

    pub fn get(&self, edc_id: &str) -> Option<&EdcEntry> {
        self.entries.iter().find(|e| e.edc_id == edc_id)
    }

    pub fn total_trials(&self) -> usize {
        self.entries.iter().map(|e| e.trial_ids.len()).sum()
    }
}

/// Trials pooled around one anchor EDC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredDataset {
    pub anchor: String,
    /// Member trial ids in append order; the anchor's own trials come first.
    pub members: Vec<String>,
    /// EDCs appended, in order, with their distance to the anchor.
    pub edcs: Vec<(String, f64)>,
    pub window: usize,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Starts from the anchor's trials and appends whole EDCs in order of depth
/// distance (ties by smaller id) until at least `window` trials are pooled.
pub fn cluster_edcs(anchor: &str, table: &EdcTable, window: usize) -> Result<ClusteredDataset> {
    if window == 0 {
        return Err(Error::param("clustering window must be at least 1"));
    }
    let home = table
        .get(anchor)
        .ok_or_else(|| Error::Lookup(format!("unknown anchor EDC {anchor:?}")))?;
    let mut others: Vec<(&EdcEntry, f64)> = table
        .entries()
        .iter()
        .filter(|e| e.edc_id != anchor)
        .map(|e| (e, euclidean(&home.depth, &e.depth)))
        .collect();
    others.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0.edc_id.cmp(&b.0.edc_id))
    });

    let mut members = home.trial_ids.clone();
    let mut edcs = vec![(home.edc_id.clone(), 0.0)];
    for (entry, dist) in others {
        if members.len() >= window {
            break;
        }
        members.extend(entry.trial_ids.iter().cloned());
        edcs.push((entry.edc_id.clone(), dist));
    }
    Ok(ClusteredDataset {
        anchor: anchor.to_string(),
        members,
        edcs,
        window,
    })
}

/// Counts of (true class, decoded class); rows are truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Records one decision; classes are 1-based.
    pub fn record(&mut self, truth: usize, decoded: usize) {
        self.counts[truth - 1][decoded - 1] += 1;
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Row-normalized view; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Per-class recall; `None` for classes never seen.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s: u64 = row.iter().sum();
                (s > 0).then(|| row[i] as f64 / s as f64)
            })
            .collect()
    }
}

/// Outcome of a leave-one-out run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub evaluated: usize,
    /// Folds whose training split lost a class.
    pub skipped: usize,
    /// Decoded class per trial, `None` for skipped folds.
    pub predictions: Vec<Option<usize>>,
}

/// Features of every trial as matrix rows.
pub fn feature_matrix<T: Borrow<TrialRecord> + Sync>(
    trials: &[T],
    config: &ExperimentConfig,
) -> Result<DMatrix<f64>> {
    let extractor = FeatureExtractor::new(&config.feature_spec())?;
    let rows: Vec<Vec<f64>> = trials
        .par_iter()
        .map(|t| extractor.extract(t.borrow()).map(|f| f.values().to_vec()))
        .collect::<Result<_>>()?;
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("trials disagree in channel count".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

/// Leave-one-out cross-validation of the full feature -> PCA -> ZCA -> LDA
/// pipeline. Features do not depend on the training split, so they are
/// extracted once; every fold refits the decoder on the other trials.
pub fn loocv<T: Borrow<TrialRecord> + Sync>(
    trials: &[T],
    num_classes: usize,
    config: &ExperimentConfig,
) -> Result<LoocvReport> {
    let n = trials.len();
    let trial_len = trials.first().map(|t| t.borrow().len());
    config.validate(trial_len)?;
    let labels: Vec<usize> = trials.iter().map(|t| t.borrow().label()).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > num_classes) {
        return Err(Error::param(format!(
            "label {bad} outside 1..={num_classes}"
        )));
    }
    let missing: Vec<usize> = (1..=num_classes).filter(|k| !labels.contains(k)).collect();
    if !missing.is_empty() {
        return Err(Error::InsufficientData(format!(
            "classes absent from dataset: {missing:?}"
        )));
    }
    let x = feature_matrix(trials, config)?;
    let dim = x.ncols();
    if config.whiten {
        if config.modes > dim {
            return Err(Error::param(format!(
                "P = {} exceeds the feature dimension {dim}",
                config.modes
            )));
        }
        let need = num_classes + config.modes + 2;
        if n < need {
            return Err(Error::InsufficientData(format!(
                "LOOCV with K = {num_classes}, P = {} needs at least {need} trials, got {n}",
                config.modes
            )));
        }
    } else if n < num_classes + 2 {
        return Err(Error::InsufficientData(format!(
            "LOOCV needs at least {} trials",
            num_classes + 2
        )));
    }
    let num_channels = trials[0].borrow().num_channels();
    let fingerprint = Fingerprint {
        features: config.feature_spec(),
        num_channels,
        feature_dim: dim,
        modes: if config.whiten { config.modes } else { dim },
        whiten: config.whiten,
    };
    let settings = config.decoder_settings();
    let stats = TrainingStats::from_rows(&x, &labels, num_classes)?;

    let predictions: Vec<Option<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let label = labels[i];
            if stats.class_counts()[label - 1] < 3 {
                return Ok(None);
            }
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let fold = stats.without(&row, label)?;
            match fit_from_stats(&fold, &settings, fingerprint) {
                Ok(model) => Ok(Some(model.predict_values(&row)?.class)),
                Err(Error::InsufficientData(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut confusion = ConfusionMatrix::new(num_classes);
    for (truth, decoded) in labels.iter().zip(&predictions) {
        if let Some(d) = decoded {
            confusion.record(*truth, *d);
        }
    }
    let evaluated = confusion.total() as usize;
    Ok(LoocvReport {
        accuracy: confusion.accuracy(),
        confusion,
        evaluated,
        skipped: n - evaluated,
        predictions,
    })
}

/// One dataset entering a sweep.
#[derive(Debug, Clone)]
pub struct SweepDataset<'a> {
    pub anchor: String,
    pub trials: Vec<&'a TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub evaluated: usize,
    pub skipped: usize,
}

/// One `(config, dataset)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub config: ExperimentConfig,
    pub anchor: String,
    pub cell_seed: u64,
    /// Metrics, or the error that made the cell infeasible.
    pub outcome: std::result::Result<CellMetrics, String>,
    #[serde(skip)]
    pub runtime_secs: f64,
}

/// Runs [`loocv`] on every `(config, dataset)` pair, config-major, in index order.
pub fn sweep(
    grid: &[ExperimentConfig],
    datasets: &[SweepDataset<'_>],
    num_classes: usize,
) -> Result<Vec<SweepCell>> {
    if grid.is_empty() {
        return Err(Error::param("sweep grid is empty"));
    }
    if datasets.is_empty() {
        return Err(Error::param("sweep needs at least one dataset"));
    }
    let cells: Vec<(usize, &ExperimentConfig, &SweepDataset<'_>)> = grid
        .iter()
        .flat_map(|c| datasets.iter().map(move |d| (c, d)))
        .enumerate()
        .map(|(i, (c, d))| (i, c, d))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(index, config, data)| {
            let start = Instant::now();
            let outcome = loocv(&data.trials, num_classes, config)
                .map(|r| CellMetrics {
                    accuracy: r.accuracy,
                    per_class_accuracy: r.confusion.recalls(),
                    confusion: r.confusion,
                    evaluated: r.evaluated,
                    skipped: r.skipped,
                })
                .map_err(|e| e.to_string());
            SweepCell {
                index,
                config: config.clone(),
                anchor: data.anchor.clone(),
                cell_seed: rng::derive_seed(config.seed, index as u64),
                outcome,
                runtime_secs: start.elapsed().as_secs_f64(),
            }
        })
        .collect())
}

/// Mean per-class recall within each group.
pub fn directional_summary(
    confusion: &ConfusionMatrix,
    grouping: &Grouping,
) -> Result<BTreeMap<String, f64>> {
    let k = confusion.num_classes();
    let mut covered = vec![false; k];
    for (name, classes) in grouping {
        if classes.is_empty() {
            return Err(Error::param(format!("group {name:?} is empty")));
        }
        for &c in classes {
            if c == 0 || c > k {
                return Err(Error::param(format!(
                    "group {name:?} names class {c} outside 1..={k}"
                )));
            }
            covered[c - 1] = true;
        }
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::param(format!(
            "grouping does not cover class {}",
            i + 1
        )));
    }
    let recalls = confusion.recalls();
    let mut out = BTreeMap::new();
    for (name, classes) in grouping {
        let seen: Vec<f64> = classes.iter().filter_map(|&c| recalls[c - 1]).collect();
        if seen.is_empty() {
            return Err(Error::param(format!(
                "group {name:?} has no evaluated trials"
            )));
        }
        out.insert(name.clone(), seen.iter().sum::<f64>() / seen.len() as f64);
    }
    Ok(out)
}

/// `(complex - power) / power`.
pub fn relative_gain(acc_complex: f64, acc_power: f64) -> Result<f64> {
    if acc_power == 0.0 {
        return Err(Error::UndefinedGain);
    }
    if !(acc_power > 0.0) {
        return Err(Error::param(format!(
            "baseline accuracy must be positive, got {acc_power}"
        )));
    }
    Ok((acc_complex - acc_power) / acc_power)
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, depth: f64, n: usize) -> EdcEntry {
        EdcEntry {
            edc_id: id.into(),
            depth: vec![depth, 0.0],
            trial_ids: (0..n).map(|i| format!("{id}-{i}")).collect(),
        }
    }

    fn three_edcs() -> EdcTable {
        EdcTable::new(vec![
            entry("c", 2.0, 10),
            entry("a", 0.0, 10),
            entry("b", 1.0, 10),
        ])
        .unwrap()
    }

    #[test]
    fn window_already_full() {
        let c = cluster_edcs("a", &three_edcs(), 10).unwrap();
        assert_eq!(c.members.len(), 10);
        assert!(c.members.iter().all(|m| m.starts_with("a-")));
    }

    #[test]
    fn nearest_edc_appended_whole() {
        let c = cluster_edcs("a", &three_edcs(), 15).unwrap();
        assert_eq!(c.members.len(), 20);
        assert!(c.members[10..].iter().all(|m| m.starts_with("b-")));
        assert_eq!(c.edcs[1], ("b".to_string(), 1.0));
    }

    #[test]
    fn exhaustion_takes_everything() {
        let c = cluster_edcs("a", &three_edcs(), 1000).unwrap();
        assert_eq!(c.members.len(), 30);
    }

    #[test]
    fn distance_ties_break_by_id() {
        let t = EdcTable::new(vec![
            entry("a", 0.0, 2),
            entry("z", 1.0, 2),
            entry("m", -1.0, 2),
        ])
        .unwrap();
        let c = cluster_edcs("a", &t, 3).unwrap();
        assert_eq!(c.edcs[1].0, "m");
    }

    #[test]
    fn unknown_anchor() {
        assert!(matches!(
            cluster_edcs("q", &three_edcs(), 5),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn table_rejects_duplicates() {
        assert!(EdcTable::new(vec![entry("a", 0.0, 1), entry("a", 1.0, 1)]).is_err());
        let mut b = entry("b", 1.0, 1);
        b.trial_ids = vec!["a-0".into()];
        assert!(EdcTable::new(vec![entry("a", 0.0, 1), b]).is_err());
    }

    #[test]
    fn directional_diagonal_and_uniform() {
        let groups: Grouping =
            BTreeMap::from([("contra".into(), vec![1, 2]), ("ipsi".into(), vec![3, 4])]);
        let diag = ConfusionMatrix::from_counts(
            (0..4)
                .map(|i| (0..4).map(|j| u64::from(i == j) * 5).collect())
                .collect(),
        )
        .unwrap();
        let s = directional_summary(&diag, &groups).unwrap();
        assert_eq!(s["contra"], 1.0);
        assert_eq!(s["ipsi"], 1.0);
        let uni = ConfusionMatrix::from_counts(vec![vec![3; 4]; 4]).unwrap();
        let s = directional_summary(&uni, &groups).unwrap();
        assert_eq!(s["contra"], 0.25);
        assert_eq!(s["ipsi"], 0.25);
    }

    #[test]
    fn directional_errors() {
        let cm = ConfusionMatrix::new(3);
        let empty: Grouping = BTreeMap::from([("a".into(), vec![1, 2, 3]), ("b".into(), vec![])]);
        assert!(directional_summary(&cm, &empty).is_err());
        let partial: Grouping = BTreeMap::from([("a".into(), vec![1, 2])]);
        assert!(directional_summary(&cm, &partial).is_err());
    }

    #[test]
    fn gain_values() {
        assert_eq!(relative_gain(0.94, 0.47).unwrap(), 1.0);
        assert_eq!(relative_gain(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(relative_gain(0.5, 0.0), Err(Error::UndefinedGain)));
    }

    #[test]
    fn confusion_accounting() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(1, 1);
        cm.record(1, 2);
        cm.record(2, 2);
        assert_eq!(cm.total(), 3);
        assert!((cm.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.normalized()[0], vec![0.5, 0.5]);
        assert_eq!(cm.recalls(), vec![Some(0.5), Some(1.0)]);
    }
}
