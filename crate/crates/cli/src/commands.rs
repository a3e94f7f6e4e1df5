use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lfpdecode_core::dataset::{self, Dataset, SampleEncoding};
use lfpdecode_core::harness::{CellMetrics, SweepDataset};
use lfpdecode_core::synth::{generate_dataset, BankParams, DatasetParams};
use lfpdecode_core::{
    cluster_edcs, directional_summary, loocv, noise_diagnostic, relative_gain, sweep as run_sweep,
    EdcTable, ExperimentConfig, FeatureFlavor,
};
use serde::{Deserialize, Serialize};

use crate::output::{
    num, prepare_out_dir, read_json, unix_now, CliError, CliResult, OutputSet, RunManifest,
    RUN_MANIFEST,
};
use crate::{EvaluateArgs, GenerateArgs, InspectArgs, PlotDataArgs, RunFlags, SweepArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Generator settings accepted by `generate --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenerateConfig {
    num_classes: usize,
    num_channels: usize,
    frequencies: usize,
    smoothness: f64,
    radius: f64,
    separation: f64,
    jitter: f64,
    noise_sd: f64,
    trial_len: usize,
    num_trials: usize,
    num_edcs: usize,
    heterogeneity: f64,
    base_depth_mm: f64,
    depth_step_mm: f64,
    depth_jitter_mm: f64,
    seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            num_classes: 8,
            num_channels: 32,
            frequencies: 4,
            smoothness: 1.0,
            radius: 1.0,
            separation: 0.0,
            jitter: 0.0,
            noise_sd: 1.0,
            trial_len: 650,
            num_trials: 827,
            num_edcs: 1,
            heterogeneity: 0.0,
            base_depth_mm: 1.0,
            depth_step_mm: 0.25,
            depth_jitter_mm: 0.1,
            seed: 0,
        }
    }
}

impl GenerateConfig {
    fn params(&self) -> DatasetParams {
        DatasetParams {
            bank: BankParams {
                num_classes: self.num_classes,
                num_channels: self.num_channels,
                frequencies: self.frequencies,
                smoothness: self.smoothness,
                radius: self.radius,
                separation: self.separation,
                jitter: self.jitter,
            },
            noise_sd: self.noise_sd,
            trial_len: self.trial_len,
            num_trials: self.num_trials,
            num_edcs: self.num_edcs,
            heterogeneity: self.heterogeneity,
            base_depth_mm: self.base_depth_mm,
            depth_step_mm: self.depth_step_mm,
            depth_jitter_mm: self.depth_jitter_mm,
        }
    }
}

pub fn generate(args: GenerateArgs) -> CliResult {
    let mut cfg: GenerateConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => GenerateConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.trials {
        cfg.num_trials = n;
    }
    if let Some(n) = args.edcs {
        cfg.num_edcs = n;
    }
    let params = cfg.params();
    params.validate()?;
    if args.out.exists()
        && !args.force
        && std::fs::read_dir(&args.out)
            .map(|mut d| d.next().is_some())
            .unwrap_or(false)
    {
        return Err(lfpdecode_core::Error::DirectoryNotEmpty(args.out.clone()).into());
    }
    let encoding = if args.text {
        SampleEncoding::Csv
    } else {
        SampleEncoding::F64Le
    };
    let data = generate_dataset(&params, cfg.seed)?;
    let ds = Dataset::from_synthetic(data, &params, cfg.seed, encoding);
    ds.write(&args.out, args.force)?;
    println!(
        "wrote {} trials over {} EDCs to {} (sha256 {})",
        ds.trials.len(),
        ds.manifest.edcs.len(),
        args.out.display(),
        dataset::checksum(&args.out)?
    );
    Ok(())
}

struct PreparedRun {
    config: ExperimentConfig,
    dataset_path: PathBuf,
    dataset: Dataset,
    checksum: String,
    table: EdcTable,
}

fn load_config(flags: &RunFlags) -> CliResult<ExperimentConfig> {
    let mut config = match &flags.config {
        Some(p) => read_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &flags.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(s) = flags.seed {
        config.seed = s;
    }
    if flags.log_power {
        config.log_power = true;
    }
    if flags.no_whiten {
        config.whiten = false;
    }
    Ok(config)
}

fn prepare(config: ExperimentConfig, expected_checksum: Option<&str>) -> CliResult<PreparedRun> {
    let dataset_path = config.dataset.clone().ok_or_else(|| {
        CliError::usage("no dataset given (use --dataset or set `dataset` in the config)")
    })?;
    if !dataset_path.join(dataset::MANIFEST_FILE).exists() {
        return Err(CliError::usage(format!(
            "{} is not a dataset directory",
            dataset_path.display()
        )));
    }
    if let Some(expected) = expected_checksum {
        dataset::verify_checksum(&dataset_path, expected)?;
    }
    let checksum = dataset::checksum(&dataset_path)?;
    let dataset = Dataset::read(&dataset_path)?;
    config.validate(Some(dataset.manifest.trial_len))?;
    let table = dataset.edc_table()?;
    if let Some(anchor) = &config.anchor {
        if table.get(anchor).is_none() {
            return Err(
                lfpdecode_core::Error::Lookup(format!("unknown anchor EDC {anchor:?}")).into(),
            );
        }
    }
    Ok(PreparedRun {
        config,
        dataset_path,
        dataset,
        checksum,
        table,
    })
}

fn anchors(run: &PreparedRun, requested: Option<&[String]>) -> Vec<String> {
    match (requested, &run.config.anchor) {
        (Some(list), _) => list.to_vec(),
        (None, Some(a)) => vec![a.clone()],
        (None, None) => run
            .table
            .entries()
            .iter()
            .map(|e| e.edc_id.clone())
            .collect(),
    }
}

/// RMS electrode depth of an EDC, in millimeters per electrode.
fn edc_distance(table: &EdcTable, edc: &str) -> f64 {
    table.get(edc).map_or(f64::NAN, |e| {
        (e.depth.iter().map(|d| d * d).sum::<f64>() / e.depth.len().max(1) as f64).sqrt()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnchorResult {
    anchor: String,
    edc_distance_mm: f64,
    cluster_edcs: Vec<(String, f64)>,
    num_trials: usize,
    accuracy: f64,
    evaluated: usize,
    skipped: usize,
    confusion: Vec<Vec<u64>>,
    normalized_confusion: Vec<Vec<f64>>,
    per_class_accuracy: Vec<Option<f64>>,
    directional: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvaluateSummary {
    tool_version: String,
    dataset_checksum: String,
    config: ExperimentConfig,
    results: Vec<AnchorResult>,
}

pub fn evaluate(args: EvaluateArgs) -> CliResult {
    let started = unix_now();
    let (config, expected) = match &args.manifest {
        Some(p) => {
            let m: RunManifest = read_json(p)?;
            let mut config = m.config;
            config.dataset = Some(m.dataset_path);
            (config, Some(m.dataset_checksum))
        }
        None => (load_config(&args.run)?, None),
    };
    let run = prepare(config, expected.as_deref())?;
    let k = run.dataset.num_classes();

    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for anchor in anchors(&run, None) {
        let cluster = cluster_edcs(&anchor, &run.table, run.config.cluster_window)?;
        let trials = run.dataset.select(&cluster.members)?;
        let report = loocv(&trials, k, &run.config)?;
        let directional = run
            .config
            .grouping
            .as_ref()
            .map(|g| directional_summary(&report.confusion, g))
            .transpose()?;
        for (t, p) in trials.iter().zip(&report.predictions) {
            predictions.push(vec![
                anchor.clone(),
                t.trial_id().to_string(),
                t.label().to_string(),
                p.map_or_else(String::new, |c| c.to_string()),
            ]);
        }
        results.push(AnchorResult {
            edc_distance_mm: edc_distance(&run.table, &anchor),
            anchor,
            cluster_edcs: cluster.edcs,
            num_trials: trials.len(),
            accuracy: report.accuracy,
            evaluated: report.evaluated,
            skipped: report.skipped,
            normalized_confusion: report.confusion.normalized(),
            per_class_accuracy: report.confusion.recalls(),
            confusion: report.confusion.counts().to_vec(),
            directional,
        });
    }

    prepare_out_dir(&args.run.out, args.run.force)?;
    let mut out = OutputSet::new(&args.run.out);
    let groups: Vec<String> = run
        .config
        .grouping
        .iter()
        .flat_map(|g| g.keys().cloned())
        .collect();
    let mut header = vec![
        "anchor",
        "edc_distance_mm",
        "num_trials",
        "evaluated",
        "skipped",
        "accuracy",
    ];
    header.extend(groups.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![
                r.anchor.clone(),
                num(r.edc_distance_mm),
                r.num_trials.to_string(),
                r.evaluated.to_string(),
                r.skipped.to_string(),
                num(r.accuracy),
            ];
            row.extend(
                groups
                    .iter()
                    .map(|g| r.directional.as_ref().map_or(String::new(), |d| num(d[g]))),
            );
            row
        })
        .collect();
    out.write_csv("accuracy.csv", &header, &rows)?;
    let mut confusion_rows = Vec::new();
    for r in &results {
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                confusion_rows.push(vec![
                    r.anchor.clone(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    c.to_string(),
                ]);
            }
        }
    }
    out.write_csv(
        "confusion.csv",
        &["anchor", "true_class", "decoded_class", "count"],
        &confusion_rows,
    )?;
    out.write_csv(
        "predictions.csv",
        &["anchor", "trial_id", "label", "decoded"],
        &predictions,
    )?;
    out.write_json(
        "summary.json",
        &EvaluateSummary {
            tool_version: VERSION.to_string(),
            dataset_checksum: run.checksum.clone(),
            config: run.config.clone(),
            results,
        },
    )?;
    finish_run(out, "evaluate", &run, started, serde_json::Value::Null)
}

fn finish_run(
    out: OutputSet,
    command: &str,
    run: &PreparedRun,
    started: u64,
    extra: serde_json::Value,
) -> CliResult {
    let dir = out.dir().to_path_buf();
    let outputs = out.finish()?;
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: VERSION.to_string(),
        config: run.config.clone(),
        dataset_path: run.dataset_path.clone(),
        dataset_checksum: run.checksum.clone(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
        extra,
    };
    let path = dir.join(RUN_MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    println!("{command}: results in {}", dir.display());
    Ok(())
}

/// Cartesian grid over the base configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub window_len: Option<Vec<usize>>,
    pub delay: Option<Vec<usize>>,
    pub frequencies: Option<Vec<usize>>,
    pub modes: Option<Vec<usize>>,
    /// P used for power-spectrum cells instead of `modes`.
    pub power_modes: Option<usize>,
    pub flavor: Option<Vec<FeatureFlavor>>,
    pub anchors: Option<Vec<String>>,
}

impl GridSpec {
    fn preset(name: &str) -> CliResult<GridSpec> {
        match name {
            "window" => Ok(GridSpec {
                window_len: Some((1..=10).map(|i| i * 100).collect()),
                delay: Some(vec![0]),
                ..Default::default()
            }),
            "delay" => Ok(GridSpec {
                window_len: Some(vec![200]),
                delay: Some((0..=8).map(|i| i * 100).collect()),
                ..Default::default()
            }),
            other => Err(CliError::usage(format!(
                "unknown preset {other:?} (expected window or delay)"
            ))),
        }
    }

    fn expand(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let flavors = self.flavor.clone().unwrap_or_else(|| vec![base.flavor]);
        let windows = self
            .window_len
            .clone()
            .unwrap_or_else(|| vec![base.window_len]);
        let delays = self.delay.clone().unwrap_or_else(|| vec![base.delay]);
        let freqs = self
            .frequencies
            .clone()
            .unwrap_or_else(|| vec![base.frequencies]);
        let modes = self.modes.clone().unwrap_or_else(|| vec![base.modes]);
        let mut grid = Vec::new();
        for &flavor in &flavors {
            for &window_len in &windows {
                for &delay in &delays {
                    for &frequencies in &freqs {
                        for &m in &modes {
                            let modes = match (flavor, self.power_modes) {
                                (FeatureFlavor::PowerSpectrum, Some(p)) => p,
                                _ => m,
                            };
                            grid.push(ExperimentConfig {
                                flavor,
                                window_len,
                                delay,
                                frequencies,
                                modes,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        grid
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnchorInfo {
    anchor: String,
    edc_distance_mm: f64,
    num_trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepRow {
    index: usize,
    anchor: String,
    flavor: FeatureFlavor,
    window_len: usize,
    delay: usize,
    frequencies: usize,
    modes: usize,
    cell_seed: u64,
    metrics: Option<CellMetrics>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GainRow {
    anchor: String,
    window_len: usize,
    delay: usize,
    frequencies: usize,
    complex_accuracy: f64,
    power_accuracy: f64,
    relative_gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepSummary {
    tool_version: String,
    dataset_checksum: String,
    base_config: ExperimentConfig,
    anchors: Vec<AnchorInfo>,
    cells: Vec<SweepRow>,
    relative_gains: Vec<GainRow>,
}

fn relative_gains(rows: &[SweepRow]) -> Vec<GainRow> {
    let acc = |r: &SweepRow| r.metrics.as_ref().map(|m| m.accuracy);
    let mut out = Vec::new();
    for c in rows
        .iter()
        .filter(|r| r.flavor == FeatureFlavor::ComplexSpectrum)
    {
        let twin = rows.iter().find(|p| {
            p.flavor == FeatureFlavor::PowerSpectrum
                && p.anchor == c.anchor
                && p.window_len == c.window_len
                && p.delay == c.delay
                && p.frequencies == c.frequencies
        });
        if let (Some(ac), Some(ap)) = (acc(c), twin.and_then(acc)) {
            out.push(GainRow {
                anchor: c.anchor.clone(),
                window_len: c.window_len,
                delay: c.delay,
                frequencies: c.frequencies,
                complex_accuracy: ac,
                power_accuracy: ap,
                relative_gain: relative_gain(ac, ap).ok(),
            });
        }
    }
    out
}

pub fn sweep(args: SweepArgs) -> CliResult {
    let started = unix_now();
    let grid_spec = match (&args.grid, &args.preset) {
        (Some(p), None) => read_json::<GridSpec>(p)?,
        (None, Some(name)) => GridSpec::preset(name)?,
        (Some(_), Some(_)) => {
            return Err(CliError::usage("give either --grid or --preset, not both"))
        }
        (None, None) => return Err(CliError::usage("sweep needs --grid or --preset")),
    };
    let base = load_config(&args.run)?;
    let grid = grid_spec.expand(&base);
    if grid.is_empty() {
        return Err(CliError::usage("sweep grid is empty"));
    }
    let mut base_for_prepare = base.clone();
    // grid cells may use longer windows than the base config
    base_for_prepare.window_len = 3;
    base_for_prepare.frequencies = 1;
    base_for_prepare.delay = 0;
    let mut run = prepare(base_for_prepare, None)?;
    run.config = base.clone();
    let k = run.dataset.num_classes();

    let anchor_ids = anchors(&run, grid_spec.anchors.as_deref());
    let mut datasets = Vec::new();
    let mut infos = Vec::new();
    for anchor in &anchor_ids {
        let cluster = cluster_edcs(anchor, &run.table, base.cluster_window)?;
        let trials = run.dataset.select(&cluster.members)?;
        infos.push(AnchorInfo {
            anchor: anchor.clone(),
            edc_distance_mm: edc_distance(&run.table, anchor),
            num_trials: trials.len(),
        });
        datasets.push(SweepDataset {
            anchor: anchor.clone(),
            trials,
        });
    }
    let cells = run_sweep(&grid, &datasets, k)?;
    let runtimes: Vec<f64> = cells.iter().map(|c| c.runtime_secs).collect();
    let rows: Vec<SweepRow> = cells
        .into_iter()
        .map(|c| {
            let (metrics, error) = match c.outcome {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e)),
            };
            SweepRow {
                index: c.index,
                anchor: c.anchor,
                flavor: c.config.flavor,
                window_len: c.config.window_len,
                delay: c.config.delay,
                frequencies: c.config.frequencies,
                modes: c.config.modes,
                cell_seed: c.cell_seed,
                metrics,
                error,
            }
        })
        .collect();
    let summary = SweepSummary {
        tool_version: VERSION.to_string(),
        dataset_checksum: run.checksum.clone(),
        base_config: base,
        anchors: infos,
        relative_gains: relative_gains(&rows),
        cells: rows,
    };

    prepare_out_dir(&args.run.out, args.run.force)?;
    let mut out = OutputSet::new(&args.run.out);
    let csv_rows: Vec<Vec<String>> = summary
        .cells
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.anchor.clone(),
                r.flavor.name().to_string(),
                r.window_len.to_string(),
                r.delay.to_string(),
                r.frequencies.to_string(),
                r.modes.to_string(),
                if r.metrics.is_some() {
                    "ok".into()
                } else {
                    "failed".into()
                },
                r.metrics
                    .as_ref()
                    .map_or(String::new(), |m| num(m.accuracy)),
                r.metrics
                    .as_ref()
                    .map_or(String::new(), |m| m.evaluated.to_string()),
                r.metrics
                    .as_ref()
                    .map_or(String::new(), |m| m.skipped.to_string()),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.write_csv(
        "sweep.csv",
        &[
            "index",
            "anchor",
            "flavor",
            "window_len",
            "delay",
            "frequencies",
            "modes",
            "status",
            "accuracy",
            "evaluated",
            "skipped",
            "error",
        ],
        &csv_rows,
    )?;
    out.write_json("sweep.json", &summary)?;
    out.write_csv("plot_data.csv", PLOT_HEADER, &plot_rows(&summary))?;
    let extra = serde_json::json!({ "cell_runtime_secs": runtimes });
    finish_run(out, "sweep", &run, started, extra)
}

const PLOT_HEADER: &[&str] = &[
    "figure",
    "x_name",
    "x",
    "accuracy",
    "anchor",
    "flavor",
    "window_len",
    "delay",
    "frequencies",
    "modes",
];

fn plot_rows(summary: &SweepSummary) -> Vec<Vec<String>> {
    let distance: BTreeMap<&str, f64> = summary
        .anchors
        .iter()
        .map(|a| (a.anchor.as_str(), a.edc_distance_mm))
        .collect();
    let mut rows = Vec::new();
    for r in &summary.cells {
        let Some(m) = &r.metrics else { continue };
        let tail = [
            r.anchor.clone(),
            r.flavor.name().to_string(),
            r.window_len.to_string(),
            r.delay.to_string(),
            r.frequencies.to_string(),
            r.modes.to_string(),
        ];
        let views = [
            (
                "accuracy_vs_edc_distance",
                "edc_distance_mm",
                num(distance.get(r.anchor.as_str()).copied().unwrap_or(f64::NAN)),
            ),
            (
                "accuracy_vs_window",
                "window_len_ms",
                r.window_len.to_string(),
            ),
            ("accuracy_vs_delay", "delay_ms", r.delay.to_string()),
        ];
        for (figure, x_name, x) in views {
            let mut row = vec![figure.to_string(), x_name.to_string(), x, num(m.accuracy)];
            row.extend(tail.iter().cloned());
            rows.push(row);
        }
    }
    rows
}

pub fn plot_data(args: PlotDataArgs) -> CliResult {
    let summary: SweepSummary = read_json(&args.sweep)?;
    let mut w = csv::Writer::from_path(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    w.write_record(PLOT_HEADER)?;
    for row in plot_rows(&summary) {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    println!("plot-data: wrote {}", args.out.display());
    Ok(())
}

pub fn inspect(args: InspectArgs) -> CliResult {
    let path: &Path = &args.dataset;
    if !path.join(dataset::MANIFEST_FILE).exists() {
        return Err(CliError::usage(format!(
            "{} is not a dataset directory",
            path.display()
        )));
    }
    let checksum = dataset::checksum(path)?;
    let ds = Dataset::read(path)?;
    let table = ds.edc_table()?;
    let edc = match &args.edc {
        Some(e) => table
            .get(e)
            .ok_or_else(|| lfpdecode_core::Error::Lookup(format!("unknown EDC {e:?}")))?,
        None => table
            .entries()
            .first()
            .ok_or_else(|| CliError::new(1, "format", "dataset has no EDCs"))?,
    };
    let trials = ds.select(&edc.trial_ids)?;
    let owned: Vec<_> = trials.into_iter().cloned().collect();
    let diag = noise_diagnostic(&owned, args.channel, args.frequencies)?;
    let report = serde_json::json!({
        "format": ds.manifest.format,
        "num_classes": ds.manifest.num_classes,
        "num_channels": ds.manifest.num_channels,
        "trial_len": ds.manifest.trial_len,
        "sample_rate_hz": ds.manifest.sample_rate_hz,
        "num_trials": ds.trials.len(),
        "num_edcs": ds.manifest.edcs.len(),
        "seed": ds.manifest.seed,
        "rng_algorithm": ds.manifest.rng_algorithm,
        "checksum": checksum,
        "noise_diagnostic": {
            "edc": edc.edc_id,
            "channel": args.channel,
            "frequencies": args.frequencies,
            "window_len": diag.window_len,
            "trials": owned.len(),
            "diagonal_dominance": diag.diagonal_dominance,
        },
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
