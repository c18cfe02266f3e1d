//! Repeated cross-validation of every configured method.
//!
//! Each (repeat, fold) cell is an independent job keyed by seeds derived
//! from the top-level `seed`; `seed` fields nested under `training` and
//! `selection.rl` are replaced per cell. Cells run on a rayon pool and the
//! report is assembled afterwards in cell order, so the worker count never
//! changes the output.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, SplitScheme};
use crate::data::{self, generate_synthetic, ChannelScaler, Dataset, Fold, WindowedDataset};
use crate::ensemble::{bits_to_string, sample_masks, train_ensemble, SensorMask};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport, FoldResult, REPORT_FORMAT, REPORT_VERSION};
use crate::nn::{self, Classifier, ModelConfig};
use crate::selection::{all_select, rl_select_table, topk_select_table, SearchTrace, VoteTable};
use crate::seed;

pub const MANIFEST_FILE: &str = "MANIFEST";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// Written next to the report; `complete` is false when any cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: u32,
    pub config_fingerprint: String,
    pub created_at: String,
    pub complete: bool,
    pub cells_total: usize,
    pub cells_completed: usize,
    pub errors: Vec<String>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn trace_file_name(repeat: usize, fold: usize) -> String {
    format!("trace-r{repeat}-f{fold}.json")
}

/// Loads the CSV or generates the synthetic dataset named by the config.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match (&cfg.data.csv, &cfg.data.synthetic) {
        (Some(path), _) => data::load_csv(path),
        (None, Some(spec)) => generate_synthetic(spec, cfg.data.synthetic_seed),
        (None, None) => Err(Error::Config("data: set one of `csv` or `synthetic`".into())),
    }
}

/// Writes the configured synthetic dataset as CSV.
pub fn generate(cfg: &ExperimentConfig, out: impl AsRef<Path>) -> Result<Dataset> {
    let spec = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("data.synthetic: generate needs a synthetic spec".into()))?;
    let d = generate_synthetic(spec, cfg.data.synthetic_seed)?;
    if let Some(dir) = out.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    data::write_csv(&d, out)?;
    Ok(d)
}

fn repeat_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    seed::derive(cfg.seed, &[repeat as u64])
}

fn split_plan(cfg: &ExperimentConfig, wd: &WindowedDataset, repeat: usize) -> Result<Vec<Fold>> {
    let s = seed::derive(repeat_seed(cfg, repeat), &[0]);
    let plan = match cfg.split.scheme {
        SplitScheme::Loso => data::loso_splits(wd, cfg.split.val_fraction, s)?,
        SplitScheme::Kfold => data::kfold_splits(wd, cfg.split.k, cfg.split.val_fraction, s)?,
    };
    Ok(plan.folds)
}

struct CellOutput {
    results: Vec<FoldResult>,
    trace: Option<SearchTrace>,
}

fn run_cell(cfg: &ExperimentConfig, wd: &WindowedDataset, repeat: usize, fold_idx: usize, fold: &Fold) -> Result<CellOutput> {
    let cell_seed = seed::derive(repeat_seed(cfg, repeat), &[1, fold_idx as u64]);
    let model_seed = seed::derive(cell_seed, &[0]);

    let (mut train, mut val, mut test) = (wd.select(&fold.train), wd.select(&fold.validation), wd.select(&fold.test));
    if cfg.windowing.normalize {
        let scaler = ChannelScaler::fit(&train)?;
        train = scaler.transform(&train)?;
        val = scaler.transform(&val)?;
        test = scaler.transform(&test)?;
    }
    let template = ModelConfig::new(cfg.model.clone(), wd.num_channels(), wd.width(), wd.num_classes());
    let truth = test.labels();
    let c = wd.num_classes();
    let methods = cfg.methods();
    let mut results = Vec::new();
    let mut trace = None;
    let score = |method: Method, predicted: &[usize], selection: Option<&[bool]>| -> Result<FoldResult> {
        let cm = metrics::confusion(&truth, predicted, c)?;
        Ok(FoldResult {
            repeat,
            fold: fold_idx,
            test_subject: fold.test_subject,
            method: method.name().to_string(),
            macro_f1: metrics::macro_f1(&cm),
            accuracy: metrics::accuracy(&cm),
            n_test: truth.len(),
            confusion: cm,
            selection: selection.map(bits_to_string),
        })
    };

    if methods.contains(&Method::Base) {
        let model = Classifier::init(template.clone(), model_seed)?;
        let model = nn::train(model, &train, &val, &cfg.training.with_seed(model_seed))?;
        let pred = model.predict_batch(&test)?;
        results.push(score(Method::Base, &pred, None)?);
    }

    if methods.iter().any(|m| m.needs_ensemble()) {
        let masks: Vec<SensorMask> =
            sample_masks(wd.num_channels(), cfg.ensemble.k, cfg.ensemble.p, seed::derive(cell_seed, &[1]))?;
        let ensemble = train_ensemble(&train, &val, &masks, &template, &cfg.training, model_seed)?;
        let val_table = VoteTable::from_ensemble(&ensemble, &val)?;
        let test_table = VoteTable::from_ensemble(&ensemble, &test)?;
        for &method in methods.iter().filter(|m| m.needs_ensemble()) {
            let bits = match method {
                Method::Topk => topk_select_table(&val_table, cfg.selection.k_top)?,
                Method::All => all_select(&ensemble),
                Method::Rl => {
                    let mut rc = cfg.selection.rl.clone();
                    rc.seed = seed::derive(cell_seed, &[2]);
                    let outcome = rl_select_table(&val_table, &rc)?;
                    trace = Some(outcome.trace);
                    outcome.bits
                }
                Method::Base => unreachable!("filtered above"),
            };
            let pred = test_table.votes(&bits)?;
            results.push(score(method, &pred, Some(&bits))?);
        }
    }
    Ok(CellOutput { results, trace })
}

/// Runs every (repeat, fold) cell and writes `report.json`, `metrics.csv`,
/// one search trace per cell and a `MANIFEST` into `out_dir`.
///
/// A failing cell does not stop the others: whatever finished is written,
/// the manifest is marked incomplete and the first error is returned.
/// `jobs` caps the worker count (default: all cores).
pub fn run(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>, jobs: Option<usize>) -> Result<EvalReport> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let created_at = chrono::Utc::now().to_rfc3339();
    let fingerprint = cfg.fingerprint();

    let dataset = load_data(cfg)?;
    let wd = data::slide_windows(&dataset, cfg.windowing.width, cfg.windowing.stride)?;
    info!(
        "{} windows of {}x{}, {} classes",
        wd.len(),
        wd.num_channels(),
        wd.width(),
        wd.num_classes()
    );

    let plans = (0..cfg.repeats).map(|r| split_plan(cfg, &wd, r)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize, &Fold)> = plans
        .iter()
        .enumerate()
        .flat_map(|(r, folds)| folds.iter().enumerate().map(move |(f, fold)| (r, f, fold)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    let outputs: Vec<Result<CellOutput>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(r, f, fold)| {
                let out = run_cell(cfg, &wd, r, f, fold).map_err(|e| Error::Cell {
                    repeat: r,
                    fold: f,
                    source: Box::new(e),
                });
                match &out {
                    Ok(_) => info!("repeat {r} fold {f} done"),
                    Err(e) => warn!("{e}"),
                }
                out
            })
            .collect()
    });

    let mut folds = Vec::new();
    let mut errors = Vec::new();
    let mut files = vec![REPORT_FILE.to_string(), METRICS_FILE.to_string()];
    for (&(r, f, _), out) in cells.iter().zip(outputs) {
        match out {
            Ok(cell) => {
                folds.extend(cell.results);
                if let Some(trace) = cell.trace {
                    let name = trace_file_name(r, f);
                    fs::write(out_dir.join(&name), serde_json::to_string_pretty(&trace)? + "\n")?;
                    files.push(name);
                }
            }
            Err(e) => errors.push(e),
        }
    }

    let complete = errors.is_empty();
    let report = EvalReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        created_at: created_at.clone(),
        config_fingerprint: fingerprint.clone(),
        config: serde_json::to_value(cfg)?,
        seeds: (0..cfg.repeats).map(|r| repeat_seed(cfg, r)).collect(),
        methods: cfg.methods().iter().map(|m| m.name().to_string()).collect(),
        complete,
        aggregate: metrics::aggregate(&folds),
        folds,
    };
    report.save_json(out_dir.join(REPORT_FILE))?;
    report.save_csv(out_dir.join(METRICS_FILE))?;
    let manifest = RunManifest {
        artifact: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        config_fingerprint: fingerprint,
        created_at,
        complete,
        cells_total: cells.len(),
        cells_completed: cells.len() - errors.len(),
        errors: errors.iter().map(ToString::to_string).collect(),
        files,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;

    match errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Default output directory for a config file: `runs/<file stem>`.
pub fn default_out_dir(config_path: &Path) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    Path::new("runs").join(stem)
}
