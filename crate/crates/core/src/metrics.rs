//! Classification metrics, significance testing and the evaluation report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Shape {
                expected: "square non-empty matrix".into(),
                got: format!("{} rows", c),
            });
        }
        Ok(Self { counts })
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", y_true.len()),
            got: y_pred.len().to_string(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: t.max(p),
                classes: num_classes,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// F1 per class. A class with no true and no predicted windows scores 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    let c = cm.num_classes();
    (0..c)
        .map(|k| {
            let tp = cm.counts[k][k] as f64;
            let actual: u64 = cm.counts[k].iter().sum();
            let predicted: u64 = cm.counts.iter().map(|r| r[k]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over all `C` classes, absent classes
/// included as 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let f1 = per_class_f1(cm);
    f1.iter().sum::<f64>() / f1.len() as f64
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    let diag: u64 = (0..cm.num_classes()).map(|k| cm.counts[k][k]).sum();
    diag as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub dof: usize,
    /// Every paired difference was zero; reported with `t = 0`, `p = 1`.
    pub identical: bool,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: format!("{} paired scores", a.len()),
            got: b.len().to_string(),
        });
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::Config(format!("paired t-test needs at least 2 pairs, got {m}")));
    }
    let dof = m - 1;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p_value: 1.0,
            dof,
            identical: true,
        });
    }
    let mean = diffs.iter().sum::<f64>() / m as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / dof as f64;
    let se = (var / m as f64).sqrt();
    if se == 0.0 {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p_value: 0.0,
            dof,
            identical: false,
        });
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof ≥ 1");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p_value,
        dof,
        identical: false,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { n, mean, std }
    }
}

/// Scores of one method on one (repeat, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subject: Option<usize>,
    pub method: String,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    /// Selected members as a bit string, for ensemble methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
}

/// Macro-F1 and accuracy summarised three ways: over every cell, over
/// per-fold means (averaged across repeats), and over per-repeat means
/// (averaged across folds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub macro_f1: Summary,
    pub accuracy: Summary,
    pub macro_f1_across_folds: Summary,
    pub macro_f1_across_repeats: Summary,
}

pub fn aggregate(folds: &[FoldResult]) -> BTreeMap<String, MethodAggregate> {
    let mut by_method: BTreeMap<&str, Vec<&FoldResult>> = BTreeMap::new();
    for f in folds {
        by_method.entry(&f.method).or_default().push(f);
    }
    by_method
        .into_iter()
        .map(|(method, rows)| {
            let f1: Vec<f64> = rows.iter().map(|r| r.macro_f1).collect();
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            let group_means = |key: fn(&FoldResult) -> usize| {
                let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for r in &rows {
                    groups.entry(key(r)).or_default().push(r.macro_f1);
                }
                let means: Vec<f64> = groups.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
                Summary::of(&means)
            };
            (
                method.to_string(),
                MethodAggregate {
                    macro_f1: Summary::of(&f1),
                    accuracy: Summary::of(&acc),
                    macro_f1_across_folds: group_means(|r| r.fold),
                    macro_f1_across_repeats: group_means(|r| r.repeat),
                },
            )
        })
        .collect()
}

pub const REPORT_FORMAT: &str = "randomhar-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    /// The only field that changes between identical runs.
    pub created_at: String,
    pub config_fingerprint: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub complete: bool,
    pub folds: Vec<FoldResult>,
    pub aggregate: BTreeMap<String, MethodAggregate>,
}

impl EvalReport {
    pub fn load(path: impl AsRef<Path>) -> Result<EvalReport> {
        let report: EvalReport = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        if report.format != REPORT_FORMAT {
            return Err(Error::Config(format!("not a report (format {:?})", report.format)));
        }
        Ok(report)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// One row per fold per method.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["repeat", "fold", "test_subject", "method", "macro_f1", "accuracy", "n_test", "selection"])?;
        for f in &self.folds {
            w.write_record([
                f.repeat.to_string(),
                f.fold.to_string(),
                f.test_subject.map(|s| s.to_string()).unwrap_or_default(),
                f.method.clone(),
                f.macro_f1.to_string(),
                f.accuracy.to_string(),
                f.n_test.to_string(),
                f.selection.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Macro-F1 per (repeat, fold) cell for `method`, sorted by cell.
    pub fn scores(&self, method: &str) -> Vec<((usize, usize), f64)> {
        let mut s: Vec<_> = self
            .folds
            .iter()
            .filter(|f| f.method == method)
            .map(|f| ((f.repeat, f.fold), f.macro_f1))
            .collect();
        s.sort_by_key(|&(cell, _)| cell);
        s
    }
}
