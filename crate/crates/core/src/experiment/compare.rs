//! Side-by-side summary of one or more reports with pairwise paired t-tests
//! over matching (repeat, fold) cells.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{paired_ttest, EvalReport, Summary, TTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    pub cells: usize,
    pub macro_f1: Summary,
    pub accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    /// Mean of `a - b` over cells.
    pub mean_diff: f64,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<MethodRow>,
    pub pairs: Vec<PairRow>,
}

/// Identity of a cell: (repeat, fold, held-out subject, test size).
type CellKey = (usize, usize, Option<usize>, usize);

struct Series {
    label: String,
    cells: Vec<CellKey>,
    f1: Vec<f64>,
    acc: Vec<f64>,
}

/// Compares every method of every report. With several reports, methods
/// are labelled `<report label>/<method>`.
///
/// Fails when two series do not cover the same cells, since the t-test
/// pairs scores cell by cell.
pub fn compare(reports: &[(String, EvalReport)]) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::ReportMismatch("no reports given".into()));
    }
    let mut series = Vec::new();
    for (name, report) in reports {
        for method in &report.methods {
            let mut rows: Vec<_> = report.folds.iter().filter(|f| &f.method == method).collect();
            rows.sort_by_key(|f| (f.repeat, f.fold));
            let label = if reports.len() == 1 {
                method.clone()
            } else {
                format!("{name}/{method}")
            };
            series.push(Series {
                label,
                cells: rows.iter().map(|f| (f.repeat, f.fold, f.test_subject, f.n_test)).collect(),
                f1: rows.iter().map(|f| f.macro_f1).collect(),
                acc: rows.iter().map(|f| f.accuracy).collect(),
            });
        }
    }
    let first = &series[0];
    for s in &series[1..] {
        if s.cells != first.cells {
            return Err(Error::ReportMismatch(format!(
                "{} covers {} cells and {} covers {}; fold structures differ",
                first.label,
                first.cells.len(),
                s.label,
                s.cells.len()
            )));
        }
    }
    if first.cells.is_empty() {
        return Err(Error::ReportMismatch("reports contain no fold results".into()));
    }

    let rows = series
        .iter()
        .map(|s| MethodRow {
            label: s.label.clone(),
            cells: s.cells.len(),
            macro_f1: Summary::of(&s.f1),
            accuracy: Summary::of(&s.acc),
        })
        .collect();
    let mut pairs = Vec::new();
    if first.cells.len() >= 2 {
        for (i, a) in series.iter().enumerate() {
            for b in &series[i + 1..] {
                let n = a.f1.len() as f64;
                pairs.push(PairRow {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    mean_diff: a.f1.iter().zip(&b.f1).map(|(x, y)| x - y).sum::<f64>() / n,
                    test: paired_ttest(&a.f1, &b.f1)?,
                });
            }
        }
    }
    Ok(Comparison { rows, pairs })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
        writeln!(f, "{:<width$}  {:>5}  {:>17}  {:>17}", "method", "cells", "macro-F1", "accuracy")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>5}  {:>8.4} ± {:<6.4}  {:>8.4} ± {:<6.4}",
                r.label, r.cells, r.macro_f1.mean, r.macro_f1.std, r.accuracy.mean, r.accuracy.std
            )?;
        }
        if !self.pairs.is_empty() {
            writeln!(f)?;
            writeln!(f, "paired t-tests on macro-F1")?;
            for p in &self.pairs {
                let verdict = if p.test.identical {
                    "identical".to_string()
                } else {
                    format!("t = {:>7.3}  p = {:.4}", p.test.t, p.test.p_value)
                };
                writeln!(f, "  {} vs {}: Δ = {:+.4}  {verdict}  (dof {})", p.a, p.b, p.mean_diff, p.test.dof)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{aggregate, ConfusionMatrix, FoldResult, REPORT_FORMAT, REPORT_VERSION};

    fn report(scores: &[(&str, usize, f64)]) -> EvalReport {
        let folds: Vec<FoldResult> = scores
            .iter()
            .map(|&(m, fold, f1)| FoldResult {
                repeat: 0,
                fold,
                test_subject: Some(fold),
                method: m.into(),
                macro_f1: f1,
                accuracy: f1,
                n_test: 10,
                confusion: ConfusionMatrix::from_counts(vec![vec![1]]).unwrap(),
                selection: None,
            })
            .collect();
        let mut methods: Vec<String> = scores.iter().map(|s| s.0.to_string()).collect();
        methods.dedup();
        EvalReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            created_at: String::new(),
            config_fingerprint: String::new(),
            config: serde_json::Value::Null,
            seeds: vec![0],
            methods,
            complete: true,
            aggregate: aggregate(&folds),
            folds,
        }
    }

    #[test]
    fn pairs_every_series() {
        let r = report(&[("a", 0, 0.5), ("a", 1, 0.7), ("a", 2, 0.6), ("b", 0, 0.5), ("b", 1, 0.7), ("b", 2, 0.6)]);
        let c = compare(&[("x".into(), r)]).unwrap();
        assert_eq!(c.rows.len(), 2);
        assert!((c.rows[0].macro_f1.mean - 0.6).abs() < 1e-12);
        assert_eq!(c.pairs.len(), 1);
        assert!(c.pairs[0].test.identical);
        let text = c.to_string();
        assert!(text.contains("identical"), "{text}");
    }

    #[test]
    fn mismatched_folds_are_rejected() {
        let r1 = report(&[("a", 0, 0.5), ("a", 1, 0.7)]);
        let r2 = report(&[("a", 0, 0.5), ("a", 1, 0.7), ("a", 2, 0.1)]);
        let err = compare(&[("one".into(), r1), ("two".into(), r2)]).unwrap_err();
        assert!(matches!(err, Error::ReportMismatch(_)));
    }
}
