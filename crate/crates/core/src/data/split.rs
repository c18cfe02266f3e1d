//! Leave-one-subject-out and contiguous k-fold plans with a stratified
//! validation holdout carved from each fold's training part.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out subject for LOSO folds.
    pub test_subject: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

fn check_fraction(val_fraction: f64) -> Result<()> {
    if val_fraction > 0.0 && val_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Split(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )))
    }
}

/// Split `pool` into (train, validation), taking `round(n_c · fraction)`
/// windows of every class c into validation. At least one window always
/// lands on each side.
fn stratified_holdout(
    wd: &WindowedDataset,
    pool: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pool.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 training windows for a validation holdout, have {}",
            pool.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); wd.num_classes()];
    for &i in pool {
        by_class[wd.windows()[i].label].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::with_capacity(pool.len());
    let mut val = Vec::new();
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let mut take: Vec<usize> = by_class
        .iter()
        .map(|m| (m.len() as f64 * val_fraction).round() as usize)
        .collect();
    let total: usize = take.iter().sum();
    if total == 0 {
        let largest = (0..by_class.len()).max_by_key(|&c| (by_class[c].len(), usize::MAX - c)).unwrap();
        take[largest] = 1;
    } else if total == pool.len() {
        let largest = (0..by_class.len()).max_by_key(|&c| (take[c], usize::MAX - c)).unwrap();
        take[largest] -= 1;
    }
    for (members, &n_val) in by_class.iter().zip(&take) {
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// One fold per subject; the subject's windows are the test set.
pub fn loso_splits(wd: &WindowedDataset, val_fraction: f64, seed: u64) -> Result<SplitPlan> {
    check_fraction(val_fraction)?;
    let subjects: BTreeSet<usize> = wd.windows().iter().map(|w| w.subject).collect();
    if subjects.len() < 2 {
        return Err(Error::Split(
            "leave-one-subject-out needs at least 2 subjects; use kfold_splits for single-subject data".into(),
        ));
    }
    subjects
        .into_iter()
        .enumerate()
        .map(|(f, subject)| {
            let (test, rest): (Vec<usize>, Vec<usize>) =
                (0..wd.len()).partition(|&i| wd.windows()[i].subject == subject);
            let (train, validation) = stratified_holdout(wd, &rest, val_fraction, seed::derive(seed, &[f as u64]))?;
            Ok(Fold {
                train,
                validation,
                test,
                test_subject: Some(subject),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(|folds| SplitPlan { folds })
}

/// `k` contiguous test blocks over window order. Block sizes differ by at
/// most one, larger blocks first.
pub fn kfold_splits(wd: &WindowedDataset, k: usize, val_fraction: f64, seed: u64) -> Result<SplitPlan> {
    check_fraction(val_fraction)?;
    if k < 2 {
        return Err(Error::Split(format!("k-fold needs k ≥ 2, got {k}")));
    }
    let n = wd.len();
    if k > n {
        return Err(Error::Split(format!("k = {k} exceeds window count {n}")));
    }
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let test: Vec<usize> = (start..start + size).collect();
        let rest: Vec<usize> = (0..start).chain(start + size..n).collect();
        let (train, validation) = stratified_holdout(wd, &rest, val_fraction, seed::derive(seed, &[f as u64]))?;
        folds.push(Fold {
            train,
            validation,
            test,
            test_subject: None,
        });
        start += size;
    }
    Ok(SplitPlan { folds })
}
