//! Choosing which trained members vote.
//!
//! The main strategy is an episode-based policy-gradient search. A Gaussian
//! search distribution `N(μ, I)` over continuous selection scores `θ` is
//! sampled; `θ_j > 0.5` includes member `j`. The reward of a selection is
//! the majority-vote accuracy on validation windows, and `μ` follows the
//! Monte-Carlo likelihood-ratio gradient
//!
//! ```text
//! ∇J(μ) ≈ (1/N₂) Σᵢ R(θᵢ)(θᵢ − μ)
//! ```
//!
//! `μ` starts at 0.5 in every coordinate, so each member starts as a coin
//! flip. The search returns the best selection it ever evaluated rather
//! than a thresholded final `μ`.
//!
//! Sampling continuous `θ` and thresholding is one way to read a Gaussian
//! search distribution over binary vectors; the gradient always uses the
//! continuous draws.
//!
//! TopK (best individual members), all-members and an exhaustive oracle
//! are provided for comparison.

use std::collections::HashMap;

use log::debug;
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::ensemble::{bits_to_string, vote_counts, TrainedEnsemble};
use crate::error::{Error, Result};
use crate::seed;

/// Selection threshold applied to each continuous score.
pub const INCLUDE_THRESHOLD: f64 = 0.5;
/// Initial search mean in every coordinate.
pub const INITIAL_MEAN: f64 = 0.5;
/// Largest ensemble the exhaustive oracle accepts.
pub const ORACLE_MAX_MEMBERS: usize = 20;

/// Member predictions on a fixed set of labelled windows. Everything a
/// selection strategy needs; votes are recomputed from this table instead
/// of re-running the models.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    predictions: Vec<Vec<usize>>,
    truth: Vec<usize>,
    num_classes: usize,
}

impl VoteTable {
    pub fn new(predictions: Vec<Vec<usize>>, truth: Vec<usize>, num_classes: usize) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::Config("vote table needs at least one member".into()));
        }
        if truth.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for row in &predictions {
            if row.len() != truth.len() {
                return Err(Error::Shape {
                    expected: format!("{} predictions per member", truth.len()),
                    got: row.len().to_string(),
                });
            }
        }
        if let Some(&label) = predictions.iter().flatten().chain(&truth).find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            predictions,
            truth,
            num_classes,
        })
    }

    pub fn from_ensemble(e: &TrainedEnsemble, val: &WindowedDataset) -> Result<Self> {
        if val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        VoteTable::new(e.member_predictions(val)?, val.labels(), e.num_classes())
    }

    /// Number of members.
    pub fn k(&self) -> usize {
        self.predictions.len()
    }

    /// Number of windows.
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    fn check_bits(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.k() {
            return Err(Error::Shape {
                expected: format!("selection of length {}", self.k()),
                got: bits.len().to_string(),
            });
        }
        Ok(())
    }

    /// Majority-vote accuracy of the selected members over `windows`.
    /// An empty selection scores 0.
    fn vote_accuracy(&self, bits: &[bool], windows: &[usize]) -> f64 {
        let voters: Vec<&Vec<usize>> = self.predictions.iter().zip(bits).filter(|(_, &b)| b).map(|(p, _)| p).collect();
        if voters.is_empty() {
            debug!("empty selection {} scored 0", bits_to_string(bits));
            return 0.0;
        }
        let mut counts = vec![0usize; self.num_classes];
        let correct = windows
            .iter()
            .filter(|&&w| {
                counts.iter_mut().for_each(|c| *c = 0);
                for p in &voters {
                    counts[p[w]] += 1;
                }
                vote_counts(&counts) == self.truth[w]
            })
            .count();
        correct as f64 / windows.len() as f64
    }

    pub fn member_accuracy(&self, member: usize) -> f64 {
        let row = &self.predictions[member];
        row.iter().zip(&self.truth).filter(|(p, t)| p == t).count() as f64 / self.len() as f64
    }

    /// Majority vote of the selected members on every window.
    pub fn votes(&self, bits: &[bool]) -> Result<Vec<usize>> {
        self.check_bits(bits)?;
        let voters: Vec<&Vec<usize>> = self.predictions.iter().zip(bits).filter(|(_, &b)| b).map(|(p, _)| p).collect();
        if voters.is_empty() {
            return Err(Error::EmptyModelSubset);
        }
        let mut counts = vec![0usize; self.num_classes];
        Ok((0..self.len())
            .map(|w| {
                counts.iter_mut().for_each(|c| *c = 0);
                for p in &voters {
                    counts[p[w]] += 1;
                }
                vote_counts(&counts)
            })
            .collect())
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    /// Windows used to estimate the reward: all of them when `n1` equals
    /// the table size, otherwise a seeded uniform subsample.
    pub fn reward_windows(&self, n1: usize, seed: u64) -> Result<Vec<usize>> {
        if n1 == 0 || n1 > self.len() {
            return Err(Error::Config(format!("N1 must be in 1..={}, got {n1}", self.len())));
        }
        if n1 == self.len() {
            return Ok((0..n1).collect());
        }
        let mut picked = index::sample(&mut seed::rng(seed), self.len(), n1).into_vec();
        picked.sort_unstable();
        Ok(picked)
    }

    /// Mean of the vote-correctness indicator over `n1` windows.
    pub fn reward(&self, bits: &[bool], n1: usize, seed: u64) -> Result<f64> {
        self.check_bits(bits)?;
        let windows = self.reward_windows(n1, seed)?;
        Ok(self.vote_accuracy(bits, &windows))
    }
}

/// Reward of `bits` on validation data: fraction of the `n1` evaluated
/// windows the selected members' majority vote gets right.
pub fn reward(e: &TrainedEnsemble, bits: &[bool], val: &WindowedDataset, n1: usize, seed: u64) -> Result<f64> {
    VoteTable::from_ensemble(e, val)?.reward(bits, n1, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMean(pub Vec<f64>);

impl SearchMean {
    pub fn initial(k: usize) -> Self {
        SearchMean(vec![INITIAL_MEAN; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSample {
    pub theta: Vec<f64>,
    pub bits: Vec<bool>,
    pub reward: Option<f64>,
}

/// One draw `θ = μ + z`, `z ~ N(0, I)`, with its thresholded selection.
pub fn sample_theta(mu: &SearchMean, seed: u64) -> SelectionSample {
    let mut rng = seed::rng(seed);
    let theta: Vec<f64> = mu
        .0
        .iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            m + z
        })
        .collect();
    let bits = theta.iter().map(|&t| t > INCLUDE_THRESHOLD).collect();
    SelectionSample {
        theta,
        bits,
        reward: None,
    }
}

/// `(1/N) Σ R(θᵢ)(θᵢ − μ)` over rewarded samples.
pub fn gradient_estimate(mu: &SearchMean, samples: &[SelectionSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Config("gradient estimate needs at least one sample".into()));
    }
    let mut grad = vec![0.0; mu.len()];
    for s in samples {
        if s.theta.len() != mu.len() {
            return Err(Error::Shape {
                expected: format!("theta of length {}", mu.len()),
                got: s.theta.len().to_string(),
            });
        }
        let r = s
            .reward
            .ok_or_else(|| Error::Config("sample has no reward".into()))?;
        for ((g, &t), &m) in grad.iter_mut().zip(&s.theta).zip(&mu.0) {
            *g += r * (t - m);
        }
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    /// Validation windows per reward; `None` uses the whole validation set.
    pub n1: Option<usize>,
    /// Monte-Carlo draws per iteration.
    pub n2: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Cache rewards by selection pattern.
    pub memoize: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            n1: None,
            n2: 10,
            alpha: 0.1,
            iterations: 100,
            seed: 0,
            memoize: true,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == Some(0) || self.n2 == 0 || self.iterations == 0 {
            return Err(Error::Config("n1, n2 and iterations must be ≥ 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub bits: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub samples: Vec<SampleRecord>,
    pub mean_reward: f64,
    /// Best reward over every non-empty selection evaluated so far.
    pub best_reward: Option<f64>,
    /// Search mean after this iteration's update.
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub initial_mu: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub best_bits: String,
    pub best_reward: f64,
    /// Distinct non-empty selections whose reward was computed.
    pub distinct_evaluated: usize,
}

impl SearchTrace {
    /// Largest reward of any non-empty selection in the trace.
    pub fn max_evaluated_reward(&self) -> Option<f64> {
        self.iterations
            .iter()
            .flat_map(|it| &it.samples)
            .filter(|s| s.bits.contains('1'))
            .map(|s| s.reward)
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub bits: Vec<bool>,
    pub reward: f64,
    pub trace: SearchTrace,
}

fn better(candidate: (&[bool], f64), incumbent: (&[bool], f64)) -> bool {
    let ones = |b: &[bool]| b.iter().filter(|&&x| x).count();
    candidate.1 > incumbent.1 || (candidate.1 == incumbent.1 && ones(candidate.0) > ones(incumbent.0))
}

/// Policy-gradient search over selections of `k` members for an arbitrary
/// deterministic reward. Draw `d` of iteration `i` uses seed
/// `derive(rc.seed, [i, d])`. Ties on the best reward prefer the selection
/// with more members, then the one found first.
pub fn rl_search<F>(k: usize, rc: &RlConfig, reward_fn: F) -> Result<SearchOutcome>
where
    F: Fn(&[bool]) -> f64 + Sync,
{
    rc.validate()?;
    if k == 0 {
        return Err(Error::Config("cannot search over zero members".into()));
    }
    let mut mu = SearchMean::initial(k);
    let initial_mu = mu.0.clone();
    let mut memo: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut best: Option<(Vec<bool>, f64)> = None;
    let mut iterations = Vec::with_capacity(rc.iterations);

    for it in 0..rc.iterations {
        let mut samples: Vec<SelectionSample> = (0..rc.n2)
            .map(|d| sample_theta(&mu, seed::derive(rc.seed, &[it as u64, d as u64])))
            .collect();

        let mut pending: Vec<Vec<bool>> = samples
            .iter()
            .filter(|s| s.bits.contains(&true))
            .filter(|s| !(rc.memoize && memo.contains_key(&s.bits)))
            .map(|s| s.bits.clone())
            .collect();
        pending.sort();
        pending.dedup();
        let fresh: Vec<f64> = pending.par_iter().map(|b| reward_fn(b)).collect();
        let fresh: HashMap<Vec<bool>, f64> = pending.into_iter().zip(fresh).collect();

        for s in &mut samples {
            let r = if !s.bits.contains(&true) {
                debug!("iteration {it}: empty selection scored 0");
                0.0
            } else {
                fresh.get(&s.bits).or_else(|| memo.get(&s.bits)).copied().expect("reward evaluated")
            };
            s.reward = Some(r);
            if s.bits.contains(&true) && best.as_ref().is_none_or(|(b, br)| better((&s.bits, r), (b, *br))) {
                best = Some((s.bits.clone(), r));
            }
        }
        memo.extend(fresh);

        let grad = gradient_estimate(&mu, &samples)?;
        for (m, g) in mu.0.iter_mut().zip(&grad) {
            *m += rc.alpha * g;
        }

        let rewards: Vec<f64> = samples.iter().map(|s| s.reward.unwrap_or(0.0)).collect();
        iterations.push(IterationRecord {
            iteration: it,
            samples: samples
                .iter()
                .zip(&rewards)
                .map(|(s, &reward)| SampleRecord {
                    bits: bits_to_string(&s.bits),
                    reward,
                })
                .collect(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            best_reward: best.as_ref().map(|(_, r)| *r),
            mu: mu.0.clone(),
        });
    }

    let (bits, reward) = best.ok_or(Error::SearchCollapsed)?;
    let distinct_evaluated = if rc.memoize {
        memo.len()
    } else {
        iterations
            .iter()
            .flat_map(|it| &it.samples)
            .filter(|s| s.bits.contains('1'))
            .map(|s| s.bits.as_str())
            .collect::<std::collections::HashSet<_>>()
            .len()
    };
    Ok(SearchOutcome {
        trace: SearchTrace {
            initial_mu,
            iterations,
            best_bits: bits_to_string(&bits),
            best_reward: reward,
            distinct_evaluated,
        },
        bits,
        reward,
    })
}

/// Policy-gradient selection with validation majority-vote accuracy as the
/// reward.
pub fn rl_select_table(table: &VoteTable, rc: &RlConfig) -> Result<SearchOutcome> {
    let n1 = rc.n1.unwrap_or(table.len());
    let windows = table.reward_windows(n1, seed::derive(rc.seed, &[u64::MAX]))?;
    rl_search(table.k(), rc, |bits| table.vote_accuracy(bits, &windows))
}

pub fn rl_select(e: &TrainedEnsemble, val: &WindowedDataset, rc: &RlConfig) -> Result<(Vec<bool>, SearchTrace)> {
    let out = rl_select_table(&VoteTable::from_ensemble(e, val)?, rc)?;
    Ok((out.bits, out.trace))
}

/// The `k_top` members with the best individual validation accuracy; ties
/// go to the lower member index.
pub fn topk_select_table(table: &VoteTable, k_top: usize) -> Result<Vec<bool>> {
    if k_top == 0 || k_top > table.k() {
        return Err(Error::Config(format!("k_top must be in 1..={}, got {k_top}", table.k())));
    }
    let acc: Vec<f64> = (0..table.k()).map(|j| table.member_accuracy(j)).collect();
    let mut order: Vec<usize> = (0..table.k()).collect();
    order.sort_by(|&a, &b| acc[b].total_cmp(&acc[a]).then(a.cmp(&b)));
    let mut bits = vec![false; table.k()];
    for &j in &order[..k_top] {
        bits[j] = true;
    }
    Ok(bits)
}

pub fn topk_select(e: &TrainedEnsemble, val: &WindowedDataset, k_top: usize) -> Result<Vec<bool>> {
    topk_select_table(&VoteTable::from_ensemble(e, val)?, k_top)
}

pub fn all_select(e: &TrainedEnsemble) -> Vec<bool> {
    vec![true; e.len()]
}

/// Exact maximiser of `reward_fn` over every non-empty selection of `k`
/// members; ties go to the lexicographically smallest bit vector.
pub fn brute_force_search<F>(k: usize, reward_fn: F) -> Result<(Vec<bool>, f64)>
where
    F: Fn(&[bool]) -> f64,
{
    if k > ORACLE_MAX_MEMBERS {
        return Err(Error::OracleLimit {
            k,
            max: ORACLE_MAX_MEMBERS,
        });
    }
    if k == 0 {
        return Err(Error::Config("cannot search over zero members".into()));
    }
    let mut best: Option<(Vec<bool>, f64)> = None;
    for code in 1u32..(1 << k) {
        let bits: Vec<bool> = (0..k).map(|j| code >> j & 1 == 1).collect();
        let r = reward_fn(&bits);
        let replace = match &best {
            None => true,
            Some((b, br)) => r > *br || (r == *br && bits < *b),
        };
        if replace {
            best = Some((bits, r));
        }
    }
    Ok(best.expect("k ≥ 1 gives a non-empty subset"))
}

pub fn brute_force_select_table(table: &VoteTable) -> Result<Vec<bool>> {
    let all: Vec<usize> = (0..table.len()).collect();
    brute_force_search(table.k(), |bits| table.vote_accuracy(bits, &all)).map(|(b, _)| b)
}

pub fn brute_force_select(e: &TrainedEnsemble, val: &WindowedDataset) -> Result<Vec<bool>> {
    brute_force_select_table(&VoteTable::from_ensemble(e, val)?)
}
