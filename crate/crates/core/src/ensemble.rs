//! Sensor bagging: Bernoulli channel masks, one classifier per mask, and
//! majority voting over a chosen subset of members.
//!
//! A member excluded by the selection vector simply does not vote; it is
//! never treated as a vote for class 0.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Bernoulli, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_mask, WindowedDataset};
use crate::error::{Error, Result};
use crate::nn::{self, Classifier, ModelConfig, TrainConfig};
use crate::seed;

/// Maximum all-zero draws rejected per mask before giving up.
pub const MAX_MASK_ATTEMPTS: usize = 1000;

/// Channels kept by one ensemble member; never empty.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SensorMask(Vec<bool>);

impl SensorMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.iter().any(|&b| b) {
            Ok(Self(bits))
        } else {
            Err(Error::EmptySensorSubset)
        }
    }

    pub fn all(n: usize) -> Self {
        assert!(n > 0, "mask over zero channels");
        Self(vec![true; n])
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// The mask equivalent to applying `self` and then `inner` to the
    /// already-masked channels.
    pub fn compose(&self, inner: &SensorMask) -> Result<SensorMask> {
        if inner.len() != self.count_ones() {
            return Err(Error::Shape {
                expected: format!("inner mask of length {}", self.count_ones()),
                got: inner.len().to_string(),
            });
        }
        let mut bits = vec![false; self.len()];
        for (&outer_idx, &keep) in self.active_indices().iter().zip(inner.bits()) {
            bits[outer_idx] = keep;
        }
        SensorMask::from_bits(bits)
    }
}

impl fmt::Display for SensorMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SensorMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SensorMask({self})")
    }
}

impl From<SensorMask> for String {
    fn from(m: SensorMask) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for SensorMask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let bits = parse_bits(&s)?;
        SensorMask::from_bits(bits)
    }
}

pub(crate) fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Config(format!("bit string {s:?} contains {other:?}"))),
        })
        .collect()
}

pub(crate) fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// `k` masks over `n` channels with i.i.d. Bernoulli(`p`) bits. All-zero
/// draws are rejected and redrawn.
pub fn sample_masks(n: usize, k: usize, p: f64, seed: u64) -> Result<Vec<SensorMask>> {
    if n == 0 || k == 0 {
        return Err(Error::Config(format!("need n ≥ 1 channels and k ≥ 1 masks, got n={n}, k={k}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("inclusion probability must be in (0, 1], got {p}")));
    }
    let bernoulli = Bernoulli::new(p).expect("p checked above");
    let mut rng = seed::rng(seed);
    (0..k)
        .map(|_| {
            for _ in 0..MAX_MASK_ATTEMPTS {
                let bits: Vec<bool> = (0..n).map(|_| bernoulli.sample(&mut rng)).collect();
                if let Ok(mask) = SensorMask::from_bits(bits) {
                    return Ok(mask);
                }
            }
            Err(Error::MaskSampling {
                attempts: MAX_MASK_ATTEMPTS,
                p,
                n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub mask: SensorMask,
    pub model: Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEnsemble {
    members: Vec<Member>,
    channel_names: Vec<String>,
    num_classes: usize,
}

impl TrainedEnsemble {
    pub fn new(members: Vec<Member>, channel_names: Vec<String>, num_classes: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("an ensemble needs at least one member".into()));
        }
        let width = members[0].model.input_shape().1;
        for (i, m) in members.iter().enumerate() {
            if m.mask.len() != channel_names.len() {
                return Err(Error::Member {
                    index: i,
                    source: Box::new(Error::Shape {
                        expected: format!("mask over {} channels", channel_names.len()),
                        got: m.mask.len().to_string(),
                    }),
                });
            }
            if m.model.input_shape() != (m.mask.count_ones(), width) || m.model.config().num_classes != num_classes {
                return Err(Error::Member {
                    index: i,
                    source: Box::new(Error::Shape {
                        expected: format!("{}x{} input, {num_classes} classes", m.mask.count_ones(), width),
                        got: format!(
                            "{}x{} input, {} classes",
                            m.model.input_shape().0,
                            m.model.input_shape().1,
                            m.model.config().num_classes
                        ),
                    }),
                });
            }
        }
        Ok(Self {
            members,
            channel_names,
            num_classes,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Keeps only the members whose selection bit is set.
    pub fn subset(&self, selection: &[bool]) -> Result<TrainedEnsemble> {
        check_selection(self.len(), selection)?;
        let members = self
            .members
            .iter()
            .zip(selection)
            .filter(|(_, &s)| s)
            .map(|(m, _)| m.clone())
            .collect();
        TrainedEnsemble::new(members, self.channel_names.clone(), self.num_classes)
    }

    /// Every member's predictions on its masked view of `wd`, one row per
    /// member.
    pub fn member_predictions(&self, wd: &WindowedDataset) -> Result<Vec<Vec<usize>>> {
        if wd.channel_names() != self.channel_names.as_slice() {
            return Err(Error::Shape {
                expected: format!("channels {:?}", self.channel_names),
                got: format!("{:?}", wd.channel_names()),
            });
        }
        self.members
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                apply_mask(wd, &m.mask)
                    .and_then(|view| m.model.predict_batch(&view))
                    .map_err(|e| Error::Member {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

fn check_selection(k: usize, selection: &[bool]) -> Result<()> {
    if selection.len() != k {
        return Err(Error::Shape {
            expected: format!("selection of length {k}"),
            got: selection.len().to_string(),
        });
    }
    if !selection.iter().any(|&s| s) {
        return Err(Error::EmptyModelSubset);
    }
    Ok(())
}

/// Trains member `i` on `apply_mask(train, masks[i])` with seed `seed + i`.
/// Members train in parallel; the result does not depend on scheduling.
pub fn train_ensemble(
    train: &WindowedDataset,
    val: &WindowedDataset,
    masks: &[SensorMask],
    template: &ModelConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<TrainedEnsemble> {
    if masks.is_empty() {
        return Err(Error::Config("no masks given".into()));
    }
    if template.input_width != train.width() || template.num_classes != train.num_classes() {
        return Err(Error::Shape {
            expected: format!("{}-wide windows with {} classes", template.input_width, template.num_classes),
            got: format!("{}-wide windows with {} classes", train.width(), train.num_classes()),
        });
    }
    let members = masks
        .par_iter()
        .enumerate()
        .map(|(i, mask)| {
            let member_seed = seed.wrapping_add(i as u64);
            let fit = || -> Result<Member> {
                let cfg = template.with_input_channels(mask.count_ones());
                let model = Classifier::init(cfg, member_seed)?;
                let model = nn::train(
                    model,
                    &apply_mask(train, mask)?,
                    &apply_mask(val, mask)?,
                    &tc.with_seed(member_seed),
                )?;
                Ok(Member {
                    mask: mask.clone(),
                    model,
                })
            };
            fit().map_err(|e| Error::Member {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrainedEnsemble::new(members, train.channel_names().to_vec(), train.num_classes())
}

/// Most frequent label; ties go to the smallest tied class id.
pub fn mode_vote(labels: &[usize]) -> Result<usize> {
    let max = *labels.iter().max().ok_or(Error::NoVoters)?;
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(vote_counts(&counts))
}

/// Index of the largest count, lowest index on ties.
pub(crate) fn vote_counts(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Majority vote of the selected members over every window of `wd`.
pub fn ensemble_predict(e: &TrainedEnsemble, selection: &[bool], wd: &WindowedDataset) -> Result<Vec<usize>> {
    let sub = e.subset(selection)?;
    let preds = sub.member_predictions(wd)?;
    let mut counts = vec![0usize; e.num_classes];
    Ok((0..wd.len())
        .map(|w| {
            counts.iter_mut().for_each(|c| *c = 0);
            for row in &preds {
                counts[row[w]] += 1;
            }
            vote_counts(&counts)
        })
        .collect())
}

pub const ENSEMBLE_FORMAT: &str = "randomhar-ensemble";
pub const ENSEMBLE_VERSION: u32 = 1;

/// `manifest.json` of a saved ensemble directory; each member's model sits
/// next to it in the listed file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub num_classes: usize,
    pub channel_names: Vec<String>,
    pub masks: Vec<SensorMask>,
    pub member_files: Vec<String>,
}

pub fn save_ensemble(e: &TrainedEnsemble, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(e.len());
    for (i, m) in e.members.iter().enumerate() {
        let name = format!("member-{i}.json");
        nn::save_model(&m.model, dir.join(&name))?;
        files.push(name);
    }
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT.into(),
        version: ENSEMBLE_VERSION,
        k: e.len(),
        num_classes: e.num_classes,
        channel_names: e.channel_names.clone(),
        masks: e.members.iter().map(|m| m.mask.clone()).collect(),
        member_files: files,
    };
    let mut out = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    out.flush()?;
    Ok(())
}

pub fn load_ensemble(dir: impl AsRef<Path>) -> Result<TrainedEnsemble> {
    let dir = dir.as_ref();
    let manifest: EnsembleManifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
    if manifest.format != ENSEMBLE_FORMAT {
        return Err(Error::Config(format!("not an ensemble manifest (format {:?})", manifest.format)));
    }
    if manifest.version != ENSEMBLE_VERSION {
        return Err(Error::ModelVersion(manifest.version));
    }
    if manifest.masks.len() != manifest.k || manifest.member_files.len() != manifest.k {
        return Err(Error::Config("manifest k does not match its mask/member lists".into()));
    }
    let members = manifest
        .masks
        .into_iter()
        .zip(&manifest.member_files)
        .map(|(mask, file)| {
            Ok(Member {
                mask,
                model: nn::load_model(dir.join(file))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrainedEnsemble::new(members, manifest.channel_names, manifest.num_classes)
}
