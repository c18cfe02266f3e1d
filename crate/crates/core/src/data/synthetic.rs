//! Seeded multi-subject activity data with controllable stressors.
//!
//! Every channel carries, per class, a template `a·sin(2πft + φ) + b`
//! whose parameters are drawn once from the seed. The channel role decides
//! how the templates relate across classes:
//!
//! * `informative`: every class gets its own template;
//! * `noise`: no template, only sensor noise;
//! * `conflicting`: like informative, except that the two listed classes
//!   share one template (inter-class similarity).
//!
//! Each subject rescales every channel by a log-normal factor and shifts its
//! phase (intra-class variability); i.i.d. Gaussian noise of `noise_sigma`
//! is added on top.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Channel, Dataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ChannelRole {
    Informative,
    Noise,
    Conflicting { classes: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub role: ChannelRole,
}

impl ChannelSpec {
    pub fn new(role: ChannelRole) -> Self {
        Self { name: None, role }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub num_classes: usize,
    /// Timesteps per activity segment.
    pub segment_len: usize,
    pub segments_per_subject: usize,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Standard deviation of the per-subject log-amplitude factor.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Standard deviation (radians) of the per-subject phase shift.
    #[serde(default)]
    pub phase_jitter: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_rate() -> f64 {
    50.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 || self.segment_len == 0 || self.segments_per_subject == 0 {
            return bad("synthetic spec needs n_subjects, segment_len and segments_per_subject ≥ 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("synthetic spec needs at least 2 classes, got {}", self.num_classes));
        }
        if !(self.noise_sigma >= 0.0 && self.amplitude_jitter >= 0.0 && self.phase_jitter >= 0.0) {
            return bad("noise_sigma and jitters must be non-negative".into());
        }
        if self.sample_rate_hz.is_nan() || self.sample_rate_hz <= 0.0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if !self
            .channels
            .iter()
            .any(|c| c.role == ChannelRole::Informative)
        {
            return bad("synthetic spec has zero informative channels".into());
        }
        for c in &self.channels {
            if let ChannelRole::Conflicting { classes: [a, b] } = c.role {
                if a == b || a >= self.num_classes || b >= self.num_classes {
                    return bad(format!(
                        "conflicting classes ({a}, {b}) must be distinct and below {}",
                        self.num_classes
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.name.clone().unwrap_or_else(|| {
                    let role = match c.role {
                        ChannelRole::Informative => "inf",
                        ChannelRole::Noise => "noise",
                        ChannelRole::Conflicting { .. } => "conf",
                    };
                    format!("ch{i}_{role}")
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Template {
    amplitude: f64,
    freq: f64,
    offset: f64,
}

impl Template {
    const SILENT: Template = Template {
        amplitude: 0.0,
        freq: 0.0,
        offset: 0.0,
    };

    fn draw(rng: &mut impl Rng) -> Self {
        Template {
            amplitude: rng.random_range(0.5..1.5),
            freq: rng.random_range(0.02..0.15),
            offset: rng.random_range(-1.0..1.0),
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let n_ch = spec.channels.len();
    let c = spec.num_classes;

    let mut template_rng = seed::rng_for(seed, &[0]);
    let templates: Vec<Vec<Template>> = spec
        .channels
        .iter()
        .map(|ch| {
            let mut per_class: Vec<Template> = (0..c).map(|_| Template::draw(&mut template_rng)).collect();
            match ch.role {
                ChannelRole::Informative => {}
                ChannelRole::Noise => per_class.fill(Template::SILENT),
                ChannelRole::Conflicting { classes: [a, b] } => per_class[b] = per_class[a],
            }
            per_class
        })
        .collect();

    let total = spec.n_subjects * spec.segments_per_subject * spec.segment_len;
    let mut samples = vec![Vec::with_capacity(total); n_ch];
    let mut labels = Vec::with_capacity(total);
    let mut subjects = Vec::with_capacity(total);

    for s in 0..spec.n_subjects {
        let mut subject_rng = seed::rng_for(seed, &[1, s as u64]);
        let scale: Vec<f64> = (0..n_ch)
            .map(|_| (spec.amplitude_jitter * subject_rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let phase: Vec<f64> = (0..n_ch)
            .map(|_| spec.phase_jitter * subject_rng.sample::<f64, _>(StandardNormal))
            .collect();

        // balanced class order: shuffled blocks of all classes
        let mut order = Vec::with_capacity(spec.segments_per_subject + c);
        while order.len() < spec.segments_per_subject {
            let mut block: Vec<usize> = (0..c).collect();
            block.shuffle(&mut subject_rng);
            order.extend(block);
        }
        order.truncate(spec.segments_per_subject);

        let mut noise_rng = seed::rng_for(seed, &[2, s as u64]);
        for &class in &order {
            for t in 0..spec.segment_len {
                for ch in 0..n_ch {
                    let tpl = templates[ch][class];
                    let clean = tpl.amplitude
                        * (std::f64::consts::TAU * tpl.freq * t as f64 + phase[ch]).sin()
                        + tpl.offset;
                    let noise: f64 = StandardNormal.sample(&mut noise_rng);
                    samples[ch].push(scale[ch] * clean + spec.noise_sigma * noise);
                }
                labels.push(class);
                subjects.push(s);
            }
        }
    }

    let channels = spec
        .channel_names()
        .into_iter()
        .zip(samples)
        .map(|(name, samples)| Channel { name, samples })
        .collect();
    Dataset::new(channels, labels, subjects, spec.sample_rate_hz, c)
}
