//! Multi-sensor time series: loading, synthetic generation, sliding-window
//! segmentation, channel masking and cross-validation splits.

mod csv_io;
mod normalize;
mod split;
mod synthetic;

pub use csv_io::{load_csv, write_csv};
pub use normalize::ChannelScaler;
pub use split::{kfold_splits, loso_splits, Fold, SplitPlan};
pub use synthetic::{generate_synthetic, ChannelRole, ChannelSpec, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::ensemble::SensorMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
}

/// A labelled multi-channel recording, one label and subject id per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    channels: Vec<Channel>,
    labels: Vec<usize>,
    subjects: Vec<usize>,
    sample_rate_hz: f64,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        channels: Vec<Channel>,
        labels: Vec<usize>,
        subjects: Vec<usize>,
        sample_rate_hz: f64,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if channels.is_empty() {
            return Err(Error::Config("dataset needs at least one channel".into()));
        }
        let len = labels.len();
        if subjects.len() != len {
            return Err(Error::Shape {
                expected: format!("{len} subject ids"),
                got: subjects.len().to_string(),
            });
        }
        if let Some(c) = channels.iter().find(|c| c.samples.len() != len) {
            return Err(Error::Shape {
                expected: format!("{len} samples in channel {}", c.name),
                got: c.samples.len().to_string(),
            });
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            channels,
            labels,
            subjects,
            sample_rate_hz,
            num_classes,
        })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subjects(&self) -> &[usize] {
        &self.subjects
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::Config(format!("sample rate must be positive, got {hz}")));
        }
        self.sample_rate_hz = hz;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Contiguous runs of equal subject id as `(subject, start, end)`.
    fn subject_runs(&self) -> Vec<(usize, usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for t in 1..=self.subjects.len() {
            if t == self.subjects.len() || self.subjects[t] != self.subjects[start] {
                runs.push((self.subjects[start], start, t));
                start = t;
            }
        }
        runs
    }
}

/// One segment: `channels × width` readings stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    data: Vec<f64>,
    channels: usize,
    width: usize,
    pub label: usize,
    pub subject: usize,
}

impl Window {
    pub fn new(data: Vec<f64>, channels: usize, width: usize, label: usize, subject: usize) -> Result<Self> {
        if channels == 0 || width == 0 {
            return Err(Error::Shape {
                expected: "non-empty window".into(),
                got: format!("{channels}x{width}"),
            });
        }
        if data.len() != channels * width {
            return Err(Error::Shape {
                expected: format!("{} readings", channels * width),
                got: data.len().to_string(),
            });
        }
        Ok(Self {
            data,
            channels,
            width,
            label,
            subject,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.width..(channel + 1) * self.width]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.width)
    }

    fn masked(&self, keep: &[usize]) -> Window {
        let mut data = Vec::with_capacity(keep.len() * self.width);
        for &c in keep {
            data.extend_from_slice(self.row(c));
        }
        Window {
            data,
            channels: keep.len(),
            width: self.width,
            label: self.label,
            subject: self.subject,
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Equally shaped windows with their channel names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    windows: Vec<Window>,
    channel_names: Vec<String>,
    width: usize,
    num_classes: usize,
}

impl WindowedDataset {
    pub fn new(windows: Vec<Window>, channel_names: Vec<String>, width: usize, num_classes: usize) -> Result<Self> {
        if channel_names.is_empty() || width == 0 {
            return Err(Error::Config("windowed dataset needs channels and width ≥ 1".into()));
        }
        for w in &windows {
            if w.shape() != (channel_names.len(), width) {
                return Err(Error::Shape {
                    expected: format!("{}x{}", channel_names.len(), width),
                    got: format!("{}x{}", w.channels, w.width),
                });
            }
            if w.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: w.label,
                    classes: num_classes,
                });
            }
        }
        Ok(Self {
            windows,
            channel_names,
            width,
            num_classes,
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn num_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn subjects(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.subject).collect()
    }

    /// Windows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            channel_names: self.channel_names.clone(),
            width: self.width,
            num_classes: self.num_classes,
        }
    }

    pub(crate) fn windows_mut(&mut self) -> &mut [Window] {
        &mut self.windows
    }
}

/// Cut every contiguous subject run into windows of `width` steps taken every
/// `stride` steps. The window label is the majority label of its span; ties
/// go to the tied label seen last in the window.
pub fn slide_windows(d: &Dataset, width: usize, stride: usize) -> Result<WindowedDataset> {
    if width == 0 || stride == 0 {
        return Err(Error::Config("window width and stride must be ≥ 1".into()));
    }
    let runs = d.subject_runs();
    let longest = runs.iter().map(|&(_, s, e)| e - s).max().unwrap_or(0);
    if width > longest {
        return Err(Error::WindowTooLong { window: width, longest });
    }

    let mut runs = runs;
    // stable: a subject split into several runs keeps its time order
    runs.sort_by_key(|&(subject, start, _)| (subject, start));

    let n = d.num_channels();
    let mut windows = Vec::new();
    let mut counts = vec![0usize; d.num_classes()];
    for (subject, run_start, run_end) in runs {
        let mut start = run_start;
        while start + width <= run_end {
            let mut data = Vec::with_capacity(n * width);
            for ch in d.channels() {
                data.extend_from_slice(&ch.samples[start..start + width]);
            }
            let span = &d.labels()[start..start + width];
            let label = majority_label(span, &mut counts);
            windows.push(Window {
                data,
                channels: n,
                width,
                label,
                subject,
            });
            start += stride;
        }
    }
    WindowedDataset::new(windows, d.channel_names(), width, d.num_classes())
}

fn majority_label(span: &[usize], counts: &mut [usize]) -> usize {
    counts.iter_mut().for_each(|c| *c = 0);
    for &l in span {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    *span
        .iter()
        .rev()
        .find(|&&l| counts[l] == best)
        .expect("span is non-empty")
}

/// Keep only the channels whose mask bit is set, preserving their order.
pub fn apply_mask(wd: &WindowedDataset, mask: &SensorMask) -> Result<WindowedDataset> {
    if mask.len() != wd.num_channels() {
        return Err(Error::Shape {
            expected: format!("mask of length {}", wd.num_channels()),
            got: mask.len().to_string(),
        });
    }
    let keep = mask.active_indices();
    if keep.is_empty() {
        return Err(Error::EmptySensorSubset);
    }
    Ok(WindowedDataset {
        windows: wd.windows.iter().map(|w| w.masked(&keep)).collect(),
        channel_names: keep.iter().map(|&c| wd.channel_names[c].clone()).collect(),
        width: wd.width,
        num_classes: wd.num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_subject(len: usize, labels: Vec<usize>) -> Dataset {
        let channels = vec![
            Channel {
                name: "a".into(),
                samples: (0..len).map(|t| t as f64).collect(),
            },
            Channel {
                name: "b".into(),
                samples: (0..len).map(|t| -(t as f64)).collect(),
            },
            Channel {
                name: "c".into(),
                samples: vec![1.0; len],
            },
        ];
        let classes = labels.iter().max().unwrap() + 1;
        Dataset::new(channels, labels, vec![0; len], 50.0, classes).unwrap()
    }

    #[test]
    fn exact_tiling() {
        let d = single_subject(10, vec![0; 10]);
        let wd = slide_windows(&d, 5, 5).unwrap();
        assert_eq!(wd.len(), 2);
        assert_eq!(wd.windows()[1].row(0), &[5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn overlapping_stride() {
        let d = single_subject(10, vec![0; 10]);
        let wd = slide_windows(&d, 4, 3).unwrap();
        let starts: Vec<f64> = wd.windows().iter().map(|w| w.row(0)[0]).collect();
        assert_eq!(starts, vec![0.0, 3.0, 6.0]);
    }

    #[test]
    fn majority_and_tie_rules() {
        let d = single_subject(5, vec![0, 0, 1, 1, 1]);
        assert_eq!(slide_windows(&d, 5, 1).unwrap().windows()[0].label, 1);

        let d = single_subject(4, vec![1, 1, 0, 0]);
        assert_eq!(slide_windows(&d, 4, 1).unwrap().windows()[0].label, 0);

        // tied labels 0 and 1, last step is 2: latest tied label wins
        let d = single_subject(5, vec![0, 1, 0, 1, 2]);
        assert_eq!(slide_windows(&d, 5, 1).unwrap().windows()[0].label, 1);
    }

    #[test]
    fn window_longer_than_data() {
        let d = single_subject(4, vec![0; 4]);
        assert!(matches!(
            slide_windows(&d, 5, 1),
            Err(Error::WindowTooLong { window: 5, longest: 4 })
        ));
    }

    #[test]
    fn windows_respect_subject_boundaries() {
        let channels = vec![Channel {
            name: "a".into(),
            samples: (0..9).map(f64::from).collect(),
        }];
        let d = Dataset::new(channels, vec![0; 9], vec![3, 3, 3, 3, 1, 1, 1, 1, 1], 1.0, 1).unwrap();
        let wd = slide_windows(&d, 3, 1).unwrap();
        // subject 1 run (len 5) → 3 windows, subject 3 run (len 4) → 2 windows
        assert_eq!(wd.subjects(), vec![1, 1, 1, 3, 3]);
        for w in wd.windows() {
            let first = w.row(0)[0] as usize;
            assert!(first + 3 <= 4 || first >= 4);
        }
    }

    #[test]
    fn mask_semantics() {
        let d = single_subject(6, vec![0; 6]);
        let wd = slide_windows(&d, 3, 3).unwrap();
        assert_eq!(apply_mask(&wd, &SensorMask::all(3)).unwrap(), wd);

        let m = SensorMask::from_bits(vec![true, false, true]).unwrap();
        let masked = apply_mask(&wd, &m).unwrap();
        assert_eq!(masked.channel_names(), &["a".to_string(), "c".to_string()]);
        assert_eq!(masked.windows()[0].row(0), wd.windows()[0].row(0));
        assert_eq!(masked.windows()[0].row(1), wd.windows()[0].row(2));
        assert_eq!(masked.labels(), wd.labels());
        assert_eq!(masked.subjects(), wd.subjects());
    }

    #[test]
    fn mask_errors() {
        let d = single_subject(6, vec![0; 6]);
        let wd = slide_windows(&d, 3, 3).unwrap();
        assert!(SensorMask::from_bits(vec![false; 3]).is_err());
        let short = SensorMask::from_bits(vec![true, true]).unwrap();
        assert!(matches!(apply_mask(&wd, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn dataset_invariants() {
        assert!(matches!(
            Dataset::new(vec![], vec![], vec![], 1.0, 1),
            Err(Error::EmptyDataset)
        ));
        let ch = Channel {
            name: "a".into(),
            samples: vec![0.0; 2],
        };
        assert!(Dataset::new(vec![ch.clone()], vec![0, 2], vec![0, 0], 1.0, 2).is_err());
        assert!(Dataset::new(vec![ch], vec![0, 1], vec![0], 1.0, 2).is_err());
    }

    fn brute_force_count(len: usize, width: usize, stride: usize) -> usize {
        (0..len).filter(|s| s % stride == 0 && s + width <= len).count()
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(len in 1usize..200, width in 1usize..50, stride in 1usize..20) {
            prop_assume!(width <= len);
            let d = single_subject(len, vec![0; len]);
            let wd = slide_windows(&d, width, stride).unwrap();
            prop_assert_eq!(wd.len(), brute_force_count(len, width, stride));
            prop_assert_eq!(wd.len(), (len - width) / stride + 1);
        }

        #[test]
        fn nested_masks_compose(outer in proptest::collection::vec(any::<bool>(), 5), inner_seed in any::<u64>()) {
            prop_assume!(outer.iter().any(|&b| b));
            let channels = (0..5).map(|c| Channel { name: format!("c{c}"), samples: (0..8).map(|t| (c * 10 + t) as f64).collect() }).collect();
            let d = Dataset::new(channels, vec![0; 8], vec![0; 8], 1.0, 1).unwrap();
            let wd = slide_windows(&d, 4, 2).unwrap();
            let outer = SensorMask::from_bits(outer).unwrap();
            let n_inner = outer.count_ones();
            let mut inner: Vec<bool> = (0..n_inner).map(|i| (inner_seed >> i) & 1 == 1).collect();
            inner[0] = true;
            let inner = SensorMask::from_bits(inner).unwrap();

            let twice = apply_mask(&apply_mask(&wd, &outer).unwrap(), &inner).unwrap();
            let composed = outer.compose(&inner).unwrap();
            prop_assert_eq!(twice, apply_mask(&wd, &composed).unwrap());
        }
    }
}
