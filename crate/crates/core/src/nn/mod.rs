//! Small trainable classifiers over `channels × width` windows.
//!
//! Two architectures are provided: an MLP on the flattened window and a 1D
//! CNN (valid convolution → ReLU → max-pool blocks, then dense layers).
//! Parameters live in one flat vector; [`Classifier::layout`] gives the
//! per-layer weight/bias views into it. The output is always a softmax
//! over `num_classes`.

mod io;
mod layers;
mod train;

pub use io::{load_model, save_model, ModelFile, MODEL_FORMAT, MODEL_VERSION};
pub use train::{train, EpochRecord, TrainConfig, MIN_IMPROVEMENT};

use std::ops::Range;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Window, WindowedDataset};
use crate::error::{Error, Result};
use crate::seed;
use layers::{Op, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    /// Non-overlapping max-pool width; 1 disables pooling.
    #[serde(default = "one")]
    pub pool: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp {
        #[serde(default)]
        hidden: Vec<usize>,
    },
    Cnn1d {
        conv: Vec<ConvBlock>,
        #[serde(default)]
        hidden: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_channels: usize,
    pub input_width: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, input_channels: usize, input_width: usize, num_classes: usize) -> Self {
        Self {
            architecture,
            input_channels,
            input_width,
            num_classes,
        }
    }

    /// Same architecture with a different input channel count.
    pub fn with_input_channels(&self, input_channels: usize) -> Self {
        Self {
            input_channels,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        Plan::build(self).map(|_| ())
    }

    pub fn num_parameters(&self) -> Result<usize> {
        Plan::build(self).map(|p| p.num_params)
    }
}

/// Weight and bias ranges of one parameterised layer inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerView {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    config: ModelConfig,
    params: Vec<f64>,
    history: Vec<EpochRecord>,
    plan: Plan,
}

impl Classifier {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let plan = Plan::build(&config)?;
        let mut params = vec![0.0; plan.num_params];
        let mut rng = seed::rng(seed);
        for op in &plan.ops {
            let (weights, fan_in, fan_out) = match *op {
                Op::Dense {
                    inputs,
                    outputs,
                    offset,
                } => (offset..offset + inputs * outputs, inputs, outputs),
                Op::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    offset,
                    ..
                } => (offset..offset + out_ch * in_ch * kernel, in_ch * kernel, out_ch * kernel),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for w in &mut params[weights] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Self {
            config,
            params,
            history: Vec::new(),
            plan,
        })
    }

    pub fn from_parameters(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        let plan = Plan::build(&config)?;
        if params.len() != plan.num_params {
            return Err(Error::Shape {
                expected: format!("{} parameters", plan.num_params),
                got: params.len().to_string(),
            });
        }
        Ok(Self {
            config,
            params,
            history: Vec::new(),
            plan,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: format!("{} parameters", self.params.len()),
                got: params.len().to_string(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn layout(&self) -> Vec<LayerView> {
        self.plan.views()
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.config.input_channels, self.config.input_width)
    }

    fn check_window(&self, w: &Window) -> Result<()> {
        if w.shape() != self.input_shape() {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.config.input_channels, self.config.input_width),
                got: format!("{}x{}", w.channels(), w.width()),
            });
        }
        Ok(())
    }

    /// Class probabilities for one window.
    pub fn forward(&self, w: &Window) -> Result<Vec<f64>> {
        self.check_window(w)?;
        let mut ws = self.plan.workspace();
        let logits = self.plan.forward(&self.params, w.data(), &mut ws);
        Ok(softmax(logits))
    }

    pub fn predict(&self, w: &Window) -> Result<usize> {
        self.forward(w).map(|p| argmax(&p))
    }

    /// Argmax prediction per window; ties go to the lowest class id.
    pub fn predict_batch(&self, wd: &WindowedDataset) -> Result<Vec<usize>> {
        let mut ws = self.plan.workspace();
        wd.windows()
            .iter()
            .map(|w| {
                self.check_window(w)?;
                Ok(argmax(self.plan.forward(&self.params, w.data(), &mut ws)))
            })
            .collect()
    }

    /// Mean softmax cross-entropy over `batch` and its gradient.
    pub fn loss_and_grad(&self, batch: &[Window]) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<&Window> = batch.iter().collect();
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate(&refs, &mut grad)?;
        Ok((loss, grad))
    }

    /// Mean loss over `batch`, writing the mean gradient into `grad`.
    pub(crate) fn accumulate(&self, batch: &[&Window], grad: &mut [f64]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let c = self.config.num_classes;
        for w in batch {
            self.check_window(w)?;
            if w.label >= c {
                return Err(Error::LabelOutOfRange {
                    label: w.label,
                    classes: c,
                });
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ws = self.plan.workspace();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut delta = vec![0.0; c];
        for w in batch {
            let logits = self.plan.forward(&self.params, w.data(), &mut ws);
            let (loss, probs) = cross_entropy(logits, w.label);
            total += loss;
            for (k, d) in delta.iter_mut().enumerate() {
                *d = scale * (probs[k] - if k == w.label { 1.0 } else { 0.0 });
            }
            self.plan.backward(&self.params, &delta, &mut ws, grad);
        }
        Ok(total * scale)
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, wd: &WindowedDataset) -> Result<f64> {
        if wd.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ws = self.plan.workspace();
        let mut total = 0.0;
        for w in wd.windows() {
            self.check_window(w)?;
            if w.label >= self.config.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: w.label,
                    classes: self.config.num_classes,
                });
            }
            total += cross_entropy(self.plan.forward(&self.params, w.data(), &mut ws), w.label).0;
        }
        Ok(total / wd.len() as f64)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let probs = logits.iter().map(|&z| (z - log_norm).exp()).collect();
    (log_norm - logits[label], probs)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mlp(hidden: Vec<usize>, channels: usize, width: usize, classes: usize) -> ModelConfig {
        ModelConfig::new(Architecture::Mlp { hidden }, channels, width, classes)
    }

    fn random_window(channels: usize, width: usize, label: usize, seed: u64) -> Window {
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let data = (0..channels * width).map(|_| rng.random_range(-2.0..2.0)).collect();
        Window::new(data, channels, width, label, 0).unwrap()
    }

    #[test]
    fn mlp_parameter_count() {
        let cfg = mlp(vec![4], 2, 4, 3);
        assert_eq!(cfg.num_parameters().unwrap(), 8 * 4 + 4 + 4 * 3 + 3);
        assert_eq!(Classifier::init(cfg, 0).unwrap().num_parameters(), 51);
    }

    #[test]
    fn cnn_parameter_count() {
        let cfg = ModelConfig::new(
            Architecture::Cnn1d {
                conv: vec![ConvBlock {
                    filters: 3,
                    kernel: 3,
                    pool: 2,
                }],
                hidden: vec![],
            },
            2,
            10,
            4,
        );
        // conv: 3·2·3 + 3, length 10 → 8 → pool 4, dense 12 → 4
        assert_eq!(cfg.num_parameters().unwrap(), 18 + 3 + 12 * 4 + 4);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = mlp(vec![4], 2, 4, 3);
        let a = Classifier::init(cfg.clone(), 7).unwrap();
        let b = Classifier::init(cfg.clone(), 7).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_ne!(a.parameters(), Classifier::init(cfg, 8).unwrap().parameters());
        for view in a.layout() {
            assert!(a.parameters()[view.bias].iter().all(|&b| b == 0.0));
            let limit = (6.0f64 / 12.0).sqrt().max((6.0f64 / 7.0).sqrt());
            assert!(a.parameters()[view.weights].iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(mlp(vec![0], 2, 4, 3).validate().is_err());
        assert!(mlp(vec![], 2, 4, 0).validate().is_err());
        let wide_kernel = ModelConfig::new(
            Architecture::Cnn1d {
                conv: vec![ConvBlock {
                    filters: 2,
                    kernel: 5,
                    pool: 1,
                }],
                hidden: vec![],
            },
            1,
            4,
            2,
        );
        assert!(matches!(Classifier::init(wide_kernel, 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_final_layer_gives_uniform() {
        let cfg = mlp(vec![5], 2, 3, 4);
        let mut m = Classifier::init(cfg, 1).unwrap();
        let last = m.layout().pop().unwrap();
        let mut p = m.parameters().to_vec();
        p[last.weights].iter_mut().for_each(|w| *w = 0.0);
        m.set_parameters(p).unwrap();
        let probs = m.forward(&random_window(2, 3, 0, 3)).unwrap();
        assert!(probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));
        // uniform output: every window predicts class 0
        let wd = WindowedDataset::new(
            (0..5).map(|s| random_window(2, 3, 0, s)).collect(),
            vec!["a".into(), "b".into()],
            3,
            4,
        )
        .unwrap();
        assert_eq!(m.predict_batch(&wd).unwrap(), vec![0; 5]);
        let (loss, _) = m.loss_and_grad(&[random_window(2, 3, 2, 9)]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_forward() {
        // 2 inputs → 2 hidden (ReLU) → 2 classes
        let cfg = mlp(vec![2], 1, 2, 2);
        // dense weights are stored [out][in]
        let params = vec![
            1.0, -1.0, 0.5, 0.5, // hidden weights
            0.0, -1.0, // hidden bias
            2.0, 0.0, -1.0, 1.0, // output weights
            0.1, 0.0, // output bias
        ];
        let m = Classifier::from_parameters(cfg, params).unwrap();
        let x = Window::new(vec![3.0, 1.0], 1, 2, 0, 0).unwrap();
        // h = relu([3-1+0, 1.5+0.5-1]) = [2, 1]
        // z = [2·2+0·1+0.1, -2+1+0] = [4.1, -1]
        let e0 = 4.1f64.exp();
        let e1 = (-1.0f64).exp();
        let expected = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let p = m.forward(&x).unwrap();
        assert!((p[0] - expected[0]).abs() < 1e-12);
        assert!((p[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn shape_and_label_errors() {
        let m = Classifier::init(mlp(vec![3], 2, 3, 2), 0).unwrap();
        assert!(matches!(m.forward(&random_window(3, 3, 0, 0)), Err(Error::Shape { .. })));
        assert!(matches!(
            m.loss_and_grad(&[random_window(2, 3, 2, 0)]),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(matches!(m.loss_and_grad(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn duplicated_batch_has_same_loss() {
        let m = Classifier::init(mlp(vec![3], 2, 3, 3), 5).unwrap();
        let w = random_window(2, 3, 1, 4);
        let (single, g1) = m.loss_and_grad(std::slice::from_ref(&w)).unwrap();
        let (double, g2) = m.loss_and_grad(&[w.clone(), w]).unwrap();
        assert!((single - double).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_normalized(seed in any::<u64>(), cnn in any::<bool>()) {
            let arch = if cnn {
                Architecture::Cnn1d { conv: vec![ConvBlock { filters: 3, kernel: 2, pool: 2 }], hidden: vec![4] }
            } else {
                Architecture::Mlp { hidden: vec![6] }
            };
            let m = Classifier::init(ModelConfig::new(arch, 3, 6, 5), seed).unwrap();
            let p = m.forward(&random_window(3, 6, 0, seed ^ 1)).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&q| q >= 0.0));
        }
    }
}
