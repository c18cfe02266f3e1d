use serde::{Deserialize, Serialize};

use super::WindowedDataset;
use crate::error::{Error, Result};

/// Per-channel z-score statistics, fit on training windows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ChannelScaler {
    pub fn fit(train: &WindowedDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = train.num_channels();
        let mut mean = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let count = (train.len() * train.width()) as f64;
        for w in train.windows() {
            for c in 0..n {
                for &v in w.row(c) {
                    mean[c] += v;
                    sq[c] += v * v;
                }
            }
        }
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= count;
                let var = (s / count - *m * *m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, wd: &WindowedDataset) -> Result<WindowedDataset> {
        if wd.num_channels() != self.mean.len() {
            return Err(Error::Shape {
                expected: format!("{} channels", self.mean.len()),
                got: wd.num_channels().to_string(),
            });
        }
        let mut out = wd.clone();
        let width = out.width();
        for w in out.windows_mut() {
            for (i, v) in w.data_mut().iter_mut().enumerate() {
                let c = i / width;
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }
}
