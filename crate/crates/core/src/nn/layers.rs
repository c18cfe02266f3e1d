//! Layer plan, forward pass with cached activations, and backprop.

use super::{Architecture, LayerView, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    /// Weights `[outputs][inputs]`, then bias.
    Dense {
        inputs: usize,
        outputs: usize,
        offset: usize,
    },
    /// Valid 1D convolution, weights `[out_ch][in_ch][kernel]`, then bias.
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        in_len: usize,
        offset: usize,
    },
    Relu {
        size: usize,
    },
    MaxPool {
        channels: usize,
        in_len: usize,
        size: usize,
    },
}

impl Op {
    fn input_size(&self) -> usize {
        match *self {
            Op::Dense { inputs, .. } => inputs,
            Op::Conv { in_ch, in_len, .. } => in_ch * in_len,
            Op::Relu { size } => size,
            Op::MaxPool {
                channels, in_len, ..
            } => channels * in_len,
        }
    }

    fn output_size(&self) -> usize {
        match *self {
            Op::Dense { outputs, .. } => outputs,
            Op::Conv {
                out_ch,
                kernel,
                in_len,
                ..
            } => out_ch * (in_len - kernel + 1),
            Op::Relu { size } => size,
            Op::MaxPool {
                channels,
                in_len,
                size,
            } => channels * (in_len / size),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plan {
    pub ops: Vec<Op>,
    pub num_params: usize,
}

pub(crate) struct Workspace {
    acts: Vec<Vec<f64>>,
    pool_idx: Vec<Vec<usize>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Plan {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        if cfg.input_channels == 0 || cfg.input_width == 0 || cfg.num_classes == 0 {
            return bad(format!(
                "model input {}x{} with {} classes: all sizes must be ≥ 1",
                cfg.input_channels, cfg.input_width, cfg.num_classes
            ));
        }
        let mut ops = Vec::new();
        let mut offset = 0;

        let mut features;
        let hidden = match &cfg.architecture {
            Architecture::Mlp { hidden } => {
                features = cfg.input_channels * cfg.input_width;
                hidden
            }
            Architecture::Cnn1d { conv, hidden } => {
                if conv.is_empty() {
                    return bad("cnn1d needs at least one conv block".into());
                }
                let mut ch = cfg.input_channels;
                let mut len = cfg.input_width;
                for (i, block) in conv.iter().enumerate() {
                    if block.filters == 0 || block.kernel == 0 || block.pool == 0 {
                        return bad(format!("conv block {i}: filters, kernel and pool must be ≥ 1"));
                    }
                    if block.kernel > len {
                        return bad(format!("conv block {i}: kernel {} wider than input length {len}", block.kernel));
                    }
                    ops.push(Op::Conv {
                        in_ch: ch,
                        out_ch: block.filters,
                        kernel: block.kernel,
                        in_len: len,
                        offset,
                    });
                    offset += block.filters * ch * block.kernel + block.filters;
                    ch = block.filters;
                    len = len - block.kernel + 1;
                    ops.push(Op::Relu { size: ch * len });
                    if block.pool > 1 {
                        if len / block.pool == 0 {
                            return bad(format!("conv block {i}: pool {} wider than feature length {len}", block.pool));
                        }
                        ops.push(Op::MaxPool {
                            channels: ch,
                            in_len: len,
                            size: block.pool,
                        });
                        len /= block.pool;
                    }
                }
                features = ch * len;
                hidden
            }
        };
        for &h in hidden.iter().chain(std::iter::once(&cfg.num_classes)) {
            if h == 0 {
                return bad("hidden layer sizes must be ≥ 1".into());
            }
            ops.push(Op::Dense {
                inputs: features,
                outputs: h,
                offset,
            });
            offset += features * h + h;
            features = h;
            ops.push(Op::Relu { size: h });
        }
        // no activation after the output layer
        ops.pop();
        Ok(Plan {
            ops,
            num_params: offset,
        })
    }

    pub fn views(&self) -> Vec<LayerView> {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                Op::Dense {
                    inputs,
                    outputs,
                    offset,
                } => {
                    let w = offset + inputs * outputs;
                    Some(LayerView {
                        weights: offset..w,
                        bias: w..w + outputs,
                    })
                }
                Op::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    offset,
                    ..
                } => {
                    let w = offset + out_ch * in_ch * kernel;
                    Some(LayerView {
                        weights: offset..w,
                        bias: w..w + out_ch,
                    })
                }
                _ => None,
            })
            .collect()
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        acts.push(vec![0.0; self.ops[0].input_size()]);
        for op in &self.ops {
            acts.push(vec![0.0; op.output_size()]);
        }
        let widest = acts.iter().map(Vec::len).max().unwrap_or(0);
        Workspace {
            acts,
            pool_idx: self
                .ops
                .iter()
                .map(|op| match op {
                    Op::MaxPool { .. } => vec![0; op.output_size()],
                    _ => Vec::new(),
                })
                .collect(),
            grad_a: vec![0.0; widest],
            grad_b: vec![0.0; widest],
        }
    }

    /// Runs the network on `input`, caching every activation in `ws`.
    /// Returns the logits.
    pub fn forward<'w>(&self, params: &[f64], input: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        ws.acts[0].copy_from_slice(input);
        for (i, op) in self.ops.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let x = &head[i];
            let y = &mut tail[0];
            match *op {
                Op::Dense {
                    inputs,
                    outputs,
                    offset,
                } => {
                    let w = &params[offset..offset + inputs * outputs];
                    let b = &params[offset + inputs * outputs..offset + inputs * outputs + outputs];
                    for o in 0..outputs {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        y[o] = b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                    }
                }
                Op::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    in_len,
                    offset,
                } => {
                    let out_len = in_len - kernel + 1;
                    let wlen = out_ch * in_ch * kernel;
                    let w = &params[offset..offset + wlen];
                    let b = &params[offset + wlen..offset + wlen + out_ch];
                    for o in 0..out_ch {
                        let out = &mut y[o * out_len..(o + 1) * out_len];
                        out.iter_mut().for_each(|v| *v = b[o]);
                        for c in 0..in_ch {
                            let xr = &x[c * in_len..(c + 1) * in_len];
                            let wr = &w[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
                            for (t, v) in out.iter_mut().enumerate() {
                                *v += wr.iter().zip(&xr[t..t + kernel]).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
                Op::Relu { .. } => {
                    for (o, &v) in y.iter_mut().zip(x.iter()) {
                        *o = v.max(0.0);
                    }
                }
                Op::MaxPool {
                    channels,
                    in_len,
                    size,
                } => {
                    let out_len = in_len / size;
                    let idx = &mut ws.pool_idx[i];
                    for c in 0..channels {
                        for j in 0..out_len {
                            let start = c * in_len + j * size;
                            let mut best = start;
                            for k in start + 1..start + size {
                                if x[k] > x[best] {
                                    best = k;
                                }
                            }
                            y[c * out_len + j] = x[best];
                            idx[c * out_len + j] = best;
                        }
                    }
                }
            }
        }
        ws.acts.last().expect("plan has ops")
    }

    /// Backprop `delta` (dL/dlogits) through the activations cached by the
    /// last [`Plan::forward`] call, adding parameter gradients into `grad`.
    pub fn backward(&self, params: &[f64], delta: &[f64], ws: &mut Workspace, grad: &mut [f64]) {
        let Workspace {
            acts,
            pool_idx,
            grad_a,
            grad_b,
        } = ws;
        let mut g_out: &mut Vec<f64> = grad_a;
        let mut g_in: &mut Vec<f64> = grad_b;
        g_out[..delta.len()].copy_from_slice(delta);

        for (i, op) in self.ops.iter().enumerate().rev() {
            let x = &acts[i];
            let need_input_grad = i > 0;
            let n_in = op.input_size();
            let n_out = op.output_size();
            let go = &g_out[..n_out];
            let gi = &mut g_in[..n_in];
            match *op {
                Op::Dense {
                    inputs,
                    outputs,
                    offset,
                } => {
                    let wlen = inputs * outputs;
                    let (gw, gb) = grad[offset..offset + wlen + outputs].split_at_mut(wlen);
                    let w = &params[offset..offset + wlen];
                    if need_input_grad {
                        gi.iter_mut().for_each(|v| *v = 0.0);
                    }
                    for o in 0..outputs {
                        let g = go[o];
                        gb[o] += g;
                        if g == 0.0 {
                            continue;
                        }
                        let gwr = &mut gw[o * inputs..(o + 1) * inputs];
                        for (a, &v) in gwr.iter_mut().zip(x.iter()) {
                            *a += g * v;
                        }
                        if need_input_grad {
                            let wr = &w[o * inputs..(o + 1) * inputs];
                            for (a, &wv) in gi.iter_mut().zip(wr) {
                                *a += g * wv;
                            }
                        }
                    }
                }
                Op::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    in_len,
                    offset,
                } => {
                    let out_len = in_len - kernel + 1;
                    let wlen = out_ch * in_ch * kernel;
                    let (gw, gb) = grad[offset..offset + wlen + out_ch].split_at_mut(wlen);
                    let w = &params[offset..offset + wlen];
                    if need_input_grad {
                        gi.iter_mut().for_each(|v| *v = 0.0);
                    }
                    for o in 0..out_ch {
                        let gor = &go[o * out_len..(o + 1) * out_len];
                        gb[o] += gor.iter().sum::<f64>();
                        for c in 0..in_ch {
                            let xr = &x[c * in_len..(c + 1) * in_len];
                            let base = (o * in_ch + c) * kernel;
                            for k in 0..kernel {
                                gw[base + k] += gor.iter().zip(&xr[k..k + out_len]).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if need_input_grad {
                                let gir = &mut gi[c * in_len..(c + 1) * in_len];
                                for (t, &g) in gor.iter().enumerate() {
                                    for k in 0..kernel {
                                        gir[t + k] += g * w[base + k];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Relu { .. } => {
                    for ((a, &g), &v) in gi.iter_mut().zip(go).zip(x.iter()) {
                        *a = if v > 0.0 { g } else { 0.0 };
                    }
                }
                Op::MaxPool { .. } => {
                    gi.iter_mut().for_each(|v| *v = 0.0);
                    for (&g, &src) in go.iter().zip(&pool_idx[i]) {
                        gi[src] += g;
                    }
                }
            }
            std::mem::swap(&mut g_out, &mut g_in);
        }
    }
}
