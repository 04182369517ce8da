use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`; ReLU uses 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            _ => Err(Error::Validation(format!("unknown activation code {c}"))),
        }
    }
}

/// One layer of a sequential network.
///
/// Convolutions are "valid" over the time axis of a `(time, channels)`
/// input. Weights are stored before biases; convolution weights are laid
/// out `[out][in][k]`, dense weights `[out][in]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Linear encoder over features; its weights carry an L1 penalty.
    Conv1dBottleneck {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        l1_lambda: f64,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Dropout {
        p: f64,
    },
    Activation {
        act: Activation,
    },
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        match *self {
            LayerSpec::Conv1dBottleneck {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => in_channels * out_channels * kernel,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs,
            _ => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Conv1dBottleneck { out_channels, .. } | LayerSpec::Conv1d { out_channels, .. } => out_channels,
            LayerSpec::Dense { outputs, .. } => outputs,
            _ => 0,
        }
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.bias_len()
    }

    /// `(fan_in, fan_out)` for Glorot initialization.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1dBottleneck {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => (in_channels * kernel, out_channels * kernel),
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            _ => (0, 0),
        }
    }

    /// Output shape for an input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv1dBottleneck {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => match input {
                &[len, ch] if ch == in_channels && len >= kernel && kernel >= 1 => Ok(vec![len - kernel + 1, out_channels]),
                _ => Err(Error::Shape(format!(
                    "conv1d({in_channels}->{out_channels}, k={kernel}) cannot take input {input:?}"
                ))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => match input {
                &[n] if n == inputs => Ok(vec![outputs]),
                _ => Err(Error::Shape(format!("dense({inputs}->{outputs}) cannot take input {input:?}"))),
            },
            LayerSpec::Dropout { .. } | LayerSpec::Activation { .. } => Ok(input.to_vec()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                Err(Error::Validation(format!("dropout rate {p} outside [0, 1)")))
            }
            LayerSpec::Conv1dBottleneck { l1_lambda, .. } if !(l1_lambda >= 0.0) => {
                Err(Error::Validation(format!("L1 weight {l1_lambda} is negative")))
            }
            _ => Ok(()),
        }
    }
}

/// Default architecture knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub bottleneck_channels: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub hidden: usize,
    /// Dropout rate before each dense layer; 0 omits the dropout layers.
    pub dropout: f64,
    pub l1_lambda: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            bottleneck_channels: 8,
            conv_channels: 8,
            conv_kernel: 3,
            hidden: 32,
            dropout: 0.2,
            l1_lambda: 1e-3,
        }
    }
}

impl Architecture {
    /// bottleneck (k=1) -> conv1d -> ReLU -> flatten -> (dropout) -> dense
    /// -> ReLU -> (dropout) -> dense(1). Dropout layers appear only when the rate is positive.
    pub fn layers(&self, seq_len: usize, features: usize) -> Result<Vec<LayerSpec>> {
        let kernel = self.conv_kernel.min(seq_len).max(1);
        let flat = (seq_len - kernel + 1) * self.conv_channels;
        let mut out = vec![
            LayerSpec::Conv1dBottleneck {
                in_channels: features,
                out_channels: self.bottleneck_channels,
                kernel: 1,
                l1_lambda: self.l1_lambda,
            },
            LayerSpec::Conv1d {
                in_channels: self.bottleneck_channels,
                out_channels: self.conv_channels,
                kernel,
            },
            LayerSpec::Activation { act: Activation::Relu },
            LayerSpec::Flatten,
        ];
        if self.dropout > 0.0 {
            out.push(LayerSpec::Dropout { p: self.dropout });
        }
        out.push(LayerSpec::Dense {
            inputs: flat,
            outputs: self.hidden,
        });
        out.push(LayerSpec::Activation { act: Activation::Relu });
        if self.dropout > 0.0 {
            out.push(LayerSpec::Dropout { p: self.dropout });
        }
        out.push(LayerSpec::Dense {
            inputs: self.hidden,
            outputs: 1,
        });
        for l in &out {
            l.validate()?;
        }
        Ok(out)
    }
}

pub(crate) fn conv_forward(x: &[f64], len: usize, cin: usize, cout: usize, k: usize, params: &[f64]) -> Vec<f64> {
    let (w, b) = params.split_at(cin * cout * k);
    let lout = len - k + 1;
    let mut y = vec![0.0; lout * cout];
    for t in 0..lout {
        for o in 0..cout {
            let mut s = b[o];
            let wo = &w[o * cin * k..(o + 1) * cin * k];
            for i in 0..cin {
                for j in 0..k {
                    s += wo[i * k + j] * x[(t + j) * cin + i];
                }
            }
            y[t * cout + o] = s;
        }
    }
    y
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    gy: &[f64],
    len: usize,
    cin: usize,
    cout: usize,
    k: usize,
    params: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let nw = cin * cout * k;
    let w = &params[..nw];
    let lout = len - k + 1;
    let mut gx = if need_input_grad { vec![0.0; len * cin] } else { Vec::new() };
    let (gw, gb) = grad.split_at_mut(nw);
    for t in 0..lout {
        for o in 0..cout {
            let g = gy[t * cout + o];
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            let base = o * cin * k;
            for i in 0..cin {
                for j in 0..k {
                    let xi = (t + j) * cin + i;
                    gw[base + i * k + j] += g * x[xi];
                    if need_input_grad {
                        gx[xi] += g * w[base + i * k + j];
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn dense_forward(x: &[f64], nin: usize, nout: usize, params: &[f64]) -> Vec<f64> {
    let (w, b) = params.split_at(nin * nout);
    (0..nout)
        .map(|o| b[o] + w[o * nin..(o + 1) * nin].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

pub(crate) fn dense_backward(x: &[f64], gy: &[f64], nin: usize, nout: usize, params: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let w = &params[..nin * nout];
    let mut gx = vec![0.0; nin];
    let (gw, gb) = grad.split_at_mut(nin * nout);
    for o in 0..nout {
        let g = gy[o];
        gb[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = o * nin;
        for i in 0..nin {
            gw[row + i] += g * x[i];
            gx[i] += g * w[row + i];
        }
    }
    gx
}
