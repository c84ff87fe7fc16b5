use super::Tensor;
use crate::{Error, Result};

/// 2-D convolution parameters. `weight` is `[C_out, C_in / groups, k_h, k_w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Option<Vec<f32>>, stride: usize, padding: usize) -> Result<Self> {
        let conv = Self {
            weight,
            bias,
            stride,
            padding,
            groups: 1,
        };
        conv.validate()?;
        Ok(conv)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    fn validate(&self) -> Result<()> {
        if self.weight.shape().len() != 4 {
            return Err(Error::input("conv weight must be rank 4"));
        }
        if self.stride == 0 || self.groups == 0 {
            return Err(Error::input("conv stride and groups must be positive"));
        }
        if !self.out_channels().is_multiple_of(self.groups) {
            return Err(Error::input("output channels not divisible by groups"));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_channels() {
                return Err(Error::input(format!(
                    "conv bias has {} entries for {} output channels",
                    b.len(),
                    self.out_channels()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

/// Output extent of a strided window, `None` when the window does not fit.
pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Zero-padded cross-correlation of a `[C_in, H, W]` input.
pub fn conv2d(x: &Tensor, conv: &Conv2d) -> Result<Tensor> {
    conv.validate()?;
    let (c_in, h, w) = x.chw()?;
    if c_in != conv.in_channels() {
        return Err(Error::input(format!(
            "conv expects {} input channels, got {c_in}",
            conv.in_channels()
        )));
    }
    let (kh, kw) = conv.kernel();
    let (s, p) = (conv.stride, conv.padding);
    let (h_out, w_out) = match (conv_out_dim(h, kh, s, p), conv_out_dim(w, kw, s, p)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::input("conv kernel larger than padded input")),
    };
    let c_out = conv.out_channels();
    let in_per_group = c_in / conv.groups;
    let out_per_group = c_out / conv.groups;
    let xd = x.data();
    let wd = conv.weight.data();

    let mut out = vec![0f32; c_out * h_out * w_out];
    for oc in 0..c_out {
        let g = oc / out_per_group;
        let bias = conv.bias.as_ref().map_or(0.0, |b| b[oc] as f64);
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bias;
                for icg in 0..in_per_group {
                    let ic = g * in_per_group + icg;
                    for ky in 0..kh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xv = xd[(ic * h + iy as usize) * w + ix as usize];
                            let wv = wd[((oc * in_per_group + icg) * kh + ky) * kw + kx];
                            acc += xv as f64 * wv as f64;
                        }
                    }
                }
                out[(oc * h_out + oy) * w_out + ox] = acc as f32;
            }
        }
    }
    Tensor::new(vec![c_out, h_out, w_out], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Silu,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Sigmoid => sigmoid(v),
            Activation::Silu => v * sigmoid(v),
            Activation::Relu => v.max(0.0),
        }
    }
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
    x.map(|v| kind.apply(v))
}

/// Mean over the spatial axes of a `[C, H, W]` tensor.
pub fn global_avg_pool(x: &Tensor) -> Result<Vec<f32>> {
    let (c, h, w) = x.chw()?;
    let plane = h * w;
    Ok(x.data()
        .chunks_exact(plane)
        .take(c)
        .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect())
}

/// Fully connected layer; `weight` is `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Option<Vec<f32>>) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::input("linear weight must be rank 2"));
        }
        if let Some(b) = &bias {
            if b.len() != weight.shape()[0] {
                return Err(Error::input("linear bias length mismatch"));
            }
        }
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }
}

pub fn linear(x: &[f32], layer: &Linear) -> Result<Vec<f32>> {
    let (n_out, n_in) = (layer.out_features(), layer.in_features());
    if x.len() != n_in {
        return Err(Error::input(format!("linear expects {n_in} inputs, got {}", x.len())));
    }
    let w = layer.weight.data();
    Ok((0..n_out)
        .map(|o| {
            let dot: f64 = w[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            let b = layer.bias.as_ref().map_or(0.0, |b| b[o] as f64);
            (dot + b) as f32
        })
        .collect())
}
