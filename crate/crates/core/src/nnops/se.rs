use super::ops::{linear, sigmoid, Linear};
use super::{global_avg_pool, Tensor};
use crate::{Error, Result};

/// Squeeze-and-excitation channel attention.
///
/// `s = sigmoid(fc2(relu(fc1(gap(x)))))`, then channel `c` of the input is
/// scaled by `s[c]`. The bottleneck width is `ceil(C / reduction)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeBlock {
    pub channels: usize,
    pub reduction: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SeBlock {
    pub const DEFAULT_REDUCTION: usize = 16;

    pub fn bottleneck(channels: usize, reduction: usize) -> usize {
        channels.div_ceil(reduction)
    }

    pub fn new(channels: usize, reduction: usize, fc1: Linear, fc2: Linear) -> Result<Self> {
        if channels == 0 || reduction == 0 {
            return Err(Error::input("SE channels and reduction must be positive"));
        }
        let m = Self::bottleneck(channels, reduction);
        let shapes_ok = fc1.in_features() == channels
            && fc1.out_features() == m
            && fc2.in_features() == m
            && fc2.out_features() == channels
            && fc1.bias.is_some()
            && fc2.bias.is_some();
        if !shapes_ok {
            return Err(Error::input(format!(
                "SE weights inconsistent with C={channels}, r={reduction} (bottleneck {m})"
            )));
        }
        Ok(Self {
            channels,
            reduction,
            fc1,
            fc2,
        })
    }

    /// All weights and biases zero, so every channel gate is exactly 0.5.
    pub fn zeroed(channels: usize, reduction: usize) -> Result<Self> {
        let m = Self::bottleneck(channels, reduction.max(1));
        let fc1 = Linear::new(Tensor::zeros(vec![m, channels]), Some(vec![0.0; m]))?;
        let fc2 = Linear::new(Tensor::zeros(vec![channels, m]), Some(vec![0.0; channels]))?;
        Self::new(channels, reduction, fc1, fc2)
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count()
    }

    /// Per-channel gates for an input.
    pub fn gates(&self, x: &Tensor) -> Result<Vec<f32>> {
        let (c, _, _) = x.chw()?;
        if c != self.channels {
            return Err(Error::input(format!(
                "SE block built for {} channels, input has {c}",
                self.channels
            )));
        }
        let squeezed = global_avg_pool(x)?;
        let hidden: Vec<f32> = linear(&squeezed, &self.fc1)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        Ok(linear(&hidden, &self.fc2)?.into_iter().map(sigmoid).collect())
    }
}

pub fn se_block(x: &Tensor, block: &SeBlock) -> Result<Tensor> {
    let gates = block.gates(x)?;
    let (_, h, w) = x.chw()?;
    let mut out = x.clone();
    for (plane, &g) in out.data_mut().chunks_exact_mut(h * w).zip(&gates) {
        plane.iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}
