use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{activation, conv2d, Activation, Conv2d, Linear};
use super::weights::WeightEntry;
use super::{se_block, Anchor, SeBlock, Tensor};
use crate::augment::Image;
use crate::costmodel::{Graph, Node, NodeKind};
use crate::{Error, Result};

/// Layout of the miniature single-scale detector.
///
/// Three 3x3 stride-2 conv + SiLU stages, an optional SE block after the
/// second stage and a 1x1 detect head emitting `A * (5 + K)` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RefNetSpec {
    pub in_channels: usize,
    pub stage_channels: [usize; 3],
    /// SE reduction ratio; `None` removes the block.
    pub se_reduction: Option<usize>,
    pub num_classes: usize,
    pub anchors: Vec<Anchor>,
}

impl Default for RefNetSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            stage_channels: [8, 16, 32],
            se_reduction: Some(SeBlock::DEFAULT_REDUCTION),
            num_classes: 3,
            anchors: vec![
                Anchor { w: 10.0, h: 13.0 },
                Anchor { w: 16.0, h: 30.0 },
                Anchor { w: 33.0, h: 23.0 },
            ],
        }
    }
}

impl RefNetSpec {
    /// Total downsampling factor of the backbone.
    pub const STRIDE: usize = 8;

    pub fn head_channels(&self) -> usize {
        self.anchors.len() * (5 + self.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.stage_channels.contains(&0) {
            return Err(Error::input("RefNet channel counts must be positive"));
        }
        if self.anchors.is_empty() || self.num_classes == 0 {
            return Err(Error::input("RefNet needs at least one anchor and one class"));
        }
        if self.anchors.iter().any(|a| !(a.w > 0.0 && a.h > 0.0)) {
            return Err(Error::input("RefNet anchors must be positive"));
        }
        if self.se_reduction == Some(0) {
            return Err(Error::input("SE reduction must be positive"));
        }
        Ok(())
    }

    /// Parameter names and shapes in serialization order.
    pub fn weight_layout(&self) -> Vec<(String, Vec<usize>)> {
        let [c1, c2, c3] = self.stage_channels;
        let mut layout = vec![
            ("backbone.stage1.weight".into(), vec![c1, self.in_channels, 3, 3]),
            ("backbone.stage1.bias".into(), vec![c1]),
            ("backbone.stage2.weight".into(), vec![c2, c1, 3, 3]),
            ("backbone.stage2.bias".into(), vec![c2]),
        ];
        if let Some(r) = self.se_reduction {
            let m = SeBlock::bottleneck(c2, r);
            layout.push(("backbone.se.fc1.weight".into(), vec![m, c2]));
            layout.push(("backbone.se.fc1.bias".into(), vec![m]));
            layout.push(("backbone.se.fc2.weight".into(), vec![c2, m]));
            layout.push(("backbone.se.fc2.bias".into(), vec![c2]));
        }
        layout.push(("backbone.stage3.weight".into(), vec![c3, c2, 3, 3]));
        layout.push(("backbone.stage3.bias".into(), vec![c3]));
        layout.push(("head.detect.weight".into(), vec![self.head_channels(), c3, 1, 1]));
        layout.push(("head.detect.bias".into(), vec![self.head_channels()]));
        layout
    }

    /// Cost-model graph of the same network.
    pub fn to_graph(&self) -> Graph {
        let conv = |name: &str, input: &str, out: usize, k: usize, s: usize, p: usize| Node {
            name: name.into(),
            kind: NodeKind::Conv {
                out_channels: out,
                kernel: k,
                stride: s,
                padding: p,
                groups: 1,
                bias: true,
            },
            inputs: vec![input.into()],
        };
        let act = |name: &str, input: &str| Node {
            name: name.into(),
            kind: NodeKind::Activation("silu".into()),
            inputs: vec![input.into()],
        };
        let [c1, c2, c3] = self.stage_channels;
        let mut nodes = vec![
            conv("stage1", "$in", c1, 3, 2, 1),
            act("stage1_act", "stage1"),
            conv("stage2", "stage1_act", c2, 3, 2, 1),
            act("stage2_act", "stage2"),
        ];
        let mut prev = "stage2_act";
        if let Some(r) = self.se_reduction {
            nodes.push(Node {
                name: "se".into(),
                kind: NodeKind::Se { reduction: r },
                inputs: vec![prev.into()],
            });
            prev = "se";
        }
        nodes.push(conv("stage3", prev, c3, 3, 2, 1));
        nodes.push(act("stage3_act", "stage3"));
        nodes.push(conv("head", "stage3_act", self.head_channels(), 1, 1, 0));
        Graph::new(nodes).expect("refnet graph is well-formed")
    }
}

/// RefNet with concrete weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RefNet {
    pub spec: RefNetSpec,
    pub stages: [Conv2d; 3],
    pub se: Option<SeBlock>,
    pub head: Conv2d,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Post-activation output of each stage (stage 2 before SE).
    pub stage_outputs: Vec<Tensor>,
    pub se_output: Option<Tensor>,
    pub head: Tensor,
    /// Largest sum of simultaneously live activation buffers, in bytes.
    pub peak_live_bytes: usize,
}

impl RefNet {
    /// Uniform `±1/sqrt(fan_in)` initialization from a seeded stream.
    pub fn random(spec: RefNetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = spec
            .weight_layout()
            .into_iter()
            .map(|(name, shape)| {
                let fan_in: usize = if shape.len() > 1 { shape[1..].iter().product() } else { shape[0] };
                let bound = 1.0 / (fan_in as f32).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                WeightEntry { name, shape, data }
            })
            .collect::<Vec<_>>();
        Self::from_entries(spec, &entries)
    }

    pub fn from_entries(spec: RefNetSpec, entries: &[WeightEntry]) -> Result<Self> {
        spec.validate()?;
        let layout = spec.weight_layout();
        if entries.len() != layout.len() {
            return Err(Error::input(format!(
                "expected {} weight tensors, found {}",
                layout.len(),
                entries.len()
            )));
        }
        for ((name, shape), e) in layout.iter().zip(entries) {
            if &e.name != name || &e.shape != shape {
                return Err(Error::input(format!(
                    "weight `{}` {:?} does not match expected `{name}` {shape:?}",
                    e.name, e.shape
                )));
            }
        }
        let tensor = |i: usize| Tensor::new(entries[i].shape.clone(), entries[i].data.clone());
        let bias = |i: usize| Some(entries[i].data.clone());

        let stage1 = Conv2d::new(tensor(0)?, bias(1), 2, 1)?;
        let stage2 = Conv2d::new(tensor(2)?, bias(3), 2, 1)?;
        let (se, next) = match spec.se_reduction {
            Some(r) => {
                let fc1 = Linear::new(tensor(4)?, bias(5))?;
                let fc2 = Linear::new(tensor(6)?, bias(7))?;
                (Some(SeBlock::new(spec.stage_channels[1], r, fc1, fc2)?), 8)
            }
            None => (None, 4),
        };
        let stage3 = Conv2d::new(tensor(next)?, bias(next + 1), 2, 1)?;
        let head = Conv2d::new(tensor(next + 2)?, bias(next + 3), 1, 0)?;
        Ok(Self {
            spec,
            stages: [stage1, stage2, stage3],
            se,
            head,
        })
    }

    pub fn to_entries(&self) -> Vec<WeightEntry> {
        let mut tensors: Vec<Vec<f32>> = Vec::new();
        let push_conv = |c: &Conv2d, out: &mut Vec<Vec<f32>>| {
            out.push(c.weight.data().to_vec());
            out.push(c.bias.clone().unwrap_or_default());
        };
        push_conv(&self.stages[0], &mut tensors);
        push_conv(&self.stages[1], &mut tensors);
        if let Some(se) = &self.se {
            for l in [&se.fc1, &se.fc2] {
                tensors.push(l.weight.data().to_vec());
                tensors.push(l.bias.clone().unwrap_or_default());
            }
        }
        push_conv(&self.stages[2], &mut tensors);
        push_conv(&self.head, &mut tensors);
        self.spec
            .weight_layout()
            .into_iter()
            .zip(tensors)
            .map(|((name, shape), data)| WeightEntry { name, shape, data })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.to_entries().iter().map(|e| e.data.len()).sum()
    }

    /// Replaces the SE block weights with zeros (every gate becomes 0.5).
    pub fn zero_se(&mut self) -> Result<()> {
        if let (Some(r), Some(se)) = (self.spec.se_reduction, self.se.as_mut()) {
            *se = SeBlock::zeroed(self.spec.stage_channels[1], r)?;
        }
        Ok(())
    }

    /// Converts an interleaved RGB image into a `[3, H, W]` tensor.
    pub fn image_to_tensor(&self, image: &Image) -> Result<Tensor> {
        let (h, w) = (image.height(), image.width());
        if self.spec.in_channels != 3 {
            return Err(Error::input("image input requires in_channels = 3"));
        }
        let mut chw = vec![0f32; 3 * h * w];
        for (p, px) in image.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                chw[c * h * w + p] = px[c];
            }
        }
        Tensor::new(vec![3, h, w], chw)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<ForwardTrace> {
        let (_, h, w) = input.chw()?;
        if h % RefNetSpec::STRIDE != 0 || w % RefNetSpec::STRIDE != 0 {
            return Err(Error::input(format!(
                "input {w}x{h} not divisible by total stride {}",
                RefNetSpec::STRIDE
            )));
        }
        let mut peak = 0usize;
        let mut live = |a: &Tensor, b: &Tensor| peak = peak.max(a.size_bytes() + b.size_bytes());

        let mut stage_outputs = Vec::with_capacity(3);
        let s1 = activation(Activation::Silu, &conv2d(input, &self.stages[0])?);
        live(input, &s1);
        let s2 = activation(Activation::Silu, &conv2d(&s1, &self.stages[1])?);
        live(&s1, &s2);
        let se_output = match &self.se {
            Some(se) => {
                let y = se_block(&s2, se)?;
                live(&s2, &y);
                Some(y)
            }
            None => None,
        };
        let s3 = {
            let feed = se_output.as_ref().unwrap_or(&s2);
            let y = activation(Activation::Silu, &conv2d(feed, &self.stages[2])?);
            live(feed, &y);
            y
        };
        let head = conv2d(&s3, &self.head)?;
        live(&s3, &head);
        stage_outputs.push(s1);
        stage_outputs.push(s2);
        stage_outputs.push(s3);
        Ok(ForwardTrace {
            stage_outputs,
            se_output,
            head,
            peak_live_bytes: peak,
        })
    }
}

/// Raw head output of `net` for `image`.
pub fn refnet_forward(net: &RefNet, image: &Image) -> Result<Tensor> {
    let x = net.image_to_tensor(image)?;
    Ok(net.forward_traced(&x)?.head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_shape_follows_stride() {
        let net = RefNet::random(RefNetSpec::default(), 7).unwrap();
        let img = Image::filled(64, 64, [0.2, 0.4, 0.6]).unwrap();
        let head = refnet_forward(&net, &img).unwrap();
        assert_eq!(head.shape(), &[24, 8, 8]);
    }

    #[test]
    fn indivisible_input_rejected() {
        let net = RefNet::random(RefNetSpec::default(), 7).unwrap();
        let img = Image::filled(60, 64, [0.0; 3]).unwrap();
        assert!(refnet_forward(&net, &img).is_err());
    }

    #[test]
    fn entries_round_trip() {
        let net = RefNet::random(RefNetSpec::default(), 3).unwrap();
        let back = RefNet::from_entries(net.spec.clone(), &net.to_entries()).unwrap();
        assert_eq!(back, net);
        let mut no_se = RefNetSpec::default();
        no_se.se_reduction = None;
        assert!(RefNet::from_entries(no_se, &net.to_entries()).is_err());
    }
}
