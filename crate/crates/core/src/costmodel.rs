//! Analytical parameter, MAC/FLOP and storage accounting over a layer graph.
//!
//! Conventions:
//!
//! - conv MACs = `k_h * k_w * (C_in / groups) * C_out * H_out * W_out`; bias adds
//!   are counted as element-wise ops, not MACs.
//! - linear MACs = `in * out`.
//! - pooling and activations cost one op per output element.
//! - SE = global-average-pool ops (one per channel) + the two bottleneck MACs
//!   + `C * H * W` scaling ops.
//! - upsample and concat are free.
//! - FLOPs = `2 * MACs + element-wise ops`.
//!
//! Both MACs and FLOPs are reported since tools disagree on which one they
//! call "FLOPs".

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::nnops::SeBlock;
use crate::{Error, Result};

/// Name that refers to the graph input in node `inputs`.
pub const GRAPH_INPUT: &str = "$in";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn numel(&self) -> u64 {
        match *self {
            Shape::Chw(c, h, w) => (c * h * w) as u64,
            Shape::Flat(n) => n as u64,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Chw(c, h, w) => write!(f, "{c}x{h}x{w}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// `CxHxW` or a single element count.
    fn from_str(s: &str) -> Result<Self> {
        let dims: std::result::Result<Vec<usize>, _> = s.split('x').map(str::parse).collect();
        match dims.as_deref() {
            Ok([c, h, w]) if *c > 0 && *h > 0 && *w > 0 => Ok(Shape::Chw(*c, *h, *w)),
            Ok([n]) if *n > 0 => Ok(Shape::Flat(*n)),
            _ => Err(Error::input(format!("bad shape `{s}`, expected CxHxW"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    },
    Linear {
        out_features: usize,
        bias: bool,
    },
    Pool {
        mode: PoolMode,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Element-wise nonlinearity, by name (`silu`, `relu`, `sigmoid`, ...).
    Activation(String),
    Se {
        reduction: usize,
    },
    Upsample {
        factor: usize,
    },
    Concat,
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Conv { .. } => "conv",
            NodeKind::Linear { .. } => "linear",
            NodeKind::Pool { .. } => "pool",
            NodeKind::Activation(_) => "act",
            NodeKind::Se { .. } => "se",
            NodeKind::Upsample { .. } => "upsample",
            NodeKind::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub inputs: Vec<String>,
}

/// Ordered, acyclic layer graph: every input names an earlier node or `$in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn graph_err(node: &str, message: impl Into<String>) -> Error {
    Error::Graph {
        node: node.to_string(),
        message: message.into(),
    }
}

impl Graph {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let mut seen: Vec<&str> = Vec::with_capacity(nodes.len());
        for n in &nodes {
            if n.name.is_empty() || n.name == GRAPH_INPUT || n.name.contains(char::is_whitespace) {
                return Err(graph_err(&n.name, "invalid node name"));
            }
            if seen.contains(&n.name.as_str()) {
                return Err(graph_err(&n.name, "duplicate node name"));
            }
            let arity_ok = match n.kind {
                NodeKind::Concat => !n.inputs.is_empty(),
                _ => n.inputs.len() == 1,
            };
            if !arity_ok {
                return Err(graph_err(&n.name, format!("wrong number of inputs ({})", n.inputs.len())));
            }
            for i in &n.inputs {
                if i != GRAPH_INPUT && !seen.contains(&i.as_str()) {
                    return Err(graph_err(&n.name, format!("input `{i}` is not an earlier node")));
                }
            }
            let positive = match &n.kind {
                NodeKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    groups,
                    ..
                } => *out_channels > 0 && *kernel > 0 && *stride > 0 && *groups > 0,
                NodeKind::Linear { out_features, .. } => *out_features > 0,
                NodeKind::Pool { mode, kernel, stride, .. } => {
                    *mode == PoolMode::Global || (*kernel > 0 && *stride > 0)
                }
                NodeKind::Se { reduction } => *reduction > 0,
                NodeKind::Upsample { factor } => *factor > 0,
                NodeKind::Activation(_) | NodeKind::Concat => true,
            };
            if !positive {
                return Err(graph_err(&n.name, "attributes must be positive"));
            }
            seen.push(&n.name);
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Parses the line-oriented graph format:
    ///
    /// ```text
    /// # name kind key=value ... input=<name|$in>[,<name>...]
    /// stem   conv out=8 kernel=3 stride=2 padding=1 input=$in
    /// act1   act  fn=silu input=stem
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("line {}", lineno + 1);
            let mut tokens = line.split_whitespace();
            let name = tokens.next().unwrap_or_default().to_string();
            let kind = tokens
                .next()
                .ok_or_else(|| Error::parse(&at, "missing node kind"))?;
            let mut attrs: HashMap<&str, &str> = HashMap::new();
            for tok in tokens {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::parse(&at, format!("expected key=value, got `{tok}`")))?;
                if attrs.insert(k, v).is_some() {
                    return Err(Error::parse(&at, format!("duplicate key `{k}`")));
                }
            }
            let inputs: Vec<String> = attrs
                .remove("input")
                .ok_or_else(|| Error::parse(&at, "missing input="))?
                .split(',')
                .map(str::to_string)
                .collect();
            let num = |attrs: &mut HashMap<&str, &str>, key: &str, default: Option<usize>| -> Result<usize> {
                match attrs.remove(key) {
                    Some(v) => v
                        .parse()
                        .map_err(|_| Error::parse(&at, format!("bad value for `{key}`: `{v}`"))),
                    None => default.ok_or_else(|| Error::parse(&at, format!("missing `{key}`"))),
                }
            };
            let kind = match kind {
                "conv" => {
                    let out_channels = num(&mut attrs, "out", None)?;
                    let kernel = num(&mut attrs, "kernel", None)?;
                    let stride = num(&mut attrs, "stride", Some(1))?;
                    let padding = num(&mut attrs, "padding", Some(0))?;
                    let groups = num(&mut attrs, "groups", Some(1))?;
                    let bias = parse_bool(attrs.remove("bias"), &at)?;
                    NodeKind::Conv {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        groups,
                        bias,
                    }
                }
                "linear" => {
                    let out_features = num(&mut attrs, "out", None)?;
                    let bias = parse_bool(attrs.remove("bias"), &at)?;
                    NodeKind::Linear { out_features, bias }
                }
                "pool" => {
                    let mode = match attrs.remove("mode").unwrap_or("max") {
                        "max" => PoolMode::Max,
                        "avg" => PoolMode::Avg,
                        "global" => PoolMode::Global,
                        other => return Err(Error::parse(&at, format!("unknown pool mode `{other}`"))),
                    };
                    let (kernel, stride, padding) = if mode == PoolMode::Global {
                        (0, 0, 0)
                    } else {
                        let k = num(&mut attrs, "kernel", None)?;
                        (k, num(&mut attrs, "stride", Some(k))?, num(&mut attrs, "padding", Some(0))?)
                    };
                    NodeKind::Pool {
                        mode,
                        kernel,
                        stride,
                        padding,
                    }
                }
                "act" | "activation" => {
                    NodeKind::Activation(attrs.remove("fn").unwrap_or("silu").to_string())
                }
                "se" => NodeKind::Se {
                    reduction: num(&mut attrs, "reduction", Some(SeBlock::DEFAULT_REDUCTION))?,
                },
                "upsample" => NodeKind::Upsample {
                    factor: num(&mut attrs, "factor", Some(2))?,
                },
                "concat" => NodeKind::Concat,
                other => return Err(Error::parse(&at, format!("unknown node kind `{other}`"))),
            };
            if let Some(k) = attrs.keys().next() {
                return Err(Error::parse(&at, format!("unknown key `{k}`")));
            }
            nodes.push(Node { name, kind, inputs });
        }
        Self::new(nodes)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let attrs = match &n.kind {
                NodeKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    groups,
                    bias,
                } => format!(
                    "out={out_channels} kernel={kernel} stride={stride} padding={padding} groups={groups} bias={bias}"
                ),
                NodeKind::Linear { out_features, bias } => format!("out={out_features} bias={bias}"),
                NodeKind::Pool {
                    mode: PoolMode::Global,
                    ..
                } => "mode=global".to_string(),
                NodeKind::Pool {
                    mode,
                    kernel,
                    stride,
                    padding,
                } => format!(
                    "mode={} kernel={kernel} stride={stride} padding={padding}",
                    if *mode == PoolMode::Max { "max" } else { "avg" }
                ),
                NodeKind::Activation(f) => format!("fn={f}"),
                NodeKind::Se { reduction } => format!("reduction={reduction}"),
                NodeKind::Upsample { factor } => format!("factor={factor}"),
                NodeKind::Concat => String::new(),
            };
            let sep = if attrs.is_empty() { "" } else { " " };
            out.push_str(&format!(
                "{} {}{sep}{attrs} input={}\n",
                n.name,
                n.kind.tag(),
                n.inputs.join(",")
            ));
        }
        out
    }
}

fn parse_bool(v: Option<&str>, at: &str) -> Result<bool> {
    match v {
        None | Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(Error::parse(at, format!("bad boolean `{other}`"))),
    }
}

fn out_dim(node: &str, input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    crate::nnops::conv_out_dim(input, kernel, stride, padding)
        .ok_or_else(|| graph_err(node, format!("window {kernel} larger than padded input {}", input + 2 * padding)))
}

fn expect_chw(node: &str, s: Shape) -> Result<(usize, usize, usize)> {
    match s {
        Shape::Chw(c, h, w) => Ok((c, h, w)),
        Shape::Flat(_) => Err(graph_err(node, "expects a CxHxW input")),
    }
}

/// Output shape of every node, in graph order.
pub fn resolve_shapes(graph: &Graph, input: Shape) -> Result<Vec<Shape>> {
    let mut by_name: HashMap<&str, Shape> = HashMap::new();
    let mut shapes = Vec::with_capacity(graph.nodes.len());
    for n in &graph.nodes {
        let ins: Vec<Shape> = n
            .inputs
            .iter()
            .map(|i| if i == GRAPH_INPUT { input } else { by_name[i.as_str()] })
            .collect();
        let name = n.name.as_str();
        let shape = match &n.kind {
            NodeKind::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                groups,
                ..
            } => {
                let (c, h, w) = expect_chw(name, ins[0])?;
                if c % groups != 0 || out_channels % groups != 0 {
                    return Err(graph_err(name, "channels not divisible by groups"));
                }
                Shape::Chw(
                    *out_channels,
                    out_dim(name, h, *kernel, *stride, *padding)?,
                    out_dim(name, w, *kernel, *stride, *padding)?,
                )
            }
            NodeKind::Linear { out_features, .. } => Shape::Flat(*out_features),
            NodeKind::Pool {
                mode: PoolMode::Global,
                ..
            } => {
                let (c, _, _) = expect_chw(name, ins[0])?;
                Shape::Chw(c, 1, 1)
            }
            NodeKind::Pool {
                kernel,
                stride,
                padding,
                ..
            } => {
                let (c, h, w) = expect_chw(name, ins[0])?;
                Shape::Chw(
                    c,
                    out_dim(name, h, *kernel, *stride, *padding)?,
                    out_dim(name, w, *kernel, *stride, *padding)?,
                )
            }
            NodeKind::Activation(_) => ins[0],
            NodeKind::Se { .. } => {
                expect_chw(name, ins[0])?;
                ins[0]
            }
            NodeKind::Upsample { factor } => {
                let (c, h, w) = expect_chw(name, ins[0])?;
                Shape::Chw(c, h * factor, w * factor)
            }
            NodeKind::Concat => {
                let (_, h, w) = expect_chw(name, ins[0])?;
                let mut channels = 0;
                for s in &ins {
                    let (c, hh, ww) = expect_chw(name, *s)?;
                    if (hh, ww) != (h, w) {
                        return Err(graph_err(name, format!("spatial mismatch {s} vs {h}x{w}")));
                    }
                    channels += c;
                }
                Shape::Chw(channels, h, w)
            }
        };
        by_name.insert(name, shape);
        shapes.push(shape);
    }
    Ok(shapes)
}

fn input_shape_of(graph: &Graph, idx: usize, input: Shape, shapes: &[Shape]) -> Shape {
    let first = &graph.nodes[idx].inputs[0];
    if first == GRAPH_INPUT {
        input
    } else {
        let j = graph.nodes[..idx].iter().position(|n| &n.name == first).expect("validated");
        shapes[j]
    }
}

/// Parameters of one node given its (first) input shape.
fn node_params(kind: &NodeKind, input: Shape) -> u64 {
    match *kind {
        NodeKind::Conv {
            out_channels,
            kernel,
            groups,
            bias,
            ..
        } => {
            let c_in = match input {
                Shape::Chw(c, _, _) => c,
                Shape::Flat(n) => n,
            };
            (kernel * kernel * (c_in / groups) * out_channels) as u64 + if bias { out_channels as u64 } else { 0 }
        }
        NodeKind::Linear { out_features, bias } => {
            input.numel() * out_features as u64 + if bias { out_features as u64 } else { 0 }
        }
        NodeKind::Se { reduction } => {
            let c = match input {
                Shape::Chw(c, _, _) => c,
                Shape::Flat(n) => n,
            };
            let m = SeBlock::bottleneck(c, reduction);
            (c * m + m + m * c + c) as u64
        }
        NodeKind::Pool { .. } | NodeKind::Activation(_) | NodeKind::Upsample { .. } | NodeKind::Concat => 0,
    }
}

/// Per-node parameter counts.
///
/// Parameter counts depend on channel counts only; `input` is needed to know
/// the channels entering the first layer.
pub fn count_params(graph: &Graph, input: Shape) -> Result<Vec<u64>> {
    let shapes = resolve_shapes(graph, input)?;
    Ok((0..graph.nodes.len())
        .map(|i| node_params(&graph.nodes[i].kind, input_shape_of(graph, i, input, &shapes)))
        .collect())
}

pub fn total_params(graph: &Graph, input: Shape) -> Result<u64> {
    Ok(count_params(graph, input)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCost {
    pub name: String,
    pub kind: &'static str,
    pub output_shape: Shape,
    pub params: u64,
    pub macs: u64,
    pub elementwise_ops: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub input_shape: Shape,
    pub nodes: Vec<NodeCost>,
    pub params: u64,
    pub macs: u64,
    pub elementwise_ops: u64,
    pub flops: u64,
}

impl CostReport {
    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,kind,output_shape,params,macs,elementwise_ops,flops\n");
        for n in &self.nodes {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                n.name, n.kind, n.output_shape, n.params, n.macs, n.elementwise_ops, n.flops
            ));
        }
        s.push_str(&format!(
            "total,,{},{},{},{},{}\n",
            self.input_shape, self.params, self.macs, self.elementwise_ops, self.flops
        ));
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<16} {:<9} {:>14} {:>10} {:>14} {:>14}\n",
            "node", "kind", "output", "params", "MACs", "FLOPs"
        );
        for n in &self.nodes {
            s.push_str(&format!(
                "{:<16} {:<9} {:>14} {:>10} {:>14} {:>14}\n",
                n.name,
                n.kind,
                n.output_shape.to_string(),
                n.params,
                n.macs,
                n.flops
            ));
        }
        s.push_str(&format!(
            "{:<16} {:<9} {:>14} {:>10} {:>14} {:>14}\n",
            "total", "", "", self.params, self.macs, self.flops
        ));
        s.push_str(&format!("GFLOPs: {:.6}  GMACs: {:.6}\n", self.gflops(), self.macs as f64 / 1e9));
        s
    }
}

/// MACs, element-wise ops and FLOPs for one forward pass at `input`.
pub fn count_flops(graph: &Graph, input: Shape) -> Result<CostReport> {
    let shapes = resolve_shapes(graph, input)?;
    let mut nodes = Vec::with_capacity(shapes.len());
    for (i, node) in graph.nodes.iter().enumerate() {
        let inp = input_shape_of(graph, i, input, &shapes);
        let out = shapes[i];
        let (macs, elementwise) = match node.kind {
            NodeKind::Conv {
                out_channels,
                kernel,
                groups,
                bias,
                ..
            } => {
                let (c_in, _, _) = expect_chw(&node.name, inp)?;
                let (_, ho, wo) = expect_chw(&node.name, out)?;
                let spatial = (ho * wo) as u64;
                let macs = (kernel * kernel * (c_in / groups) * out_channels) as u64 * spatial;
                (macs, if bias { out.numel() } else { 0 })
            }
            NodeKind::Linear { out_features, bias } => {
                (inp.numel() * out_features as u64, if bias { out_features as u64 } else { 0 })
            }
            NodeKind::Pool { .. } | NodeKind::Activation(_) => (0, out.numel()),
            NodeKind::Se { reduction } => {
                let (c, h, w) = expect_chw(&node.name, inp)?;
                let m = SeBlock::bottleneck(c, reduction);
                ((2 * c * m) as u64, (c + c * h * w) as u64)
            }
            NodeKind::Upsample { .. } | NodeKind::Concat => (0, 0),
        };
        nodes.push(NodeCost {
            name: node.name.clone(),
            kind: node.kind.tag(),
            output_shape: out,
            params: node_params(&node.kind, inp),
            macs,
            elementwise_ops: elementwise,
            flops: 2 * macs + elementwise,
        });
    }
    Ok(CostReport {
        input_shape: input,
        params: nodes.iter().map(|n| n.params).sum(),
        macs: nodes.iter().map(|n| n.macs).sum(),
        elementwise_ops: nodes.iter().map(|n| n.elementwise_ops).sum(),
        flops: nodes.iter().map(|n| n.flops).sum(),
        nodes,
    })
}

/// Predicted weight-file size: `params * bytes_per_param + header_overhead`.
pub fn storage_cost(graph: &Graph, input: Shape, bytes_per_param: u64, header_overhead: u64) -> Result<u64> {
    if ![2, 4, 8].contains(&bytes_per_param) {
        return Err(Error::input(format!("bytes_per_param must be 2, 4 or 8, got {bytes_per_param}")));
    }
    Ok(total_params(graph, input)? * bytes_per_param + header_overhead)
}
