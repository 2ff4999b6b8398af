//! Feed-forward networks with a scalar head, evaluated with a forward tape
//! and differentiated by a reverse sweep over that tape.

use std::fmt;
use std::str::FromStr;

use super::conv::{self, ConvGeometry};
use crate::error::{Error, Result};

/// One layer of a network description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// `conv(k, stride, channels, pad)`, square kernels.
    Conv {
        kernel: usize,
        stride: usize,
        channels: usize,
        pad: usize,
    },
    /// Fully connected; flattens whatever comes in.
    Dense { width: usize },
    LeakyRelu { slope: f64 },
    Relu,
    GlobalSum,
    GlobalMean,
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.05;

impl LayerSpec {
    /// Convolution with the usual `(k-1)/2` padding.
    pub fn conv(kernel: usize, stride: usize, channels: usize) -> Self {
        LayerSpec::Conv {
            kernel,
            stride,
            channels,
            pad: (kernel.saturating_sub(1)) / 2,
        }
    }

    pub fn dense(width: usize) -> Self {
        LayerSpec::Dense { width }
    }

    pub fn lrelu() -> Self {
        LayerSpec::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::LeakyRelu { .. } => "lrelu",
            LayerSpec::Relu => "relu",
            LayerSpec::GlobalSum => "sum",
            LayerSpec::GlobalMean => "mean",
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                kernel,
                stride,
                channels,
                pad,
            } => write!(f, "conv({kernel},{stride},{channels},{pad})"),
            LayerSpec::Dense { width } => write!(f, "dense({width})"),
            LayerSpec::LeakyRelu { slope } => write!(f, "lrelu({slope})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            Some(_) => return Err(Error::Spec(format!("unbalanced layer `{s}`"))),
            None => (s, ""),
        };
        let nums: Vec<&str> = args
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let int = |i: usize| -> Result<usize> {
            nums.get(i)
                .ok_or_else(|| Error::Spec(format!("layer `{s}` is missing argument {i}")))?
                .parse()
                .map_err(|_| Error::Spec(format!("layer `{s}`: bad integer argument")))
        };
        match (name, nums.len()) {
            ("conv", 3) => Ok(LayerSpec::conv(int(0)?, int(1)?, int(2)?)),
            ("conv", 4) => Ok(LayerSpec::Conv {
                kernel: int(0)?,
                stride: int(1)?,
                channels: int(2)?,
                pad: int(3)?,
            }),
            ("dense", 1) => Ok(LayerSpec::dense(int(0)?)),
            ("lrelu", 0) => Ok(LayerSpec::lrelu()),
            ("lrelu", 1) => Ok(LayerSpec::LeakyRelu {
                slope: nums[0]
                    .parse()
                    .map_err(|_| Error::Spec(format!("layer `{s}`: bad slope")))?,
            }),
            ("relu", 0) => Ok(LayerSpec::Relu),
            ("sum", 0) => Ok(LayerSpec::GlobalSum),
            ("mean", 0) => Ok(LayerSpec::GlobalMean),
            _ => Err(Error::Spec(format!("unknown layer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Conv { geom: ConvGeometry, w: usize, b: usize },
    Dense { inp: usize, out: usize, w: usize, b: usize },
    LeakyRelu(f64),
    GlobalSum,
    GlobalMean,
}

/// Compiled layer plan: shapes and parameter offsets for every layer.
#[derive(Debug, Clone)]
pub struct Network {
    ops: Vec<Op>,
    kinds: Vec<&'static str>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    num_params: usize,
}

/// Per-layer activations from a forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Network {
    pub fn compile(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Spec(format!("bad input shape {input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        let mut shapes = vec![shape.clone()];
        let mut ops = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for (i, layer) in layers.iter().enumerate() {
            let op = match *layer {
                LayerSpec::Conv {
                    kernel,
                    stride,
                    channels,
                    pad,
                } => {
                    if shape.len() != 3 {
                        return Err(Error::Spec(format!(
                            "layer {i}: conv needs a [C,H,W] input, got {shape:?}"
                        )));
                    }
                    let geom = ConvGeometry::new([shape[0], shape[1], shape[2]], channels, kernel, stride, pad)
                        .map_err(|e| Error::Spec(format!("layer {i}: {e}")))?;
                    shape = vec![geom.out_c, geom.out_h, geom.out_w];
                    let w = offset;
                    let b = w + geom.weight_len();
                    offset = b + geom.out_c;
                    Op::Conv { geom, w, b }
                }
                LayerSpec::Dense { width } => {
                    if width == 0 {
                        return Err(Error::Spec(format!("layer {i}: dense width must be positive")));
                    }
                    let inp: usize = shape.iter().product();
                    shape = vec![width];
                    let w = offset;
                    let b = w + inp * width;
                    offset = b + width;
                    Op::Dense { inp, out: width, w, b }
                }
                LayerSpec::LeakyRelu { slope } => {
                    if !slope.is_finite() {
                        return Err(Error::Spec(format!("layer {i}: bad slope")));
                    }
                    Op::LeakyRelu(slope)
                }
                LayerSpec::Relu => Op::LeakyRelu(0.0),
                LayerSpec::GlobalSum => {
                    shape = vec![1];
                    Op::GlobalSum
                }
                LayerSpec::GlobalMean => {
                    shape = vec![1];
                    Op::GlobalMean
                }
            };
            ops.push(op);
            shapes.push(shape.clone());
        }
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Spec(format!(
                "network output must be a single scalar, got shape {shape:?}"
            )));
        }
        Ok(Self {
            ops,
            kinds: layers.iter().map(LayerSpec::name).collect(),
            shapes,
            num_params: offset,
        })
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].iter().product()
    }

    /// Parameter ranges `(offset, len, fan_in, is_bias)` in layout order.
    pub fn param_blocks(&self) -> Vec<(usize, usize, usize, bool)> {
        let mut blocks = Vec::new();
        for op in &self.ops {
            match op {
                Op::Conv { geom, w, b } => {
                    let fan_in = geom.in_c * geom.k * geom.k;
                    blocks.push((*w, geom.weight_len(), fan_in, false));
                    blocks.push((*b, geom.out_c, fan_in, true));
                }
                Op::Dense { inp, out, w, b } => {
                    blocks.push((*w, inp * out, *inp, false));
                    blocks.push((*b, *out, *inp, true));
                }
                _ => {}
            }
        }
        blocks
    }

    fn check(&self, i: usize, v: &[f64]) -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericOverflow {
                layer: i,
                kind: self.kinds[i].to_string(),
            })
        }
    }

    /// Evaluates the network, recording every layer output on `tape`.
    pub fn forward(&self, theta: &[f64], x: &[f64], tape: &mut Tape) -> Result<f64> {
        debug_assert_eq!(theta.len(), self.num_params);
        debug_assert_eq!(x.len(), self.input_len());
        tape.acts.resize_with(self.ops.len(), Vec::new);
        for (i, op) in self.ops.iter().enumerate() {
            let (before, rest) = tape.acts.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &before[i - 1] };
            let out = &mut rest[0];
            let out_len: usize = self.shapes[i + 1].iter().product();
            out.clear();
            out.resize(out_len, 0.0);
            match op {
                Op::Conv { geom, w, b } => conv::forward(
                    geom,
                    input,
                    &theta[*w..*w + geom.weight_len()],
                    Some(&theta[*b..*b + geom.out_c]),
                    out,
                ),
                Op::Dense { inp, out: n, w, b } => {
                    for j in 0..*n {
                        let row = &theta[w + j * inp..w + (j + 1) * inp];
                        out[j] = theta[b + j] + super::tensor::dot(row, input);
                    }
                }
                Op::LeakyRelu(slope) => {
                    for (o, &v) in out.iter_mut().zip(input) {
                        *o = if v > 0.0 { v } else { slope * v };
                    }
                }
                Op::GlobalSum => out[0] = input.iter().sum(),
                Op::GlobalMean => out[0] = input.iter().sum::<f64>() / input.len() as f64,
            }
            self.check(i, out)?;
        }
        Ok(tape.acts.last().map_or(x[0], |a| a[0]))
    }

    /// Reverse sweep seeded with `dU/dout = scale`.
    ///
    /// Accumulates into `grad_input` and `grad_params` when given; `tape` must
    /// hold the forward pass for the same `theta` and `x`.
    pub fn backward(
        &self,
        theta: &[f64],
        x: &[f64],
        tape: &Tape,
        scale: f64,
        grad_input: Option<&mut [f64]>,
        mut grad_params: Option<&mut [f64]>,
    ) -> Result<()> {
        let mut g = vec![scale];
        let mut g_in = Vec::new();
        for i in (0..self.ops.len()).rev() {
            let input: &[f64] = if i == 0 { x } else { &tape.acts[i - 1] };
            let need_input_grad = i > 0 || grad_input.is_some();
            g_in.clear();
            g_in.resize(input.len(), 0.0);
            match &self.ops[i] {
                Op::Conv { geom, w, b } => {
                    if let Some(gp) = grad_params.as_deref_mut() {
                        let (gw, gb) = gp[*w..*b + geom.out_c].split_at_mut(geom.weight_len());
                        conv::backward_params(geom, input, &g, gw, gb);
                    }
                    if need_input_grad {
                        conv::backward_input(geom, &g, &theta[*w..*w + geom.weight_len()], &mut g_in);
                    }
                }
                Op::Dense { inp, out, w, b } => {
                    if let Some(gp) = grad_params.as_deref_mut() {
                        for j in 0..*out {
                            let gj = g[j];
                            gp[b + j] += gj;
                            for (gw, &v) in gp[w + j * inp..w + (j + 1) * inp].iter_mut().zip(input) {
                                *gw += gj * v;
                            }
                        }
                    }
                    if need_input_grad {
                        for j in 0..*out {
                            let gj = g[j];
                            let row = &theta[w + j * inp..w + (j + 1) * inp];
                            for (gi, &wv) in g_in.iter_mut().zip(row) {
                                *gi += gj * wv;
                            }
                        }
                    }
                }
                Op::LeakyRelu(slope) => {
                    for ((gi, &go), &v) in g_in.iter_mut().zip(&g).zip(input) {
                        *gi = if v > 0.0 { go } else { slope * go };
                    }
                }
                Op::GlobalSum => g_in.fill(g[0]),
                Op::GlobalMean => g_in.fill(g[0] / input.len() as f64),
            }
            if !need_input_grad {
                break;
            }
            self.check(i, &g_in)?;
            std::mem::swap(&mut g, &mut g_in);
        }
        if let Some(gi) = grad_input {
            for (a, v) in gi.iter_mut().zip(&g) {
                *a += v;
            }
        }
        Ok(())
    }
}
