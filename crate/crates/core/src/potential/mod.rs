//! Neural-network energies `U(x; theta) = F(x; theta)` with a scalar head,
//! their canonical presets, and the binary checkpoint format.

pub mod analytic;
mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::numerics::{Energy, LayerSpec, Network, ParametricEnergy, Tape, Tensor};

/// Architecture of a potential plus the seed its parameters are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl PotentialSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Self {
        Self {
            input_shape,
            layers,
            seed,
        }
    }

    /// `dim -> dense(64) -> lrelu -> dense(64) -> lrelu -> dense(1)`.
    pub fn toy_mlp(dim: usize, seed: u64) -> Self {
        Self::new(
            vec![dim],
            vec![
                LayerSpec::dense(64),
                LayerSpec::lrelu(),
                LayerSpec::dense(64),
                LayerSpec::lrelu(),
                LayerSpec::dense(1),
            ],
            seed,
        )
    }

    /// `conv(3,1,c1) -> lrelu -> conv(4,2,c2) -> lrelu -> conv(4,2,c3) -> lrelu -> dense(1)`.
    pub fn convnet(input_shape: [usize; 3], widths: [usize; 3], seed: u64) -> Self {
        Self::new(
            input_shape.to_vec(),
            vec![
                LayerSpec::conv(3, 1, widths[0]),
                LayerSpec::lrelu(),
                LayerSpec::conv(4, 2, widths[1]),
                LayerSpec::lrelu(),
                LayerSpec::conv(4, 2, widths[2]),
                LayerSpec::lrelu(),
                LayerSpec::dense(1),
            ],
            seed,
        )
    }

    /// The full-width image preset (32/64/128 channels).
    pub fn image_convnet(input_shape: [usize; 3], seed: u64) -> Self {
        Self::convnet(input_shape, [32, 64, 128], seed)
    }

    /// Same topology as [`PotentialSpec::image_convnet`] at a quarter of the width.
    pub fn image_convnet_small(input_shape: [usize; 3], seed: u64) -> Self {
        Self::convnet(input_shape, [8, 16, 32], seed)
    }

    /// Looks up a named architecture: `toy-mlp`, `image-convnet`, `image-convnet-small`.
    pub fn preset(name: &str, input_shape: &[usize], seed: u64) -> Result<Self> {
        let image = || -> Result<[usize; 3]> {
            <[usize; 3]>::try_from(input_shape)
                .map_err(|_| Error::Spec(format!("{name} needs a [C,H,W] input, got {input_shape:?}")))
        };
        match name {
            "toy-mlp" => match input_shape {
                [d] => Ok(Self::toy_mlp(*d, seed)),
                _ => Err(Error::Spec(format!("toy-mlp needs a vector input, got {input_shape:?}"))),
            },
            "image-convnet" => Ok(Self::image_convnet(image()?, seed)),
            "image-convnet-small" => Ok(Self::image_convnet_small(image()?, seed)),
            _ => Err(Error::Config(format!("unknown potential preset `{name}`"))),
        }
    }

    fn validate(&self) -> Result<Network> {
        if self.layers.is_empty() {
            return Err(Error::Spec("no layers".into()));
        }
        if self.input_shape.len() == 3 {
            match self.layers[0] {
                LayerSpec::Conv {
                    kernel: 3,
                    stride: 1,
                    ..
                } => {}
                other => {
                    return Err(Error::Spec(format!(
                        "image potentials must start with a 3x3 stride-1 convolution, got {other}"
                    )))
                }
            }
        }
        Network::compile(&self.input_shape, &self.layers)
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.input_shape.iter().map(|d| d.to_string()).collect();
        let layers: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        write!(
            f,
            "input={};seed={};layers={}",
            dims.join("x"),
            self.seed,
            layers.join(",")
        )
    }
}

impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut seed = 0;
        let mut layers = None;
        for part in s.split(';') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Spec(format!("expected key=value, got `{part}`")))?;
            match k.trim() {
                "input" => {
                    input = Some(
                        v.split('x')
                            .map(|d| d.trim().parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| Error::Spec(format!("bad input shape `{v}`")))?,
                    )
                }
                "seed" => {
                    seed = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Spec(format!("bad seed `{v}`")))?
                }
                "layers" => layers = Some(split_layers(v)?),
                other => return Err(Error::Spec(format!("unknown spec key `{other}`"))),
            }
        }
        Ok(Self {
            input_shape: input.ok_or_else(|| Error::Spec("missing input".into()))?,
            layers: layers.ok_or_else(|| Error::Spec("missing layers".into()))?,
            seed,
        })
    }
}

/// Splits `conv(3,1,32,1),lrelu(0.05),dense(1)` on top-level commas.
fn split_layers(s: &str) -> Result<Vec<LayerSpec>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() {
        out.push(s[start..].parse()?);
    }
    Ok(out)
}

/// A network potential: architecture plus parameter vector.
#[derive(Debug, Clone)]
pub struct Potential {
    spec: PotentialSpec,
    net: Network,
    theta: Vec<f64>,
}

impl Potential {
    /// Builds the network and draws weights from `N(0, 1/fan_in)` using the
    /// spec seed. Biases start at zero.
    pub fn build(spec: PotentialSpec) -> Result<Self> {
        let net = spec.validate()?;
        let mut theta = vec![0.0; net.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for (offset, len, fan_in, is_bias) in net.param_blocks() {
            if is_bias {
                continue;
            }
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
                .map_err(|e| Error::Spec(e.to_string()))?;
            for v in &mut theta[offset..offset + len] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(Self { spec, net, theta })
    }

    /// Builds a potential with the given parameters instead of drawing them.
    pub fn with_params(spec: PotentialSpec, theta: Vec<f64>) -> Result<Self> {
        let net = spec.validate()?;
        if theta.len() != net.num_params() {
            return Err(Error::dim("potential parameters", &[net.num_params()], &[theta.len()]));
        }
        Ok(Self { spec, net, theta })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn theta(&self) -> Tensor {
        Tensor::vector(self.theta.clone())
    }
}

impl Energy for Potential {
    fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        let mut tape = Tape::default();
        self.net.forward(&self.theta, x, &mut tape)
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut tape = Tape::default();
        let u = self.net.forward(&self.theta, x, &mut tape)?;
        grad.fill(0.0);
        self.net
            .backward(&self.theta, x, &tape, 1.0, Some(grad), None)?;
        Ok(u)
    }
}

impl ParametricEnergy for Potential {
    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::dim("potential parameters", &[self.theta.len()], &[theta.len()]));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn accumulate_param_grad(&self, x: &[f64], scale: f64, acc: &mut [f64]) -> Result<f64> {
        let mut tape = Tape::default();
        let u = self.net.forward(&self.theta, x, &mut tape)?;
        self.net
            .backward(&self.theta, x, &tape, scale, None, Some(acc))?;
        Ok(u)
    }
}
