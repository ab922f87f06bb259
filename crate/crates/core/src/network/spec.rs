//! Declarative layer stacks and their shape propagation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{conv2d_output_shape, maxpool_output_shape, LrnParams};
use crate::tensor::Shape4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Convolution {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Lrn {
        size: usize,
        alpha: f64,
        beta: f64,
        k: f64,
    },
    FullyConnected {
        outputs: usize,
    },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Convolution {
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn lrn(p: LrnParams) -> Self {
        LayerSpec::Lrn {
            size: p.size,
            alpha: p.alpha,
            beta: p.beta,
            k: p.k,
        }
    }

    pub fn lrn_params(&self) -> Option<LrnParams> {
        match *self {
            LayerSpec::Lrn { size, alpha, beta, k } => Some(LrnParams { size, alpha, beta, k }),
            _ => None,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(
            self,
            LayerSpec::Convolution { .. } | LayerSpec::FullyConnected { .. }
        )
    }

    /// Stable numeric code used by the parameter file.
    pub fn code(&self) -> u32 {
        match self {
            LayerSpec::Convolution { .. } => 1,
            LayerSpec::Relu => 2,
            LayerSpec::MaxPool { .. } => 3,
            LayerSpec::Lrn { .. } => 4,
            LayerSpec::FullyConnected { .. } => 5,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Convolution {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::config(
                        "convolution needs out_channels, kernel and stride >= 1",
                    ));
                }
            }
            LayerSpec::MaxPool { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(Error::config("max-pool needs window and stride >= 1"));
                }
            }
            LayerSpec::Lrn { .. } => self.lrn_params().unwrap().validate()?,
            LayerSpec::FullyConnected { outputs } => {
                if outputs == 0 {
                    return Err(Error::config("fully-connected layer needs outputs >= 1"));
                }
            }
            LayerSpec::Relu => {}
        }
        Ok(())
    }

    /// Weight tensor shape given this layer's input shape (single item).
    pub fn weight_shape(&self, input: Shape4) -> Option<Shape4> {
        match *self {
            LayerSpec::Convolution {
                out_channels,
                kernel,
                ..
            } => Some(Shape4::new(out_channels, input.c, kernel, kernel)),
            LayerSpec::FullyConnected { outputs } => {
                Some(Shape4::new(outputs, input.item_len(), 1, 1))
            }
            _ => None,
        }
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        match *self {
            LayerSpec::Convolution { stride, pad, .. } => {
                conv2d_output_shape(input, self.weight_shape(input).unwrap(), stride, pad)
            }
            LayerSpec::Relu | LayerSpec::Lrn { .. } => Ok(input),
            LayerSpec::MaxPool { window, stride } => maxpool_output_shape(input, window, stride),
            LayerSpec::FullyConnected { outputs } => Ok(Shape4::new(input.n, outputs, 1, 1)),
        }
    }

    fn canonical(&self) -> String {
        match self {
            LayerSpec::Convolution {
                out_channels,
                kernel,
                stride,
                pad,
            } => format!("conv {out_channels} {kernel} {stride} {pad}"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::MaxPool { window, stride } => format!("maxpool {window} {stride}"),
            LayerSpec::Lrn { size, alpha, beta, k } => {
                format!("lrn {size} {alpha:?} {beta:?} {k:?}")
            }
            LayerSpec::FullyConnected { outputs } => format!("fc {outputs}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        InputShape {
            channels,
            height,
            width,
        }
    }

    pub fn tensor_shape(&self) -> Shape4 {
        Shape4::new(1, self.channels, self.height, self.width)
    }
}

#[derive(Deserialize)]
struct RawSpec {
    name: String,
    input: InputShape,
    descriptor_len: usize,
    layers: Vec<LayerSpec>,
}

/// A validated layer stack ending in a fully-connected descriptor head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NetworkSpec {
    name: String,
    descriptor_len: usize,
    input: InputShape,
    layers: Vec<LayerSpec>,
    #[serde(skip)]
    shapes: Vec<Shape4>,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        NetworkSpec::new(raw.name, raw.input, raw.layers, raw.descriptor_len)
    }
}

impl NetworkSpec {
    pub fn new(
        name: impl Into<String>,
        input: InputShape,
        layers: Vec<LayerSpec>,
        descriptor_len: usize,
    ) -> Result<Self> {
        if input.channels == 0 || input.height == 0 || input.width == 0 {
            return Err(Error::config("network input extents must be positive"));
        }
        if descriptor_len == 0 {
            return Err(Error::config("descriptor length must be positive"));
        }
        match layers.last() {
            Some(LayerSpec::FullyConnected { outputs }) if *outputs == descriptor_len => {}
            Some(LayerSpec::FullyConnected { outputs }) => {
                return Err(Error::config(format!(
                    "final fully-connected layer emits {outputs} values, descriptor length is {descriptor_len}"
                )))
            }
            _ => {
                return Err(Error::config(
                    "network must end with a fully-connected descriptor layer",
                ))
            }
        }
        let mut shapes = vec![input.tensor_shape()];
        for (i, layer) in layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|e| Error::config(format!("layer {}: {e}", i + 1)))?;
            let next = layer
                .output_shape(*shapes.last().unwrap())
                .map_err(|e| Error::config(format!("layer {}: {e}", i + 1)))?;
            if next.is_empty() {
                return Err(Error::config(format!("layer {} produces an empty tensor", i + 1)));
            }
            shapes.push(next);
        }
        Ok(NetworkSpec {
            name: name.into(),
            input,
            descriptor_len,
            layers,
            shapes,
        })
    }

    /// Desk-scale default: two convolutions on a 32x24 RGB input, 16-value descriptor.
    pub fn tiny() -> Self {
        let layers = vec![
            LayerSpec::conv(8, 5, 1, 2),
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::lrn(LrnParams::default()),
            LayerSpec::conv(16, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::FullyConnected { outputs: 16 },
        ];
        let input = InputShape {
            channels: 3,
            height: 24,
            width: 32,
        };
        NetworkSpec::new("tiny", input, layers, 16).expect("tiny spec is valid")
    }

    /// CaffeNet conv1-conv4 on a 160x120 RGB input with a 128-value
    /// fully-connected head.
    pub fn paper() -> Self {
        let lrn = LrnParams::default();
        let layers = vec![
            LayerSpec::conv(96, 11, 4, 0),
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 3, stride: 2 },
            LayerSpec::lrn(lrn),
            LayerSpec::conv(256, 5, 1, 2),
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 3, stride: 2 },
            LayerSpec::lrn(lrn),
            LayerSpec::conv(384, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::conv(384, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::FullyConnected { outputs: 128 },
        ];
        let input = InputShape {
            channels: 3,
            height: 120,
            width: 160,
        };
        NetworkSpec::new("paper", input, layers, 128).expect("paper spec is valid")
    }

    /// Looks up a built-in spec by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "paper" => Some(Self::paper()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("network spec: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn descriptor_len(&self) -> usize {
        self.descriptor_len
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Activation shapes for a single image: `shapes()[i]` feeds layer `i`,
    /// the last entry is the descriptor.
    pub fn shapes(&self) -> &[Shape4] {
        &self.shapes
    }

    /// Human-readable parameter name prefix for each layer (`conv1`, `fc1`, ...).
    pub fn layer_names(&self) -> Vec<String> {
        let (mut conv, mut fc, mut other) = (0, 0, 0);
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Convolution { .. } => {
                    conv += 1;
                    format!("conv{conv}")
                }
                LayerSpec::FullyConnected { .. } => {
                    fc += 1;
                    format!("fc{fc}")
                }
                _ => {
                    other += 1;
                    format!("layer{other}")
                }
            })
            .collect()
    }

    /// Canonical text form; the name is excluded so renaming a spec keeps its
    /// parameter files loadable.
    pub fn canonical(&self) -> String {
        let mut s = format!(
            "input {} {} {}\n",
            self.input.channels, self.input.height, self.input.width
        );
        for layer in &self.layers {
            s.push_str(&layer.canonical());
            s.push('\n');
        }
        let _ = writeln!(s, "descriptor {}", self.descriptor_len);
        s
    }

    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.canonical().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
