use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::spec::NetworkSpec;
use crate::tensor::{Real, Shape4, Tensor};

/// Trainable tensors of one layer. Parameter-free layers hold `None` for both.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weights: Option<Tensor<T>>,
    /// Shape (out, 1, 1, 1).
    pub bias: Option<Tensor<T>>,
    /// Scales the global learning rate for this layer; 0 freezes it.
    pub lr_multiplier: f64,
}

impl<T: Real> LayerParams<T> {
    pub fn empty() -> Self {
        LayerParams {
            weights: None,
            bias: None,
            lr_multiplier: 1.0,
        }
    }

    pub fn bias_slice(&self) -> &[T] {
        self.bias.as_ref().map(|b| b.data()).unwrap_or(&[])
    }
}

/// Weights of a network, bound to the fingerprint of the spec they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T = f32> {
    fingerprint: u64,
    layers: Vec<LayerParams<T>>,
}

fn bias_shape(out: usize) -> Shape4 {
    Shape4::new(out, 1, 1, 1)
}

impl<T: Real> ParameterSet<T> {
    pub(crate) fn from_parts(fingerprint: u64, layers: Vec<LayerParams<T>>) -> Self {
        ParameterSet {
            fingerprint,
            layers,
        }
    }

    /// Uniform Glorot initialisation, `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers()
            .iter()
            .zip(spec.shapes())
            .map(|(layer, &input)| match layer.weight_shape(input) {
                Some(ws) => {
                    let receptive = ws.h * ws.w;
                    let fan_in = (ws.c * receptive) as f64;
                    let fan_out = (ws.n * receptive) as f64;
                    let s = (6.0 / (fan_in + fan_out)).sqrt();
                    let weights =
                        Tensor::from_fn(ws, |_| T::from_f64(rng.gen_range(-s..s)));
                    LayerParams {
                        weights: Some(weights),
                        bias: Some(Tensor::zeros(bias_shape(ws.n))),
                        lr_multiplier: 1.0,
                    }
                }
                None => LayerParams::empty(),
            })
            .collect();
        ParameterSet {
            fingerprint: spec.fingerprint(),
            layers,
        }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers()
            .iter()
            .zip(spec.shapes())
            .map(|(layer, &input)| match layer.weight_shape(input) {
                Some(ws) => LayerParams {
                    weights: Some(Tensor::zeros(ws)),
                    bias: Some(Tensor::zeros(bias_shape(ws.n))),
                    lr_multiplier: 1.0,
                },
                None => LayerParams::empty(),
            })
            .collect();
        ParameterSet {
            fingerprint: spec.fingerprint(),
            layers,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    /// Checks that these parameters were built for `spec`, layer by layer.
    pub fn validate_against(&self, spec: &NetworkSpec) -> Result<()> {
        if self.fingerprint != spec.fingerprint() {
            return Err(Error::config(format!(
                "parameters were built for network fingerprint {:016x}, spec `{}` has {:016x}",
                self.fingerprint,
                spec.name(),
                spec.fingerprint()
            )));
        }
        if self.layers.len() != spec.layers().len() {
            return Err(Error::config(format!(
                "parameters have {} layers, spec has {}",
                self.layers.len(),
                spec.layers().len()
            )));
        }
        for (i, ((layer, params), &input)) in spec
            .layers()
            .iter()
            .zip(&self.layers)
            .zip(spec.shapes())
            .enumerate()
        {
            let expected = layer.weight_shape(input);
            let found_w = params.weights.as_ref().map(|t| t.shape());
            let found_b = params.bias.as_ref().map(|t| t.shape());
            if found_w != expected || found_b != expected.map(|s| bias_shape(s.n)) {
                return Err(Error::config(format!(
                    "layer {} parameter shapes {:?}/{:?} do not match spec ({:?})",
                    i + 1,
                    found_w,
                    found_b,
                    expected
                )));
            }
            if !(params.lr_multiplier >= 0.0) {
                return Err(Error::config(format!(
                    "layer {} has negative learning-rate multiplier",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            fingerprint: self.fingerprint,
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.as_ref().map(|t| t.cast()),
                    bias: l.bias.as_ref().map(|t| t.cast()),
                    lr_multiplier: l.lr_multiplier,
                })
                .collect(),
        }
    }

    /// Sum of squared weights, plus squared biases when `include_biases`.
    pub fn squared_norm(&self, include_biases: bool) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let w = l.weights.as_ref().map_or(0.0, |t| t.sum_squares().as_f64());
                let b = if include_biases {
                    l.bias.as_ref().map_or(0.0, |t| t.sum_squares().as_f64())
                } else {
                    0.0
                };
                w + b
            })
            .sum()
    }

    pub fn num_trainable(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.as_ref().map_or(0, |t| t.len()) + l.bias.as_ref().map_or(0, |t| t.len())
            })
            .sum()
    }
}

/// Per-layer parameter gradients, structured like a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<LayerGrads<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T = f32> {
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParameterSet<T>) -> Self {
        Gradients {
            layers: params
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    weights: l.weights.as_ref().map(|t| Tensor::zeros(t.shape())),
                    bias: l.bias.as_ref().map(|t| Tensor::zeros(t.shape())),
                })
                .collect(),
        }
    }

    /// `self += other`, requiring identical structure.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add_opt(&mut a.weights, &b.weights)?;
            add_opt(&mut a.bias, &b.bias)?;
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| {
            [&l.weights, &l.bias]
                .into_iter()
                .flatten()
                .all(|t| t.data().iter().all(|v| *v == T::zero()))
        })
    }
}

fn add_opt<T: Real>(dst: &mut Option<Tensor<T>>, src: &Option<Tensor<T>>) -> Result<()> {
    match (dst, src) {
        (Some(d), Some(s)) if d.shape() == s.shape() => {
            for (x, &y) in d.data_mut().iter_mut().zip(s.data()) {
                *x += y;
            }
            Ok(())
        }
        (None, None) => Ok(()),
        _ => Err(Error::shape("gradient tensors differ in structure")),
    }
}
