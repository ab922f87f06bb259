//! Forward evaluation of a layer stack and reverse-mode gradients of its parameters.

use crate::error::{Error, Result};
use crate::layers::{self, conv::conv2d_backward_impl};
use crate::network::params::{Gradients, LayerGrads, ParameterSet};
use crate::network::spec::{LayerSpec, NetworkSpec};
use crate::tensor::{Real, Shape4, Tensor};

/// Per-layer state kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
enum Cache<T> {
    /// Layers whose backward needs only their input.
    Input(Tensor<T>),
    Pool { argmax: Vec<usize>, input_shape: Shape4 },
}

/// Result of a forward pass. The trace is present only for traced passes.
#[derive(Debug, Clone)]
pub struct ForwardPass<T = f32> {
    pub descriptor: Vec<T>,
    trace: Option<Vec<Cache<T>>>,
}

impl<T> ForwardPass<T> {
    pub fn is_traced(&self) -> bool {
        self.trace.is_some()
    }
}

/// A spec paired with parameters already checked against it.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a, T = f32> {
    spec: &'a NetworkSpec,
    params: &'a ParameterSet<T>,
}

impl<'a, T: Real> Network<'a, T> {
    pub fn new(spec: &'a NetworkSpec, params: &'a ParameterSet<T>) -> Result<Self> {
        params.validate_against(spec)?;
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    pub fn params(&self) -> &ParameterSet<T> {
        self.params
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let expected = self.spec.input().tensor_shape();
        if image.shape() != expected {
            return Err(Error::shape(format!(
                "image has shape {}, network `{}` expects {expected}",
                image.shape(),
                self.spec.name()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.run(image, false)?.descriptor)
    }

    /// Forward pass retaining what [`Network::backward`] needs.
    pub fn forward_traced(&self, image: &Tensor<T>) -> Result<ForwardPass<T>> {
        self.run(image, true)
    }

    fn run(&self, image: &Tensor<T>, retain: bool) -> Result<ForwardPass<T>> {
        self.check_image(image)?;
        let mut trace = retain.then(Vec::new);
        let mut x = image.clone();
        for (layer, p) in self.spec.layers().iter().zip(self.params.layers()) {
            let (next, cache) = match *layer {
                LayerSpec::Convolution { stride, pad, .. } => {
                    let w = p.weights.as_ref().expect("validated");
                    let y = layers::conv2d_forward(&x, w, p.bias_slice(), stride, pad)?;
                    (y, Cache::Input(x))
                }
                LayerSpec::Relu => (layers::relu_forward(&x), Cache::Input(x)),
                LayerSpec::MaxPool { window, stride } => {
                    let pooled = layers::maxpool_forward(&x, window, stride)?;
                    let cache = Cache::Pool {
                        argmax: pooled.argmax,
                        input_shape: pooled.input_shape,
                    };
                    (pooled.output, cache)
                }
                LayerSpec::Lrn { .. } => {
                    let y = layers::lrn_forward(&x, &layer.lrn_params().unwrap())?;
                    (y, Cache::Input(x))
                }
                LayerSpec::FullyConnected { .. } => {
                    let w = p.weights.as_ref().expect("validated");
                    let y = layers::fc_forward(&x, w, p.bias_slice())?;
                    (y, Cache::Input(x))
                }
            };
            if let Some(t) = trace.as_mut() {
                t.push(cache);
            }
            x = next;
        }
        Ok(ForwardPass {
            descriptor: x.into_vec(),
            trace,
        })
    }

    /// Parameter gradients of `<grad_descriptor, h(image)>` for the traced image.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_descriptor: &[T]) -> Result<Gradients<T>> {
        let trace = pass.trace.as_ref().ok_or_else(|| {
            Error::usage("backward requires a traced forward pass (use forward_traced)")
        })?;
        if trace.len() != self.spec.layers().len() {
            return Err(Error::usage("forward trace belongs to a different network"));
        }
        let d = self.spec.descriptor_len();
        if grad_descriptor.len() != d {
            return Err(Error::shape(format!(
                "descriptor gradient has length {}, expected {d}",
                grad_descriptor.len()
            )));
        }
        let mut grad = Tensor::from_vec(Shape4::new(1, d, 1, 1), grad_descriptor.to_vec())?;
        let mut out: Vec<LayerGrads<T>> = Vec::with_capacity(trace.len());
        let shapes = self.spec.shapes();

        for (i, ((layer, p), cache)) in self
            .spec
            .layers()
            .iter()
            .zip(self.params.layers())
            .zip(trace)
            .enumerate()
            .rev()
        {
            // The image needs no gradient.
            let need_input = i > 0;
            let (grad_in, lg) = match (layer, cache) {
                (&LayerSpec::Convolution { stride, pad, .. }, Cache::Input(x)) => {
                    let w = p.weights.as_ref().expect("validated");
                    let g = conv2d_backward_impl(x, w, &grad, stride, pad, need_input)?;
                    let bias = Tensor::from_vec(Shape4::new(g.bias.len(), 1, 1, 1), g.bias)?;
                    (
                        g.input,
                        LayerGrads {
                            weights: Some(g.weights),
                            bias: Some(bias),
                        },
                    )
                }
                (LayerSpec::Relu, Cache::Input(x)) => (layers::relu_backward(x, &grad)?, no_grads()),
                (LayerSpec::MaxPool { .. }, Cache::Pool { argmax, input_shape }) => (
                    layers::maxpool_backward(*input_shape, argmax, &grad)?,
                    no_grads(),
                ),
                (LayerSpec::Lrn { .. }, Cache::Input(x)) => (
                    layers::lrn_backward(x, &grad, &layer.lrn_params().unwrap())?,
                    no_grads(),
                ),
                (LayerSpec::FullyConnected { .. }, Cache::Input(x)) => {
                    let w = p.weights.as_ref().expect("validated");
                    let g = layers::fc_backward(x, w, &grad)?;
                    let bias = Tensor::from_vec(Shape4::new(g.bias.len(), 1, 1, 1), g.bias)?;
                    (
                        g.input,
                        LayerGrads {
                            weights: Some(g.weights),
                            bias: Some(bias),
                        },
                    )
                }
                _ => return Err(Error::usage("forward trace does not match layer kinds")),
            };
            debug_assert_eq!(grad_in.shape(), shapes[i]);
            grad = grad_in;
            out.push(lg);
        }
        out.reverse();
        Ok(Gradients { layers: out })
    }
}

fn no_grads<T>() -> LayerGrads<T> {
    LayerGrads {
        weights: None,
        bias: None,
    }
}

/// Descriptor of a single image; validates `params` against `spec` on each call.
pub fn network_forward<T: Real>(
    image: &Tensor<T>,
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
) -> Result<Vec<T>> {
    Network::new(spec, params)?.forward(image)
}

pub fn network_backward<T: Real>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    pass: &ForwardPass<T>,
    grad_descriptor: &[T],
) -> Result<Gradients<T>> {
    Network::new(spec, params)?.backward(pass, grad_descriptor)
}
