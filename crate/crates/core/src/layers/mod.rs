//! Forward and backward kernels for each layer kind in the embedding network.

pub mod conv;
pub mod fc;
pub mod lrn;
pub mod pool;

pub use conv::{conv2d_backward, conv2d_forward, conv2d_output_shape, ConvGrads};
pub use fc::{fc_backward, fc_forward, FcGrads};
pub use lrn::{lrn_backward, lrn_forward, LrnParams};
pub use pool::{maxpool_backward, maxpool_forward, maxpool_output_shape, Pooled};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(T::zero());
    }
    out
}

/// Passes gradient where the input was strictly positive; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "relu grad_out shape {} differs from input {}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(grad)
}
