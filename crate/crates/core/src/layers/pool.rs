use crate::error::{Error, Result};
use crate::layers::conv::output_extent;
use crate::tensor::{Real, Shape4, Tensor};

/// Max-pool output together with the flat input index each output was taken from.
#[derive(Debug, Clone)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
    pub input_shape: Shape4,
}

pub fn maxpool_output_shape(input: Shape4, window: usize, stride: usize) -> Result<Shape4> {
    if window == 0 || stride == 0 {
        return Err(Error::shape("max-pool window and stride must be at least 1"));
    }
    match (
        output_extent(input.h, window, stride, 0),
        output_extent(input.w, window, stride, 0),
    ) {
        (Some(h), Some(w)) => Ok(Shape4::new(input.n, input.c, h, w)),
        _ => Err(Error::shape(format!(
            "max-pool window {window} does not fit input {input}"
        ))),
    }
}

/// Non-overlapping or overlapping max pooling without padding. Ties resolve to
/// the lowest linear input index.
pub fn maxpool_forward<T: Real>(input: &Tensor<T>, window: usize, stride: usize) -> Result<Pooled<T>> {
    let is = input.shape();
    let os = maxpool_output_shape(is, window, stride)?;
    let mut output = Tensor::zeros(os);
    let mut argmax = Vec::with_capacity(os.len());
    let src = input.data();
    for n in 0..is.n {
        for c in 0..is.c {
            let base = is.index(n, c, 0, 0);
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let (y0, x0) = (oy * stride, ox * stride);
                    let mut best = base + y0 * is.w + x0;
                    for y in y0..y0 + window {
                        let row = base + y * is.w;
                        for idx in row + x0..row + x0 + window {
                            // strict comparison keeps the earliest (lowest) index on ties
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    argmax.push(best);
                }
            }
        }
    }
    for (o, &i) in output.data_mut().iter_mut().zip(&argmax) {
        *o = src[i];
    }
    Ok(Pooled {
        output,
        argmax,
        input_shape: is,
    })
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Real>(
    input_shape: Shape4,
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape(format!(
            "max-pool index map has {} entries but grad_out has {}",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let dst = grad.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        if i >= dst.len() {
            return Err(Error::shape(format!(
                "max-pool index {i} outside input {input_shape}"
            )));
        }
        dst[i] += g;
    }
    Ok(grad)
}
