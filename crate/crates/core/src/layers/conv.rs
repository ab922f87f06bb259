//! 2-D cross-correlation (no kernel flip) lowered to GEMM through im2col.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor};

/// Gradients of [`conv2d_forward`] with respect to its three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    input: Shape4,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.input.c * self.kernel_h * self.kernel_w
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output extent of a sliding window, or `None` if the window never fits.
pub fn output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

fn geometry(input: Shape4, weights: Shape4, bias_len: usize, stride: usize, pad: usize) -> Result<Geometry> {
    if input.c != weights.c {
        return Err(Error::shape(format!(
            "conv input has {} channels but kernel bank expects {} (input {input}, weights {weights})",
            input.c, weights.c
        )));
    }
    if bias_len != weights.n {
        return Err(Error::shape(format!(
            "conv bias has length {bias_len} but kernel bank has {} output channels",
            weights.n
        )));
    }
    if stride == 0 {
        return Err(Error::shape("conv stride must be at least 1"));
    }
    let out_h = output_extent(input.h, weights.h, stride, pad);
    let out_w = output_extent(input.w, weights.w, stride, pad);
    match (out_h, out_w) {
        (Some(out_h), Some(out_w)) => Ok(Geometry {
            input,
            kernel_h: weights.h,
            kernel_w: weights.w,
            stride,
            pad,
            out_h,
            out_w,
        }),
        _ => Err(Error::shape(format!(
            "conv kernel {}x{} does not fit input height {} width {} with pad {pad}",
            weights.h, weights.w, input.h, input.w
        ))),
    }
}

/// Unrolls one batch item into a `(C*KH*KW) x (OH*OW)` row-major matrix.
fn im2col<T: Real>(g: &Geometry, image: &[T], col: &mut [T]) {
    let plane = g.out_plane();
    let (h, w) = (g.input.h as isize, g.input.w as isize);
    let mut row = 0;
    for c in 0..g.input.c {
        let channel = &image[c * g.input.plane()..(c + 1) * g.input.plane()];
        for kh in 0..g.kernel_h {
            for kw in 0..g.kernel_w {
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + kh) as isize - g.pad as isize;
                    let dst_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= h {
                        dst_row.fill(T::zero());
                        continue;
                    }
                    let src = &channel[iy as usize * g.input.w..(iy as usize + 1) * g.input.w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kw) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= w {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a column matrix back onto an image; adjoint of [`im2col`].
fn col2im<T: Real>(g: &Geometry, col: &[T], image: &mut [T]) {
    let plane = g.out_plane();
    let (h, w) = (g.input.h as isize, g.input.w as isize);
    let mut row = 0;
    for c in 0..g.input.c {
        let channel = &mut image[c * g.input.plane()..(c + 1) * g.input.plane()];
        for kh in 0..g.kernel_h {
            for kw in 0..g.kernel_w {
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + kh) as isize - g.pad as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut channel[iy as usize * g.input.w..(iy as usize + 1) * g.input.w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kw) as isize - g.pad as isize;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Output shape of a convolution, validating operand agreement.
pub fn conv2d_output_shape(
    input: Shape4,
    weights: Shape4,
    stride: usize,
    pad: usize,
) -> Result<Shape4> {
    let g = geometry(input, weights, weights.n, stride, pad)?;
    Ok(Shape4::new(input.n, weights.n, g.out_h, g.out_w))
}

/// Zero-padded cross-correlation of `input` (N,C,H,W) with `weights` (O,C,KH,KW)
/// plus a per-output-channel bias.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = geometry(input.shape(), weights.shape(), bias.len(), stride, pad)?;
    let out_c = weights.shape().n;
    let out_shape = Shape4::new(input.shape().n, out_c, g.out_h, g.out_w);
    let mut out = Tensor::zeros(out_shape);
    let (k, p) = (g.patch_len(), g.out_plane());
    let mut col = vec![T::zero(); k * p];
    for n in 0..input.shape().n {
        im2col(&g, input.item(n), &mut col);
        let dst = &mut out.data_mut()[n * out_c * p..(n + 1) * out_c * p];
        for (o, &b) in bias.iter().enumerate() {
            dst[o * p..(o + 1) * p].fill(b);
        }
        T::gemm(
            out_c,
            k,
            p,
            T::one(),
            weights.data(),
            (k as isize, 1),
            &col,
            (p as isize, 1),
            T::one(),
            dst,
            (p as isize, 1),
        );
    }
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`] given the cotangent `grad_out`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads<T>> {
    conv2d_backward_impl(input, weights, grad_out, stride, pad, true)
}

/// As [`conv2d_backward`]; with `need_input == false` the input gradient is
/// left as zeros and its GEMM skipped (first layer of a network).
pub(crate) fn conv2d_backward_impl<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let ws = weights.shape();
    let g = geometry(input.shape(), ws, ws.n, stride, pad)?;
    let expected = Shape4::new(input.shape().n, ws.n, g.out_h, g.out_w);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "conv grad_out has shape {} but forward output is {expected}",
            grad_out.shape()
        )));
    }
    let out_c = ws.n;
    let (k, p) = (g.patch_len(), g.out_plane());
    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_weights = Tensor::zeros(ws);
    let mut grad_bias = vec![T::zero(); out_c];
    let mut col = vec![T::zero(); k * p];
    let mut grad_col = vec![T::zero(); k * p];
    let item_len = input.shape().item_len();

    for n in 0..input.shape().n {
        let go = grad_out.item(n);
        for (o, gb) in grad_bias.iter_mut().enumerate() {
            *gb += go[o * p..(o + 1) * p].iter().copied().sum::<T>();
        }
        im2col(&g, input.item(n), &mut col);
        // dW (O x K) += dY (O x P) * col^T (P x K)
        T::gemm(
            out_c,
            p,
            k,
            T::one(),
            go,
            (p as isize, 1),
            &col,
            (1, p as isize),
            T::one(),
            grad_weights.data_mut(),
            (k as isize, 1),
        );
        if !need_input {
            continue;
        }
        // dcol (K x P) = W^T (K x O) * dY (O x P)
        T::gemm(
            k,
            out_c,
            p,
            T::one(),
            weights.data(),
            (1, k as isize),
            go,
            (p as isize, 1),
            T::zero(),
            &mut grad_col,
            (p as isize, 1),
        );
        col2im(
            &g,
            &grad_col,
            &mut grad_input.data_mut()[n * item_len..(n + 1) * item_len],
        );
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}
